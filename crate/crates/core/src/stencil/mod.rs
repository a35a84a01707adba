//! Fourth-order flux, gradient and divergence operators built from weighted
//! least-squares stencils, with affine boundary data.

mod regular;
#[cfg(test)]
mod tests;
pub mod wls;

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{BoundaryPiece, BoundaryTag, CellKind, CutCellGrid, FaceGeom, MultiIndex, Point};
use crate::linear_solve::SparseMatrix;
use wls::{basis, build_weight, fit_with_growth, solve_wls, Neighborhood, BASE_RADIUS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StencilError {
    #[error("{target}: only {rows} equations within radius {radius}")]
    Starved { target: String, radius: usize, rows: usize },
    #[error("{target}: least-squares system has rank {rank} < {needed}")]
    RankDeficient { target: String, rank: usize, needed: usize },
    #[error("singular value decomposition failed for {0}")]
    Svd(String),
}

/// Boundary condition for a scalar operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarBc {
    /// Prescribed value.
    Dirichlet,
    /// Prescribed outward normal derivative.
    Neumann,
}

/// Boundary condition for the velocity divergence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VelocityBc {
    /// Both components prescribed (inflow, moving walls).
    Velocity,
    /// Only `u·n` prescribed (walls).
    NormalFlow,
    /// Nothing prescribed (outflow).
    Open,
}

/// One condition per boundary tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BcSpec<T> {
    kinds: [T; 5],
}

pub type ScalarBcSpec = BcSpec<ScalarBc>;
pub type VelocityBcSpec = BcSpec<VelocityBc>;

fn tag_slot(tag: BoundaryTag) -> usize {
    match tag {
        BoundaryTag::Eb => 0,
        BoundaryTag::XLo => 1,
        BoundaryTag::XHi => 2,
        BoundaryTag::YLo => 3,
        BoundaryTag::YHi => 4,
    }
}

impl<T: Copy> BcSpec<T> {
    pub fn uniform(kind: T) -> Self {
        BcSpec { kinds: [kind; 5] }
    }

    pub fn with(mut self, tag: BoundaryTag, kind: T) -> Self {
        self.kinds[tag_slot(tag)] = kind;
        self
    }

    pub fn get(&self, tag: BoundaryTag) -> T {
        self.kinds[tag_slot(tag)]
    }
}

/// What a boundary data entry holds; values are averages over the piece.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotKind {
    /// `⟨g⟩` of a scalar condition.
    Scalar,
    /// `⟨g_d⟩` of a prescribed velocity.
    VelocityComponent(usize),
    /// `⟨g·n⟩` of a prescribed velocity.
    NormalFlux,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DataSlot {
    pub piece: usize,
    pub kind: SlotKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Laplacian,
    Gradient(usize),
    Divergence,
}

/// `Op(u, g) = A u + B g`.
#[derive(Clone, Debug)]
pub struct AffineOperator {
    pub kind: OperatorKind,
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    pub slots: Vec<DataSlot>,
}

/// Boundary data callback: `(tag, x, n) -> value`; scalar conditions read component 0.
pub type BoundaryFn<'a> = dyn Fn(BoundaryTag, Point, Point) -> [f64; 2] + Sync + 'a;

impl AffineOperator {
    pub fn apply(&self, u: &[f64], g: &[f64]) -> Vec<f64> {
        let mut out = self.a.matvec(u);
        if !self.slots.is_empty() {
            for (o, bg) in out.iter_mut().zip(self.b.matvec(g)) {
                *o += bg;
            }
        }
        out
    }

    /// `B g` alone.
    pub fn apply_data(&self, g: &[f64]) -> Vec<f64> {
        if self.slots.is_empty() {
            return vec![0.0; self.a.nrows()];
        }
        self.b.matvec(g)
    }

    pub fn zero_data(&self) -> Vec<f64> {
        vec![0.0; self.slots.len()]
    }

    /// Average boundary data into the operator's slots.
    pub fn boundary_data(&self, grid: &CutCellGrid, f: &BoundaryFn) -> Vec<f64> {
        self.slots
            .par_iter()
            .map(|slot| {
                let piece = &grid.pieces()[slot.piece];
                let tag = piece.tag;
                match slot.kind {
                    SlotKind::Scalar => piece.average(|x, n| f(tag, x, n)[0]),
                    SlotKind::VelocityComponent(d) => piece.average(|x, n| f(tag, x, n)[d]),
                    SlotKind::NormalFlux => piece.average(|x, n| {
                        let g = f(tag, x, n);
                        g[0] * n[0] + g[1] * n[1]
                    }),
                }
            })
            .collect()
    }

    /// Triplet dump with columns `matrix,row,col,value`.
    pub fn write_triplets_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "matrix,row,col,value")?;
        for (i, j, v) in self.a.triplets() {
            writeln!(w, "A,{i},{j},{v:e}")?;
        }
        for (i, j, v) in self.b.triplets() {
            writeln!(w, "B,{i},{j},{v:e}")?;
        }
        Ok(())
    }
}

/// A linear combination of unknowns and boundary data slots.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StencilRow {
    pub cells: Vec<(usize, f64)>,
    pub bc: Vec<(usize, f64)>,
}

struct SlotTable {
    slots: Vec<DataSlot>,
    index: HashMap<DataSlot, usize>,
}

impl SlotTable {
    fn new(slots: Vec<DataSlot>) -> Self {
        let index = slots.iter().enumerate().map(|(k, s)| (*s, k)).collect();
        SlotTable { slots, index }
    }

    fn of(&self, piece: usize, kind: SlotKind) -> usize {
        self.index[&DataSlot { piece, kind }]
    }
}

fn face_name(f: &FaceGeom) -> String {
    format!("{}-face ({}, {})", if f.axis == 0 { "x" } else { "y" }, f.index[0], f.index[1])
}

fn piece_name(grid: &CutCellGrid, p: usize) -> String {
    let piece = &grid.pieces()[p];
    let [i, j] = grid.cell(piece.owner).ij;
    format!("{} boundary piece {p} of cell ({i}, {j})", piece.tag.name())
}

fn cell_name(grid: &CutCellGrid, v: usize) -> String {
    let [i, j] = grid.cell(v).ij;
    format!("cell ({i}, {j})")
}

/// Scalar least-squares stencil with rows from cells and scalar boundary conditions.
fn scalar_stencil(
    grid: &CutCellGrid,
    center: Point,
    seeds: &[usize],
    bc: &ScalarBcSpec,
    slots: &SlotTable,
    functional: &dyn Fn(&[MultiIndex]) -> Vec<f64>,
    target: &dyn Fn() -> String,
) -> Result<StencilRow, StencilError> {
    fit_with_growth(grid, center, seeds, BASE_RADIUS, &|_| true, target, &|nb| {
        scalar_fit(grid, center, nb, bc, slots, functional, target)
    })
}

fn scalar_fit(
    grid: &CutCellGrid,
    center: Point,
    nb: &Neighborhood,
    bc: &ScalarBcSpec,
    slots: &SlotTable,
    functional: &dyn Fn(&[MultiIndex]) -> Vec<f64>,
    target: &dyn Fn() -> String,
) -> Result<StencilRow, StencilError> {
    let basis = basis();
    let np = basis.len();
    let h = grid.h();
    let mut m = Vec::with_capacity((nb.cells.len() + nb.pieces.len()) * np);
    let mut w = Vec::new();
    for &c in &nb.cells {
        m.extend(wls::cell_row(grid, c, center, &basis));
        w.push(build_weight(grid.cell_center(c), center, h));
    }
    let mut factors = Vec::new();
    for &p in &nb.pieces {
        let piece = &grid.pieces()[p];
        match bc.get(piece.tag) {
            ScalarBc::Dirichlet => {
                m.extend(wls::dirichlet_row(grid, piece, center, &basis));
                factors.push(1.0);
            }
            ScalarBc::Neumann => {
                m.extend(wls::neumann_row(grid, piece, center, &basis));
                factors.push(h);
            }
        }
        w.push(1.0);
    }
    let s = solve_wls(&m, np, &w, &functional(&basis), target)?;
    let nc = nb.cells.len();
    Ok(StencilRow {
        cells: nb.cells.iter().copied().zip(s[..nc].iter().copied()).collect(),
        bc: nb
            .pieces
            .iter()
            .zip(&s[nc..])
            .zip(&factors)
            .map(|((&p, &sv), &fac)| (slots.of(p, SlotKind::Scalar), sv * fac))
            .collect(),
    })
}

fn scalar_slots(grid: &CutCellGrid) -> SlotTable {
    SlotTable::new(
        (0..grid.pieces().len())
            .map(|piece| DataSlot {
                piece,
                kind: SlotKind::Scalar,
            })
            .collect(),
    )
}

/// Stencil of the `+axis` gradient flux through an interior face.
pub fn face_flux_stencil(grid: &CutCellGrid, face: &FaceGeom, bc: &ScalarBcSpec) -> Result<StencilRow, StencilError> {
    let slots = scalar_slots(grid);
    face_flux_stencil_in(grid, face, bc, &slots)
}

fn face_flux_stencil_in(
    grid: &CutCellGrid,
    face: &FaceGeom,
    bc: &ScalarBcSpec,
    slots: &SlotTable,
) -> Result<StencilRow, StencilError> {
    if let Some(line) = regular::face_line(grid, face) {
        return Ok(StencilRow {
            cells: regular::weights(&line, &regular::FLUX_WEIGHTS, 1.0),
            bc: Vec::new(),
        });
    }
    let center = face.center;
    scalar_stencil(
        grid,
        center,
        &face.cells,
        bc,
        slots,
        &|basis| wls::face_flux_functional(grid, &face.moments, face.axis, center, basis),
        &|| face_name(face),
    )
}

fn accumulate(triplets: &mut Vec<(usize, usize, f64)>, row: usize, scale: f64, entries: &[(usize, f64)]) {
    triplets.extend(entries.iter().map(|&(c, v)| (row, c, scale * v)));
}

/// `(1/V_i) Σ_faces ∫ ∇u·n dA`.
pub fn assemble_laplacian(grid: &CutCellGrid, bc: &ScalarBcSpec) -> Result<AffineOperator, StencilError> {
    let n = grid.num_valid();
    let slots = scalar_slots(grid);
    let face_rows: Vec<StencilRow> = grid
        .faces()
        .par_iter()
        .map(|f| face_flux_stencil_in(grid, f, bc, &slots))
        .collect::<Result<_, _>>()?;
    let piece_rows: Vec<StencilRow> = (0..grid.pieces().len())
        .into_par_iter()
        .map(|p| {
            let piece = &grid.pieces()[p];
            match bc.get(piece.tag) {
                ScalarBc::Neumann => Ok(StencilRow {
                    cells: Vec::new(),
                    bc: vec![(slots.of(p, SlotKind::Scalar), piece.area)],
                }),
                ScalarBc::Dirichlet => {
                    let center = grid.cell_center(piece.owner);
                    scalar_stencil(
                        grid,
                        center,
                        &[piece.owner],
                        bc,
                        &slots,
                        &|basis| wls::piece_flux_functional(grid, piece, center, basis),
                        &|| piece_name(grid, p),
                    )
                }
            }
        })
        .collect::<Result<_, _>>()?;
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    for (f, row) in grid.faces().iter().zip(&face_rows) {
        let [l, r] = f.cells;
        for (cell, sign) in [(l, 1.0), (r, -1.0)] {
            let s = sign / grid.cell(cell).volume;
            accumulate(&mut ta, cell, s, &row.cells);
            accumulate(&mut tb, cell, s, &row.bc);
        }
    }
    for (piece, row) in grid.pieces().iter().zip(&piece_rows) {
        let s = 1.0 / grid.cell(piece.owner).volume;
        accumulate(&mut ta, piece.owner, s, &row.cells);
        accumulate(&mut tb, piece.owner, s, &row.bc);
    }
    Ok(AffineOperator {
        kind: OperatorKind::Laplacian,
        a: SparseMatrix::from_triplets(n, n, ta),
        b: SparseMatrix::from_triplets(n, slots.slots.len(), tb),
        slots: slots.slots,
    })
}

/// Cell-average `∂_d u`.
pub fn assemble_gradient(grid: &CutCellGrid, bc: &ScalarBcSpec, d: usize) -> Result<AffineOperator, StencilError> {
    assert!(d < 2);
    let n = grid.num_valid();
    let slots = scalar_slots(grid);
    let rows: Vec<StencilRow> = (0..n)
        .into_par_iter()
        .map(|v| {
            if let Some(line) = regular::cell_line(grid, v, d) {
                return Ok(StencilRow {
                    cells: regular::weights(&line, &regular::GRADIENT_WEIGHTS, 1.0 / grid.h()),
                    bc: Vec::new(),
                });
            }
            let center = grid.cell_center(v);
            scalar_stencil(
                grid,
                center,
                &[v],
                bc,
                &slots,
                &|basis| wls::cell_gradient_functional(grid, v, d, center, basis),
                &|| cell_name(grid, v),
            )
        })
        .collect::<Result<_, _>>()?;
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    for (v, row) in rows.iter().enumerate() {
        accumulate(&mut ta, v, 1.0, &row.cells);
        accumulate(&mut tb, v, 1.0, &row.bc);
    }
    Ok(AffineOperator {
        kind: OperatorKind::Gradient(d),
        a: SparseMatrix::from_triplets(n, n, ta),
        b: SparseMatrix::from_triplets(n, slots.slots.len(), tb),
        slots: slots.slots,
    })
}

fn velocity_slots(grid: &CutCellGrid, bc: &VelocityBcSpec) -> SlotTable {
    let mut slots = Vec::new();
    for (piece, p) in grid.pieces().iter().enumerate() {
        match bc.get(p.tag) {
            VelocityBc::Velocity => {
                slots.push(DataSlot {
                    piece,
                    kind: SlotKind::NormalFlux,
                });
                for d in 0..2 {
                    slots.push(DataSlot {
                        piece,
                        kind: SlotKind::VelocityComponent(d),
                    });
                }
            }
            VelocityBc::NormalFlow => slots.push(DataSlot {
                piece,
                kind: SlotKind::NormalFlux,
            }),
            VelocityBc::Open => {}
        }
    }
    SlotTable::new(slots)
}

/// Velocity-flux stencil where `functional[d]` is the weight functional on component `d`
/// (columns `d * n + cell`).
fn velocity_stencil(
    grid: &CutCellGrid,
    center: Point,
    seeds: &[usize],
    start_radius: usize,
    bc: &VelocityBcSpec,
    slots: &SlotTable,
    functional: &dyn Fn(&[MultiIndex]) -> [Option<Vec<f64>>; 2],
    target: &dyn Fn() -> String,
) -> Result<StencilRow, StencilError> {
    let has_rows = |p: &BoundaryPiece| bc.get(p.tag) != VelocityBc::Open;
    fit_with_growth(grid, center, seeds, start_radius, &has_rows, target, &|nb| {
        velocity_fit(grid, center, nb, bc, slots, functional, target)
    })
}

fn velocity_fit(
    grid: &CutCellGrid,
    center: Point,
    nb: &Neighborhood,
    bc: &VelocityBcSpec,
    slots: &SlotTable,
    functional: &dyn Fn(&[MultiIndex]) -> [Option<Vec<f64>>; 2],
    target: &dyn Fn() -> String,
) -> Result<StencilRow, StencilError> {
    let basis = basis();
    let fun = functional(&basis);
    let coupled = nb
        .pieces
        .iter()
        .any(|&p| bc.get(grid.pieces()[p].tag) == VelocityBc::NormalFlow);
    if coupled {
        joint_velocity_stencil(grid, center, nb, bc, slots, &basis, fun, target)
    } else {
        let n = grid.num_valid();
        let mut out = StencilRow::default();
        for (d, b) in fun.into_iter().enumerate() {
            let Some(b) = b else { continue };
            let np = basis.len();
            let h = grid.h();
            let mut m = Vec::new();
            let mut w = Vec::new();
            for &c in &nb.cells {
                m.extend(wls::cell_row(grid, c, center, &basis));
                w.push(build_weight(grid.cell_center(c), center, h));
            }
            for &p in &nb.pieces {
                m.extend(wls::dirichlet_row(grid, &grid.pieces()[p], center, &basis));
                w.push(1.0);
            }
            let s = solve_wls(&m, np, &w, &b, target)?;
            let nc = nb.cells.len();
            out.cells.extend(nb.cells.iter().zip(&s[..nc]).map(|(&c, &sv)| (d * n + c, sv)));
            out.bc.extend(
                nb.pieces
                    .iter()
                    .zip(&s[nc..])
                    .map(|(&p, &sv)| (slots.of(p, SlotKind::VelocityComponent(d)), sv)),
            );
        }
        Ok(out)
    }
}

#[allow(clippy::too_many_arguments)]
fn joint_velocity_stencil(
    grid: &CutCellGrid,
    center: Point,
    nb: &Neighborhood,
    bc: &VelocityBcSpec,
    slots: &SlotTable,
    basis: &[MultiIndex],
    fun: [Option<Vec<f64>>; 2],
    target: &dyn Fn() -> String,
) -> Result<StencilRow, StencilError> {
    let n = grid.num_valid();
    let np = basis.len();
    let nj = 2 * np;
    let h = grid.h();
    let mut m = Vec::new();
    let mut w = Vec::new();
    // (column in operator space or slot index, is_slot)
    let mut meaning: Vec<(usize, bool)> = Vec::new();
    let zeros = vec![0.0; np];
    for &c in &nb.cells {
        let r = wls::cell_row(grid, c, center, basis);
        let wt = build_weight(grid.cell_center(c), center, h);
        for d in 0..2 {
            if d == 0 {
                m.extend(&r);
                m.extend(&zeros);
            } else {
                m.extend(&zeros);
                m.extend(&r);
            }
            w.push(wt);
            meaning.push((d * n + c, false));
        }
    }
    for &p in &nb.pieces {
        let piece = &grid.pieces()[p];
        match bc.get(piece.tag) {
            VelocityBc::Velocity => {
                let r = wls::dirichlet_row(grid, piece, center, basis);
                for d in 0..2 {
                    if d == 0 {
                        m.extend(&r);
                        m.extend(&zeros);
                    } else {
                        m.extend(&zeros);
                        m.extend(&r);
                    }
                    w.push(1.0);
                    meaning.push((slots.of(p, SlotKind::VelocityComponent(d)), true));
                }
            }
            VelocityBc::NormalFlow => {
                let [r0, r1] = wls::normal_flow_row(grid, piece, center, basis);
                m.extend(r0);
                m.extend(r1);
                w.push(1.0);
                meaning.push((slots.of(p, SlotKind::NormalFlux), true));
            }
            VelocityBc::Open => unreachable!("open pieces contribute no rows"),
        }
    }
    let mut b = Vec::with_capacity(nj);
    for f in fun {
        b.extend(f.unwrap_or_else(|| vec![0.0; np]));
    }
    let s = solve_wls(&m, nj, &w, &b, target)?;
    let mut out = StencilRow::default();
    for ((idx, is_slot), sv) in meaning.into_iter().zip(s) {
        if is_slot {
            out.bc.push((idx, sv));
        } else {
            out.cells.push((idx, sv));
        }
    }
    Ok(out)
}

/// Stencil of the `+axis` velocity flux through an interior face.
fn face_velocity_flux(
    grid: &CutCellGrid,
    face: &FaceGeom,
    bc: &VelocityBcSpec,
    slots: &SlotTable,
) -> Result<StencilRow, StencilError> {
    let n = grid.num_valid();
    if let Some(line) = regular::face_line(grid, face) {
        let cells = regular::weights(&line, &regular::FACE_VALUE_WEIGHTS, grid.h())
            .into_iter()
            .map(|(c, v)| (face.axis * n + c, v))
            .collect();
        return Ok(StencilRow { cells, bc: Vec::new() });
    }
    let center = face.center;
    velocity_stencil(
        grid,
        center,
        &face.cells,
        BASE_RADIUS,
        bc,
        slots,
        &|basis| {
            let b = wls::face_value_functional(grid, &face.moments, center, basis);
            if face.axis == 0 {
                [Some(b), None]
            } else {
                [None, Some(b)]
            }
        },
        &|| face_name(face),
    )
}

/// Cell-average divergence of `(u, v)`; columns are `[u; v]`.
pub fn assemble_divergence(grid: &CutCellGrid, bc: &VelocityBcSpec) -> Result<AffineOperator, StencilError> {
    let n = grid.num_valid();
    let slots = velocity_slots(grid, bc);
    let face_rows: Vec<StencilRow> = grid
        .faces()
        .par_iter()
        .map(|f| face_velocity_flux(grid, f, bc, &slots))
        .collect::<Result<_, _>>()?;
    let piece_rows: Vec<StencilRow> = (0..grid.pieces().len())
        .into_par_iter()
        .map(|p| {
            let piece = &grid.pieces()[p];
            match bc.get(piece.tag) {
                VelocityBc::Velocity | VelocityBc::NormalFlow => Ok(StencilRow {
                    cells: Vec::new(),
                    bc: vec![(slots.of(p, SlotKind::NormalFlux), piece.area)],
                }),
                VelocityBc::Open => {
                    let center = grid.cell_center(piece.owner);
                    velocity_stencil(
                        grid,
                        center,
                        &[piece.owner],
                        BASE_RADIUS + 1,
                        bc,
                        &slots,
                        &|basis| wls::piece_divergence_functional(grid, piece, center, basis).map(Some),
                        &|| piece_name(grid, p),
                    )
                }
            }
        })
        .collect::<Result<_, _>>()?;
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    for (f, row) in grid.faces().iter().zip(&face_rows) {
        let [l, r] = f.cells;
        for (cell, sign) in [(l, 1.0), (r, -1.0)] {
            let s = sign / grid.cell(cell).volume;
            accumulate(&mut ta, cell, s, &row.cells);
            accumulate(&mut tb, cell, s, &row.bc);
        }
    }
    for (piece, row) in grid.pieces().iter().zip(&piece_rows) {
        let s = 1.0 / grid.cell(piece.owner).volume;
        accumulate(&mut ta, piece.owner, s, &row.cells);
        accumulate(&mut tb, piece.owner, s, &row.bc);
    }
    Ok(AffineOperator {
        kind: OperatorKind::Divergence,
        a: SparseMatrix::from_triplets(n, 2 * n, ta),
        b: SparseMatrix::from_triplets(n, slots.slots.len(), tb),
        slots: slots.slots,
    })
}

/// Boundary conditions for [`assemble_operator`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OperatorBc {
    Scalar(ScalarBcSpec),
    Velocity(VelocityBcSpec),
}

/// Assemble any operator kind; scalar kinds need scalar conditions and the divergence velocity ones.
pub fn assemble_operator(kind: OperatorKind, grid: &CutCellGrid, bc: &OperatorBc) -> Result<AffineOperator, StencilError> {
    match (kind, bc) {
        (OperatorKind::Laplacian, OperatorBc::Scalar(s)) => assemble_laplacian(grid, s),
        (OperatorKind::Gradient(d), OperatorBc::Scalar(s)) => assemble_gradient(grid, s, d),
        (OperatorKind::Divergence, OperatorBc::Velocity(v)) => assemble_divergence(grid, v),
        (kind, bc) => panic!("{kind:?} cannot take boundary conditions {bc:?}"),
    }
}

/// Fraction of interior faces using the closed-form Cartesian stencil.
pub fn regular_face_fraction(grid: &CutCellGrid) -> f64 {
    let k = grid.faces().iter().filter(|f| regular::face_line(grid, f).is_some()).count();
    k as f64 / grid.faces().len().max(1) as f64
}

/// True if cell `v` and its radius-3 neighborhood are regular and boundary-free.
pub fn is_regular_interior(grid: &CutCellGrid, v: usize) -> bool {
    grid.cell(v).kind == CellKind::Regular && regular::cell_line(grid, v, 0).is_some()
}
