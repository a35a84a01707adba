use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use super::quadrature::{
    box_sign, cut_box_quadrature, segment_quadrature, BoundaryNode, BoxSign, QuadNode,
    TENSOR_ORDER,
};
use super::{GeometryError, LevelSet, MomentSet, Point};

/// Cells below this volume fraction are dropped.
pub const KAPPA_MIN: f64 = 1e-12;
/// Faces below this fraction of `h` carry no flux.
const AREA_MIN: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Regular,
    Irregular,
    Invalid,
}

/// Which part of the domain boundary a piece belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Eb,
    XLo,
    XHi,
    YLo,
    YHi,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 5] = [
        BoundaryTag::Eb,
        BoundaryTag::XLo,
        BoundaryTag::XHi,
        BoundaryTag::YLo,
        BoundaryTag::YHi,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BoundaryTag::Eb => "eb",
            BoundaryTag::XLo => "xlo",
            BoundaryTag::XHi => "xhi",
            BoundaryTag::YLo => "ylo",
            BoundaryTag::YHi => "yhi",
        }
    }
}

/// Cartesian index space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Point,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, h: f64, origin: Point) -> Self {
        GridSpec { nx, ny, h, origin }
    }

    /// Unit square with `n x n` cells.
    pub fn unit_square(n: usize) -> Self {
        GridSpec::new(n, n, 1.0 / n as f64, [0.0, 0.0])
    }

    pub fn cell_lo(&self, i: usize, j: usize) -> Point {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
        ]
    }

    pub fn linear(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

#[derive(Clone, Debug)]
pub struct GridOptions {
    /// Degree of stored moments.
    pub degree: u32,
    /// Drop fluid regions not face-connected to the largest one.
    pub largest_component_only: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            degree: 5,
            largest_component_only: false,
        }
    }
}

/// Geometry of one valid cell.
#[derive(Clone, Debug)]
pub struct CellGeom {
    pub ij: [usize; 2],
    pub kind: CellKind,
    pub kappa: f64,
    pub volume: f64,
    /// Volume moments about the uncut cell center.
    pub moments: MomentSet,
    /// Volume quadrature for cut cells.
    pub quad: Option<Vec<QuadNode>>,
    /// Boundary pieces owned by this cell.
    pub pieces: Vec<usize>,
}

/// Geometry of a grid face shared by two valid cells.
#[derive(Clone, Debug)]
pub struct FaceGeom {
    /// Normal direction (0 for x-faces).
    pub axis: usize,
    /// `(i, j)` such that the face lies at `x = x0 + i h` (x-face) or `y = y0 + j h`.
    pub index: [usize; 2],
    /// Valid-cell indices on the low and high side.
    pub cells: [usize; 2],
    pub area: f64,
    pub center: Point,
    /// Face moments about the uncut face center.
    pub moments: MomentSet,
    /// Quadrature for cut faces.
    pub quad: Option<Vec<QuadNode>>,
}

impl FaceGeom {
    pub fn is_full(&self) -> bool {
        self.quad.is_none()
    }
}

/// A piece of the domain boundary inside one valid cell.
#[derive(Clone, Debug)]
pub struct BoundaryPiece {
    pub owner: usize,
    pub tag: BoundaryTag,
    pub nodes: Vec<BoundaryNode>,
    pub area: f64,
    pub centroid: Point,
    /// `∫ (x - x̄)^q dA` about the owner cell center.
    pub moments: MomentSet,
    /// `∫ (x - x̄)^q n_d dA` about the owner cell center.
    pub normal_moments: [MomentSet; 2],
}

impl BoundaryPiece {
    fn from_nodes(owner: usize, tag: BoundaryTag, nodes: Vec<BoundaryNode>, center: Point, degree: u32) -> Self {
        let area: f64 = nodes.iter().map(|n| n.w).sum();
        let centroid = [
            nodes.iter().map(|n| n.w * n.x[0]).sum::<f64>() / area,
            nodes.iter().map(|n| n.w * n.x[1]).sum::<f64>() / area,
        ];
        let moments = MomentSet::from_samples(center, degree, nodes.iter().map(|n| (n.x, n.w)));
        let normal_moments = [0, 1].map(|d| {
            MomentSet::from_samples(center, degree, nodes.iter().map(|n| (n.x, n.w * n.n[d])))
        });
        BoundaryPiece {
            owner,
            tag,
            nodes,
            area,
            centroid,
            moments,
            normal_moments,
        }
    }

    /// Area-weighted mean outward normal.
    pub fn mean_normal(&self) -> Point {
        [
            self.normal_moments[0].measure() / self.area,
            self.normal_moments[1].measure() / self.area,
        ]
    }

    /// Face average of `f` over the piece.
    pub fn average<F: Fn(Point, Point) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().map(|n| n.w * f(n.x, n.n)).sum::<f64>() / self.area
    }
}

const NONE: u32 = u32::MAX;

/// Cartesian grid cut by an implicit boundary.
pub struct CutCellGrid {
    pub spec: GridSpec,
    pub degree: u32,
    geometry: Arc<dyn LevelSet>,
    kinds: Vec<CellKind>,
    index: Vec<u32>,
    cells: Vec<CellGeom>,
    faces: Vec<FaceGeom>,
    face_lookup: [Vec<u32>; 2],
    pieces: Vec<BoundaryPiece>,
}

impl std::fmt::Debug for CutCellGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CutCellGrid")
            .field("spec", &self.spec)
            .field("valid", &self.cells.len())
            .field("irregular", &self.irregular_count())
            .field("faces", &self.faces.len())
            .field("pieces", &self.pieces.len())
            .finish()
    }
}

/// Per-cell result of classification.
struct Classified {
    kind: CellKind,
    volume: f64,
    quad: Option<super::quadrature::CellQuadrature>,
}

impl CutCellGrid {
    /// Classify cells and compute all moments.
    pub fn build(
        geometry: Arc<dyn LevelSet>,
        spec: GridSpec,
        options: &GridOptions,
    ) -> Result<Self, GeometryError> {
        if spec.nx < 8 || spec.ny < 8 {
            return Err(GeometryError::InvalidGrid(format!(
                "need at least 8 cells per direction, got {}x{}",
                spec.nx, spec.ny
            )));
        }
        if !(spec.h > 0.0) {
            return Err(GeometryError::InvalidGrid(format!("cell size {} must be positive", spec.h)));
        }
        let classified = Self::classify(geometry.as_ref(), &spec)?;
        let mut kinds: Vec<CellKind> = classified.iter().map(|c| c.kind).collect();
        let mut grid = Self::assemble(geometry.clone(), spec, options.degree, &kinds, &classified)?;
        if options.largest_component_only {
            let keep = grid.largest_component();
            if keep.len() < grid.cells.len() {
                let mut retained = vec![false; grid.cells.len()];
                for c in keep {
                    retained[c] = true;
                }
                for (v, cell) in grid.cells.iter().enumerate() {
                    if !retained[v] {
                        kinds[spec.linear(cell.ij[0], cell.ij[1])] = CellKind::Invalid;
                    }
                }
                grid = Self::assemble(geometry, spec, options.degree, &kinds, &classified)?;
            }
        }
        Ok(grid)
    }

    fn classify(geometry: &dyn LevelSet, spec: &GridSpec) -> Result<Vec<Classified>, GeometryError> {
        let h = spec.h;
        (0..spec.nx * spec.ny)
            .into_par_iter()
            .map(|lin| {
                let (i, j) = (lin % spec.nx, lin / spec.nx);
                let lo = spec.cell_lo(i, j);
                let hi = [lo[0] + h, lo[1] + h];
                let wrap = |e: GeometryError| GeometryError::Cell {
                    i,
                    j,
                    source: Box::new(e),
                };
                match box_sign(geometry, lo, hi).map_err(wrap)? {
                    BoxSign::Fluid => Ok(Classified {
                        kind: CellKind::Regular,
                        volume: h * h,
                        quad: None,
                    }),
                    BoxSign::Solid => Ok(Classified {
                        kind: CellKind::Invalid,
                        volume: 0.0,
                        quad: None,
                    }),
                    BoxSign::Mixed => {
                        let q = cut_box_quadrature(geometry, lo, hi).map_err(wrap)?;
                        let volume = q.volume_measure();
                        let kappa = volume / (h * h);
                        Ok(if kappa < KAPPA_MIN {
                            Classified {
                                kind: CellKind::Invalid,
                                volume: 0.0,
                                quad: None,
                            }
                        } else if kappa > 1.0 - KAPPA_MIN {
                            Classified {
                                kind: CellKind::Regular,
                                volume: h * h,
                                quad: None,
                            }
                        } else {
                            Classified {
                                kind: CellKind::Irregular,
                                volume,
                                quad: Some(q),
                            }
                        })
                    }
                }
            })
            .collect()
    }

    fn assemble(
        geometry: Arc<dyn LevelSet>,
        spec: GridSpec,
        degree: u32,
        kinds: &[CellKind],
        classified: &[Classified],
    ) -> Result<Self, GeometryError> {
        let h = spec.h;
        let mut index = vec![NONE; spec.nx * spec.ny];
        let mut cells = Vec::new();
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let lin = spec.linear(i, j);
                let kind = kinds[lin];
                if kind == CellKind::Invalid {
                    continue;
                }
                index[lin] = cells.len() as u32;
                let center = spec.cell_center(i, j);
                let c = &classified[lin];
                let (volume, moments, quad) = match (kind, &c.quad) {
                    (CellKind::Irregular, Some(q)) => (
                        c.volume,
                        MomentSet::from_samples(center, degree, q.volume.iter().map(|n| (n.x, n.w))),
                        Some(q.volume.clone()),
                    ),
                    _ => (h * h, MomentSet::rectangle(center, [h, h], degree), None),
                };
                cells.push(CellGeom {
                    ij: [i, j],
                    kind,
                    kappa: volume / (h * h),
                    volume,
                    moments,
                    quad,
                    pieces: Vec::new(),
                });
            }
        }

        // grid faces: interior faces between valid cells, everything else with
        // fluid area becomes a boundary piece
        enum FaceOutcome {
            Interior(FaceGeom),
            Piece(usize, BoundaryTag, Vec<BoundaryNode>),
            Nothing,
        }
        let valid = |i: isize, j: isize| -> Option<usize> {
            if i < 0 || j < 0 || i >= spec.nx as isize || j >= spec.ny as isize {
                return None;
            }
            let v = index[spec.linear(i as usize, j as usize)];
            (v != NONE).then_some(v as usize)
        };
        let face_jobs: Vec<(usize, usize, usize)> = (0..2)
            .flat_map(|axis| {
                let (ni, nj) = if axis == 0 {
                    (spec.nx + 1, spec.ny)
                } else {
                    (spec.nx, spec.ny + 1)
                };
                (0..nj).flat_map(move |j| (0..ni).map(move |i| (axis, i, j)))
            })
            .collect();
        let outcomes: Vec<FaceOutcome> = face_jobs
            .par_iter()
            .map(|&(axis, i, j)| {
                let (low, high) = if axis == 0 {
                    (valid(i as isize - 1, j as isize), valid(i as isize, j as isize))
                } else {
                    (valid(i as isize, j as isize - 1), valid(i as isize, j as isize))
                };
                if low.is_none() && high.is_none() {
                    return FaceOutcome::Nothing;
                }
                let p0 = [spec.origin[0] + i as f64 * h, spec.origin[1] + j as f64 * h];
                let p1 = if axis == 0 {
                    [p0[0], p0[1] + h]
                } else {
                    [p0[0] + h, p0[1]]
                };
                let center = [0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1])];
                let both_regular = [low, high].iter().all(|c| {
                    c.map(|v| cells[v].kind == CellKind::Regular).unwrap_or(false)
                });
                let single_regular = match (low, high) {
                    (Some(v), None) | (None, Some(v)) => cells[v].kind == CellKind::Regular,
                    _ => false,
                };
                let (area, moments, quad) = if both_regular || single_regular {
                    (h, MomentSet::segment(center, axis, h, degree), None)
                } else {
                    let mut probe = [0.0; 2];
                    probe[axis] = match (low, high) {
                        (Some(_), None) => -1e-9 * h,
                        (None, Some(_)) => 1e-9 * h,
                        _ => 0.0,
                    };
                    let probe = (probe[axis] != 0.0).then_some(probe);
                    let nodes = segment_quadrature(geometry.as_ref(), p0, p1, TENSOR_ORDER, probe);
                    let area: f64 = nodes.iter().map(|n| n.w).sum();
                    if (area - h).abs() <= 1e-15 * h {
                        (h, MomentSet::segment(center, axis, h, degree), None)
                    } else {
                        let m = MomentSet::from_samples(center, degree, nodes.iter().map(|n| (n.x, n.w)));
                        (area, m, Some(nodes))
                    }
                };
                if area <= AREA_MIN * h {
                    return FaceOutcome::Nothing;
                }
                match (low, high) {
                    (Some(l), Some(r)) => FaceOutcome::Interior(FaceGeom {
                        axis,
                        index: [i, j],
                        cells: [l, r],
                        area,
                        center,
                        moments,
                        quad,
                    }),
                    (Some(owner), None) | (None, Some(owner)) => {
                        let outward = if low.is_some() { 1.0 } else { -1.0 };
                        let on_box = if axis == 0 {
                            i == 0 || i == spec.nx
                        } else {
                            j == 0 || j == spec.ny
                        };
                        let tag = match (on_box, axis, low.is_some()) {
                            (false, _, _) => BoundaryTag::Eb,
                            (true, 0, false) => BoundaryTag::XLo,
                            (true, 0, true) => BoundaryTag::XHi,
                            (true, _, false) => BoundaryTag::YLo,
                            (true, _, true) => BoundaryTag::YHi,
                        };
                        let mut n = [0.0; 2];
                        n[axis] = outward;
                        let nodes = match quad {
                            Some(q) => q.into_iter().map(|qn| BoundaryNode { x: qn.x, w: qn.w, n }).collect(),
                            None => {
                                let mut along = [0.0; 2];
                                along[1 - axis] = 1.0;
                                super::quadrature::gauss_on(TENSOR_ORDER, -0.5 * h, 0.5 * h)
                                    .map(|(s, w)| BoundaryNode {
                                        x: [center[0] + s * along[0], center[1] + s * along[1]],
                                        w,
                                        n,
                                    })
                                    .collect()
                            }
                        };
                        FaceOutcome::Piece(owner, tag, nodes)
                    }
                    (None, None) => FaceOutcome::Nothing,
                }
            })
            .collect();

        let mut faces = Vec::new();
        let mut face_lookup = [
            vec![NONE; (spec.nx + 1) * spec.ny],
            vec![NONE; spec.nx * (spec.ny + 1)],
        ];
        let mut pieces = Vec::new();
        for ((axis, i, j), outcome) in face_jobs.into_iter().zip(outcomes) {
            match outcome {
                FaceOutcome::Interior(f) => {
                    let slot = if axis == 0 { j * (spec.nx + 1) + i } else { j * spec.nx + i };
                    face_lookup[axis][slot] = faces.len() as u32;
                    faces.push(f);
                }
                FaceOutcome::Piece(owner, tag, nodes) => {
                    let [ci, cj] = cells[owner].ij;
                    let center = spec.cell_center(ci, cj);
                    pieces.push(BoundaryPiece::from_nodes(owner, tag, nodes, center, degree));
                }
                FaceOutcome::Nothing => {}
            }
        }
        for (v, cell) in cells.iter().enumerate() {
            let lin = spec.linear(cell.ij[0], cell.ij[1]);
            if cell.kind != CellKind::Irregular {
                continue;
            }
            if let Some(q) = &classified[lin].quad {
                if q.boundary_measure() > AREA_MIN * h {
                    let center = spec.cell_center(cell.ij[0], cell.ij[1]);
                    pieces.push(BoundaryPiece::from_nodes(v, BoundaryTag::Eb, q.boundary.clone(), center, degree));
                }
            }
        }
        // deterministic piece order: by owner, then tag
        pieces.sort_by(|a, b| a.owner.cmp(&b.owner).then(a.tag.cmp(&b.tag)));
        for (p, piece) in pieces.iter().enumerate() {
            cells[piece.owner].pieces.push(p);
        }
        Ok(CutCellGrid {
            spec,
            degree,
            geometry,
            kinds: kinds.to_vec(),
            index,
            cells,
            faces,
            face_lookup,
            pieces,
        })
    }

    fn largest_component(&self) -> Vec<usize> {
        let n = self.cells.len();
        let mut adj = vec![Vec::new(); n];
        for f in &self.faces {
            adj[f.cells[0]].push(f.cells[1]);
            adj[f.cells[1]].push(f.cells[0]);
        }
        let mut comp = vec![usize::MAX; n];
        let mut best: Vec<usize> = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut members = vec![start];
            comp[start] = start;
            let mut queue = VecDeque::from([start]);
            while let Some(c) = queue.pop_front() {
                for &nb in &adj[c] {
                    if comp[nb] == usize::MAX {
                        comp[nb] = start;
                        members.push(nb);
                        queue.push_back(nb);
                    }
                }
            }
            if members.len() > best.len() {
                best = members;
            }
        }
        best
    }

    pub fn geometry(&self) -> &Arc<dyn LevelSet> {
        &self.geometry
    }

    pub fn h(&self) -> f64 {
        self.spec.h
    }

    pub fn kind(&self, i: usize, j: usize) -> CellKind {
        self.kinds[self.spec.linear(i, j)]
    }

    /// Valid-cell index of `(i, j)`, if valid.
    pub fn cell_at(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 || i >= self.spec.nx as isize || j >= self.spec.ny as isize {
            return None;
        }
        let v = self.index[self.spec.linear(i as usize, j as usize)];
        (v != NONE).then_some(v as usize)
    }

    pub fn cells(&self) -> &[CellGeom] {
        &self.cells
    }

    pub fn cell(&self, v: usize) -> &CellGeom {
        &self.cells[v]
    }

    pub fn num_valid(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_center(&self, v: usize) -> Point {
        let [i, j] = self.cells[v].ij;
        self.spec.cell_center(i, j)
    }

    pub fn faces(&self) -> &[FaceGeom] {
        &self.faces
    }

    /// Interior face with normal `axis` at lattice index `(i, j)`.
    pub fn face_at(&self, axis: usize, i: usize, j: usize) -> Option<&FaceGeom> {
        let slot = if axis == 0 {
            if i > self.spec.nx || j >= self.spec.ny {
                return None;
            }
            j * (self.spec.nx + 1) + i
        } else {
            if i >= self.spec.nx || j > self.spec.ny {
                return None;
            }
            j * self.spec.nx + i
        };
        let f = self.face_lookup[axis][slot];
        (f != NONE).then(|| &self.faces[f as usize])
    }

    pub fn pieces(&self) -> &[BoundaryPiece] {
        &self.pieces
    }

    pub fn irregular_count(&self) -> usize {
        self.cells.iter().filter(|c| c.kind == CellKind::Irregular).count()
    }

    pub fn kappa_min(&self) -> f64 {
        self.cells.iter().map(|c| c.kappa).fold(1.0, f64::min)
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    /// Volumes of all valid cells.
    pub fn volumes(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.volume).collect()
    }

    /// Quadrature nodes for a valid cell (tensor Gauss for full cells).
    pub fn cell_nodes(&self, v: usize, order: usize) -> Vec<QuadNode> {
        let cell = &self.cells[v];
        match &cell.quad {
            Some(q) => q.clone(),
            None => {
                let lo = self.spec.cell_lo(cell.ij[0], cell.ij[1]);
                super::quadrature::tensor_nodes(lo, [lo[0] + self.spec.h, lo[1] + self.spec.h], order)
            }
        }
    }

    /// Cell average of `f` over valid cell `v`.
    pub fn cell_average<F: Fn(Point) -> f64>(&self, v: usize, f: F) -> f64 {
        let cell = &self.cells[v];
        let sum: f64 = match &cell.quad {
            Some(q) => q.iter().map(|n| n.w * f(n.x)).sum(),
            None => {
                let lo = self.spec.cell_lo(cell.ij[0], cell.ij[1]);
                let h = self.spec.h;
                let mut s = 0.0;
                for (x, wx) in super::quadrature::gauss_on(TENSOR_ORDER, lo[0], lo[0] + h) {
                    for (y, wy) in super::quadrature::gauss_on(TENSOR_ORDER, lo[1], lo[1] + h) {
                        s += wx * wy * f([x, y]);
                    }
                }
                s
            }
        };
        sum / cell.volume
    }

    /// Cell averages of `f` over all valid cells.
    pub fn cell_averages<F: Fn(Point) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        (0..self.cells.len())
            .into_par_iter()
            .map(|v| self.cell_average(v, &f))
            .collect()
    }

    /// `Σ_faces ± A_f e_d + Σ_pieces ∫ n dA` for cell `v`; zero up to quadrature error.
    pub fn closure_residual(&self, v: usize) -> Point {
        let [i, j] = self.cells[v].ij;
        let mut r = [0.0; 2];
        for axis in 0..2 {
            let (lo, hi) = if axis == 0 {
                (self.face_at(0, i, j), self.face_at(0, i + 1, j))
            } else {
                (self.face_at(1, i, j), self.face_at(1, i, j + 1))
            };
            if let Some(f) = lo {
                r[axis] -= f.area;
            }
            if let Some(f) = hi {
                r[axis] += f.area;
            }
        }
        for &p in &self.cells[v].pieces {
            let piece = &self.pieces[p];
            r[0] += piece.normal_moments[0].measure();
            r[1] += piece.normal_moments[1].measure();
        }
        r
    }

    /// Write the moment dump: `i,j,qx,qy,kind,value`.
    pub fn write_moments_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,qx,qy,kind,value")?;
        let set = super::multi_index_set(self.degree);
        for cell in &self.cells {
            for q in &set {
                writeln!(w, "{},{},{},{},vol,{:e}", cell.ij[0], cell.ij[1], q.0[0], q.0[1], cell.moments.get(*q))?;
            }
        }
        for f in &self.faces {
            let kind = if f.axis == 0 { "facex" } else { "facey" };
            for q in &set {
                writeln!(w, "{},{},{},{},{},{:e}", f.index[0], f.index[1], q.0[0], q.0[1], kind, f.moments.get(*q))?;
            }
        }
        for p in &self.pieces {
            let [i, j] = self.cells[p.owner].ij;
            for (d, kind) in ["ebx", "eby"].iter().enumerate() {
                for q in &set {
                    writeln!(w, "{},{},{},{},{},{:e}", i, j, q.0[0], q.0[1], kind, p.normal_moments[d].get(*q))?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::cases::{Annulus, Circle, HalfSpace};
    use std::f64::consts::PI;

    fn build(ls: impl LevelSet + 'static, spec: GridSpec) -> CutCellGrid {
        CutCellGrid::build(Arc::new(ls), spec, &GridOptions::default()).unwrap()
    }

    #[test]
    fn disk_volume_and_boundary_length() {
        let g = build(Circle::inside([0.5, 0.5], 0.3), GridSpec::unit_square(32));
        let vol: f64 = g.volumes().iter().sum();
        assert!((vol - PI * 0.09).abs() < 1e-12, "{vol}");
        let eb: f64 = g.pieces().iter().filter(|p| p.tag == BoundaryTag::Eb).map(|p| p.area).sum();
        assert!((eb - 2.0 * PI * 0.3).abs() < 1e-11, "{eb}");
        assert!(g.irregular_count() > 0);
    }

    #[test]
    fn divergence_theorem_closes_every_cell() {
        let g = build(Annulus::new([0.5, 0.5], 0.25, 0.475), GridSpec::unit_square(32));
        for v in 0..g.num_valid() {
            let r = g.closure_residual(v);
            assert!(r[0].abs().max(r[1].abs()) < 1e-12 * g.h(), "cell {:?}: {r:?}", g.cell(v).ij);
        }
    }

    #[test]
    fn box_faces_are_tagged() {
        let g = build(crate::geometry::cases::AllFluid, GridSpec::unit_square(8));
        assert_eq!(g.irregular_count(), 0);
        assert_eq!(g.num_valid(), 64);
        assert_eq!(g.faces().len(), 2 * 7 * 8);
        for tag in [BoundaryTag::XLo, BoundaryTag::XHi, BoundaryTag::YLo, BoundaryTag::YHi] {
            let n = g.pieces().iter().filter(|p| p.tag == tag).count();
            assert_eq!(n, 8);
        }
        let xhi = g.pieces().iter().find(|p| p.tag == BoundaryTag::XHi).unwrap();
        assert_eq!(xhi.mean_normal(), [1.0, 0.0]);
    }

    #[test]
    fn half_space_on_grid_line_has_no_cut_cells() {
        // plane x = 0.5 coincides with a face: the covered side becomes a wall piece
        let g = build(HalfSpace::new([0.5, 0.0], [1.0, 0.0]), GridSpec::unit_square(8));
        assert_eq!(g.irregular_count(), 0);
        assert_eq!(g.num_valid(), 32);
        let walls: Vec<_> = g.pieces().iter().filter(|p| p.tag == BoundaryTag::Eb).collect();
        assert_eq!(walls.len(), 8);
        assert!(walls.iter().all(|p| p.mean_normal() == [1.0, 0.0]));
    }

    #[test]
    fn largest_component_drops_islands() {
        struct TwoDisks;
        impl LevelSet for TwoDisks {
            fn value(&self, p: Point) -> f64 {
                let a = Circle::inside([0.3, 0.5], 0.2).value(p);
                let b = Circle::inside([0.8, 0.5], 0.1).value(p);
                a.min(b)
            }
        }
        let spec = GridSpec::unit_square(32);
        let all = CutCellGrid::build(Arc::new(TwoDisks), spec, &GridOptions::default()).unwrap();
        let opts = GridOptions {
            largest_component_only: true,
            ..GridOptions::default()
        };
        let big = CutCellGrid::build(Arc::new(TwoDisks), spec, &opts).unwrap();
        assert!(big.num_valid() < all.num_valid());
        let vol: f64 = big.volumes().iter().sum();
        assert!((vol - PI * 0.04).abs() < 1e-11);
    }

    #[test]
    fn rejects_tiny_grids() {
        let r = CutCellGrid::build(Arc::new(crate::geometry::cases::AllFluid), GridSpec::unit_square(4), &GridOptions::default());
        assert!(matches!(r, Err(GeometryError::InvalidGrid(_))));
    }
}
