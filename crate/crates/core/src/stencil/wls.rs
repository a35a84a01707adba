//! Weighted least-squares stencil synthesis.

use faer::Mat;

use super::StencilError;
use crate::geometry::{multi_index_set, BoundaryPiece, CutCellGrid, MomentSet, MultiIndex, Point};

/// Polynomial degree of all reconstructions.
pub const POLY_DEGREE: u32 = 4;
/// Rows required per coefficient.
pub const OVERDETERMINATION: f64 = 1.5;
pub const BASE_RADIUS: usize = 3;
pub const MAX_RADIUS: usize = 6;
/// Singular values below this fraction of the largest are discarded.
pub const SVD_CUTOFF: f64 = 1e-10;

/// Cells and boundary pieces supporting one stencil.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    pub cells: Vec<usize>,
    pub pieces: Vec<usize>,
    pub radius: usize,
}

/// Valid cells face-connected to `seeds` whose centers lie within Manhattan
/// distance `radius * h` of `center`, in ascending index order.
pub fn cells_in_ball(grid: &CutCellGrid, center: Point, seeds: &[usize], radius: usize) -> Vec<usize> {
    let h = grid.h();
    let limit = radius as f64 + 1e-9;
    let inside = |v: usize| {
        let c = grid.cell_center(v);
        ((c[0] - center[0]).abs() + (c[1] - center[1]).abs()) / h <= limit
    };
    let mut seen = std::collections::BTreeSet::new();
    let mut stack: Vec<usize> = seeds.iter().copied().filter(|&s| inside(s)).collect();
    seen.extend(stack.iter().copied());
    while let Some(v) = stack.pop() {
        let [i, j] = grid.cell(v).ij;
        let neighbours = [
            grid.face_at(0, i, j).map(|f| f.cells[0]),
            grid.face_at(0, i + 1, j).map(|f| f.cells[1]),
            grid.face_at(1, i, j).map(|f| f.cells[0]),
            grid.face_at(1, i, j + 1).map(|f| f.cells[1]),
        ];
        for nb in neighbours.into_iter().flatten() {
            if !seen.contains(&nb) && inside(nb) {
                seen.insert(nb);
                stack.push(nb);
            }
        }
    }
    seen.into_iter().collect()
}

/// Gather a neighborhood starting at `start_radius`, growing until
/// `cells + pieces >= 1.5 N_p`.
pub fn gather_neighborhood(
    grid: &CutCellGrid,
    center: Point,
    seeds: &[usize],
    start_radius: usize,
    has_rows: &dyn Fn(&BoundaryPiece) -> bool,
    target: &dyn Fn() -> String,
) -> Result<Neighborhood, StencilError> {
    let needed = OVERDETERMINATION * multi_index_set(POLY_DEGREE).len() as f64;
    let mut radius = start_radius.max(1);
    loop {
        let cells = cells_in_ball(grid, center, seeds, radius);
        let mut pieces: Vec<usize> = cells
            .iter()
            .flat_map(|&c| grid.cell(c).pieces.iter().copied())
            .filter(|&p| has_rows(&grid.pieces()[p]))
            .collect();
        pieces.sort_unstable();
        if (cells.len() + pieces.len()) as f64 >= needed {
            return Ok(Neighborhood {
                cells,
                pieces,
                radius,
            });
        }
        if radius >= MAX_RADIUS {
            return Err(StencilError::Starved {
                target: target(),
                radius,
                rows: cells.len() + pieces.len(),
            });
        }
        radius += 1;
    }
}

/// Fit on the gathered neighborhood, growing the radius while the fit is rank deficient.
#[allow(clippy::too_many_arguments)]
pub fn fit_with_growth<T>(
    grid: &CutCellGrid,
    center: Point,
    seeds: &[usize],
    start_radius: usize,
    has_rows: &dyn Fn(&BoundaryPiece) -> bool,
    target: &dyn Fn() -> String,
    fit: &dyn Fn(&Neighborhood) -> Result<T, StencilError>,
) -> Result<T, StencilError> {
    let mut radius = start_radius;
    loop {
        let nb = gather_neighborhood(grid, center, seeds, radius, has_rows, target)?;
        match fit(&nb) {
            Err(StencilError::RankDeficient { .. }) if nb.radius < MAX_RADIUS => radius = nb.radius + 1,
            r => return r,
        }
    }
}

/// `max(|x - x_t| / h, 1)^-5`.
pub fn build_weight(x: Point, target: Point, h: f64) -> f64 {
    let d = (x[0] - target[0]).hypot(x[1] - target[1]) / h;
    d.max(1.0).powi(-5)
}

/// Stencil `s = W (W M)^{†T} b` for a row-major `M` with `ncoef` columns.
pub fn solve_wls(
    m: &[f64],
    ncoef: usize,
    weights: &[f64],
    b: &[f64],
    target: &dyn Fn() -> String,
) -> Result<Vec<f64>, StencilError> {
    let nrows = weights.len();
    assert_eq!(m.len(), nrows * ncoef);
    assert_eq!(b.len(), ncoef);
    if nrows < ncoef {
        return Err(StencilError::RankDeficient {
            target: target(),
            rank: nrows,
            needed: ncoef,
        });
    }
    let wm = Mat::<f64>::from_fn(nrows, ncoef, |i, j| weights[i] * m[i * ncoef + j]);
    let svd = wm.thin_svd().map_err(|e| StencilError::Svd(format!("{}: {e:?}", target())))?;
    let s = svd.S().column_vector();
    let smax = (0..ncoef).map(|k| s[k]).fold(0.0, f64::max);
    let rank = (0..ncoef).filter(|&k| s[k] > SVD_CUTOFF * smax).count();
    if rank < ncoef {
        return Err(StencilError::RankDeficient {
            target: target(),
            rank,
            needed: ncoef,
        });
    }
    let (u, v) = (svd.U(), svd.V());
    // y = S^-1 V^T b
    let y: Vec<f64> = (0..ncoef)
        .map(|k| (0..ncoef).map(|j| v[(j, k)] * b[j]).sum::<f64>() / s[k])
        .collect();
    Ok((0..nrows)
        .map(|i| weights[i] * (0..ncoef).map(|k| u[(i, k)] * y[k]).sum::<f64>())
        .collect())
}

/// Basis used by every reconstruction.
pub fn basis() -> Vec<MultiIndex> {
    multi_index_set(POLY_DEGREE)
}

fn hpow(h: f64, q: MultiIndex) -> f64 {
    h.powi(q.degree() as i32)
}

/// Scaled row of a cell average: `m_j^q(x_t) / (V_j h^|q|)`.
pub fn cell_row(grid: &CutCellGrid, cell: usize, center: Point, basis: &[MultiIndex]) -> Vec<f64> {
    let c = grid.cell(cell);
    let m = c.moments.translate(center);
    let h = grid.h();
    basis.iter().map(|&q| m.get(q) / (c.volume * hpow(h, q))).collect()
}

/// Scaled Dirichlet row of a piece: `m_p^q(x_t) / (A_p h^|q|)`.
pub fn dirichlet_row(grid: &CutCellGrid, piece: &BoundaryPiece, center: Point, basis: &[MultiIndex]) -> Vec<f64> {
    let m = piece.moments.translate(center);
    let h = grid.h();
    basis.iter().map(|&q| m.get(q) / (piece.area * hpow(h, q))).collect()
}

/// Scaled Neumann row: `h Σ_d q_d m_{p,d}^{q-e_d}(x_t) / (A_p h^|q|)`.
pub fn neumann_row(grid: &CutCellGrid, piece: &BoundaryPiece, center: Point, basis: &[MultiIndex]) -> Vec<f64> {
    let nm = [0, 1].map(|d| piece.normal_moments[d].translate(center));
    let h = grid.h();
    basis
        .iter()
        .map(|&q| h * flux_moment(&nm, q) / (piece.area * hpow(h, q)))
        .collect()
}

/// Scaled normal-flow row for component `d`: `m_{p,d}^q(x_t) / (A_p h^|q|)`.
pub fn normal_flow_row(
    grid: &CutCellGrid,
    piece: &BoundaryPiece,
    center: Point,
    basis: &[MultiIndex],
) -> [Vec<f64>; 2] {
    let h = grid.h();
    [0, 1].map(|d| {
        let m = piece.normal_moments[d].translate(center);
        basis.iter().map(|&q| m.get(q) / (piece.area * hpow(h, q))).collect()
    })
}

/// `Σ_d q_d m_d^{q - e_d}`.
fn flux_moment(nm: &[MomentSet; 2], q: MultiIndex) -> f64 {
    (0..2)
        .filter_map(|d| q.lower(d).map(|lq| f64::from(q.0[d]) * nm[d].get(lq)))
        .sum()
}

/// Scale a functional `b^q` to the `h`-normalized coefficients.
fn scale_functional(b: Vec<f64>, h: f64, basis: &[MultiIndex]) -> Vec<f64> {
    b.into_iter().zip(basis).map(|(v, &q)| v / hpow(h, q)).collect()
}

/// Flux of the gradient through a grid face in its `+axis` direction.
pub fn face_flux_functional(grid: &CutCellGrid, moments: &MomentSet, axis: usize, center: Point, basis: &[MultiIndex]) -> Vec<f64> {
    let m = moments.translate(center);
    let b = basis
        .iter()
        .map(|&q| q.lower(axis).map(|lq| f64::from(q.0[axis]) * m.get(lq)).unwrap_or(0.0))
        .collect();
    scale_functional(b, grid.h(), basis)
}

/// Outward flux of the gradient through a boundary piece.
pub fn piece_flux_functional(grid: &CutCellGrid, piece: &BoundaryPiece, center: Point, basis: &[MultiIndex]) -> Vec<f64> {
    let nm = [0, 1].map(|d| piece.normal_moments[d].translate(center));
    let b = basis.iter().map(|&q| flux_moment(&nm, q)).collect();
    scale_functional(b, grid.h(), basis)
}

/// Cell average of `∂_d u`: `q_d m_i^{q-e_d} / V_i`.
pub fn cell_gradient_functional(grid: &CutCellGrid, cell: usize, d: usize, center: Point, basis: &[MultiIndex]) -> Vec<f64> {
    let c = grid.cell(cell);
    let m = c.moments.translate(center);
    let b = basis
        .iter()
        .map(|&q| q.lower(d).map(|lq| f64::from(q.0[d]) * m.get(lq) / c.volume).unwrap_or(0.0))
        .collect();
    scale_functional(b, grid.h(), basis)
}

/// Integral of one velocity component over a grid face: `m_f^q`.
pub fn face_value_functional(grid: &CutCellGrid, moments: &MomentSet, center: Point, basis: &[MultiIndex]) -> Vec<f64> {
    let m = moments.translate(center);
    scale_functional(basis.iter().map(|&q| m.get(q)).collect(), grid.h(), basis)
}

/// Per-component outward velocity flux through a piece: `m_{p,d}^q`.
pub fn piece_divergence_functional(grid: &CutCellGrid, piece: &BoundaryPiece, center: Point, basis: &[MultiIndex]) -> [Vec<f64>; 2] {
    [0, 1].map(|d| {
        let m = piece.normal_moments[d].translate(center);
        scale_functional(basis.iter().map(|&q| m.get(q)).collect(), grid.h(), basis)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_follow_inverse_fifth_power() {
        let h = 0.1;
        assert_eq!(build_weight([0.05, 0.0], [0.0, 0.0], h), 1.0);
        assert!((build_weight([0.2, 0.0], [0.0, 0.0], h) - 0.03125).abs() < 1e-15);
        assert!((build_weight([0.0, 0.3], [0.0, 0.0], h) - 4.115226337448559e-3).abs() < 1e-15);
    }

    #[test]
    fn two_cell_linear_fit_gives_difference_quotient() {
        // cells centered at -h/2 and +h/2, fit c0 + c1 (x / h); functional ∂x at 0
        let h = 0.25;
        let m = [1.0, -0.5, 1.0, 0.5];
        let s = solve_wls(&m, 2, &[1.0, 1.0], &[0.0, 1.0 / h], &|| "test".into()).unwrap();
        assert!((s[0] + 1.0 / h).abs() < 1e-12 && (s[1] - 1.0 / h).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let m = [1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        let r = solve_wls(&m, 2, &[1.0; 3], &[1.0, 0.0], &|| "cell 7".into());
        assert!(matches!(r, Err(StencilError::RankDeficient { rank: 1, .. })));
    }
}
