//! Closed-form fourth-order stencils on uncut Cartesian neighborhoods.

use super::wls::{cells_in_ball, BASE_RADIUS};
use crate::geometry::{CellKind, CutCellGrid, FaceGeom};

/// Face flux of the gradient, cells at normal offsets -1.5h..1.5h.
pub const FLUX_WEIGHTS: [(isize, f64); 4] = [
    (-2, 1.0 / 12.0),
    (-1, -15.0 / 12.0),
    (0, 15.0 / 12.0),
    (1, -1.0 / 12.0),
];

/// Face average from cells at normal offsets -2.5h..2.5h.
pub const FACE_VALUE_WEIGHTS: [(isize, f64); 6] = [
    (-3, 1.0 / 60.0),
    (-2, -8.0 / 60.0),
    (-1, 37.0 / 60.0),
    (0, 37.0 / 60.0),
    (1, -8.0 / 60.0),
    (2, 1.0 / 60.0),
];

/// Cell-average derivative, offsets relative to the cell.
pub const GRADIENT_WEIGHTS: [(isize, f64); 4] = [
    (-2, 1.0 / 12.0),
    (-1, -8.0 / 12.0),
    (1, 8.0 / 12.0),
    (2, -1.0 / 12.0),
];

/// Cells of a regular line indexed by offset.
pub struct Line {
    cells: Vec<(isize, usize)>,
}

fn all_regular(grid: &CutCellGrid, cells: &[usize]) -> bool {
    cells
        .iter()
        .all(|&c| grid.cell(c).kind == CellKind::Regular && grid.cell(c).pieces.is_empty())
}

/// Cells along the normal of `face` if its radius-3 neighborhood is uncut
/// (offset 0 is the cell on the high side).
pub fn face_line(grid: &CutCellGrid, face: &FaceGeom) -> Option<Line> {
    let ball = cells_in_ball(grid, face.center, &face.cells, BASE_RADIUS);
    if ball.len() != 18 || !all_regular(grid, &ball) {
        return None;
    }
    let [i, j] = face.index.map(|k| k as isize);
    let cells = (-3..=2)
        .map(|k| {
            let c = if face.axis == 0 {
                grid.cell_at(i + k, j)
            } else {
                grid.cell_at(i, j + k)
            };
            c.map(|c| (k, c))
        })
        .collect::<Option<Vec<_>>>()?;
    Some(Line { cells })
}

/// Cells along direction `d` through cell `v` if its radius-3 neighborhood is uncut.
pub fn cell_line(grid: &CutCellGrid, v: usize, d: usize) -> Option<Line> {
    let ball = cells_in_ball(grid, grid.cell_center(v), &[v], BASE_RADIUS);
    if ball.len() != 25 || !all_regular(grid, &ball) {
        return None;
    }
    let [i, j] = grid.cell(v).ij.map(|k| k as isize);
    let cells = (-2..=2)
        .map(|k| {
            let c = if d == 0 { grid.cell_at(i + k, j) } else { grid.cell_at(i, j + k) };
            c.map(|c| (k, c))
        })
        .collect::<Option<Vec<_>>>()?;
    Some(Line { cells })
}

/// Combine a line with offset weights, scaled by `scale`.
pub fn weights(line: &Line, w: &[(isize, f64)], scale: f64) -> Vec<(usize, f64)> {
    w.iter()
        .map(|&(k, wk)| {
            let c = line.cells.iter().find(|(o, _)| *o == k).expect("offset in line").1;
            (c, scale * wk)
        })
        .collect()
}
