//! Embedded-boundary geometry: level sets, cut-cell classification and
//! volume, face and boundary moments.

pub mod cases;
mod grid;
mod moments;
pub mod quadrature;

use thiserror::Error;

pub use cases::{case_geometry, GeometryParams, CASE_NAMES};
pub use grid::{
    BoundaryPiece, BoundaryTag, CellGeom, CellKind, CutCellGrid, FaceGeom, GridOptions, GridSpec,
};
pub use moments::{basis_len, multi_index_set, MomentSet, MultiIndex};

/// A point in the plane.
pub type Point = [f64; 2];

/// Implicit description of the fluid region: `value(p) < 0` inside the fluid.
pub trait LevelSet: Send + Sync {
    fn value(&self, p: Point) -> f64;

    /// Gradient of the level set; defaults to fourth-order central differences.
    fn gradient(&self, p: Point) -> Point {
        let scale = 1.0 + p[0].abs().max(p[1].abs());
        let d = 1e-4 * scale;
        let diff = |e: Point| {
            let at = |s: f64| self.value([p[0] + s * e[0], p[1] + s * e[1]]);
            (8.0 * (at(d) - at(-d)) - (at(2.0 * d) - at(-2.0 * d))) / (12.0 * d)
        };
        [diff([1.0, 0.0]), diff([0.0, 1.0])]
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("level set vanishes identically on box [{lo:?}, {hi:?}]")]
    Degenerate { lo: Point, hi: Point },
    #[error("cut-cell quadrature did not converge on box [{lo:?}, {hi:?}]")]
    QuadratureFailed { lo: Point, hi: Point },
    #[error("cell ({i}, {j}): {source}")]
    Cell {
        i: usize,
        j: usize,
        #[source]
        source: Box<GeometryError>,
    },
    #[error("unknown geometry '{0}'")]
    UnknownCase(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}
