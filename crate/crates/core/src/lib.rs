//! Fourth-order cut-cell finite-volume solver for unsteady Stokes flow.

pub mod geometry;
pub mod linear_solve;
pub mod stencil;
pub mod imex;
pub mod projection;
pub mod verify;
pub mod driver;
pub mod cli;
