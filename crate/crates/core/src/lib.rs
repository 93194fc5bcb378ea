//! Pseudo-spectral Navier–Stokes solver for a periodic channel with no-slip
//! walls, with regularity diagnostics and numerical checks of the functional
//! inequalities used to bound them.

pub mod checkpoint;
pub mod cli_io;
pub mod config;
pub mod decomposition;
pub mod error;
pub mod estimates;
pub mod field;
pub mod grid;
pub mod inequalities;
pub mod modal;
pub mod random;
pub mod solver;
pub mod stokes;

pub use error::{Error, Result};
pub use field::{PlaneField, ScalarField, VectorField};
pub use grid::{make_grid, Axis, Grid};
