//! Structure-preserving integrators for stochastic multisymplectic PDEs on
//! periodic one-dimensional grids, with nonlinear Schrödinger models and
//! discrete conservation-law checks.

pub mod collocation;
pub mod conservation;
pub mod error;
pub mod grid;
pub mod nls;
pub mod noise;
pub mod registry;
pub mod solver;
pub mod system;
pub mod tableau;

pub use error::{Error, Result};
pub use nalgebra;
