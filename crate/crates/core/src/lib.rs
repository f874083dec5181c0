//! Pressure-robust hybrid high-order solver for the steady incompressible
//! Navier-Stokes equations on polygonal meshes.

pub mod basis;
pub mod bench;
pub mod checks;
pub mod discretization;
pub mod error;
pub mod forms;
pub mod hho;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod rt;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
