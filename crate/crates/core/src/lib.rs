//! Analysis of one-dimensional Friedrichs systems `(A u)' + B u = f`.

mod banded;
pub mod boundary_conditions;
pub mod bundled;
pub mod bvp_solver;
pub mod error;
pub mod matrix_field;
pub mod polynomial;
pub mod report;
pub mod spectral_path;

pub use error::{Error, Result};
