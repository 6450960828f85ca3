//! Numerical laboratory for the Alt-Phillips free boundary problem.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cell_quadrature;
pub mod cone;
pub mod distance;
pub mod eigen;
pub mod energy;
pub mod error;
pub mod exponents;
pub mod field;
pub mod grid;
pub mod ode;
pub mod profiles;
pub mod quadrature;
pub mod stability;
pub mod variation;
pub mod vector_field;

pub use error::{Error, Result};
