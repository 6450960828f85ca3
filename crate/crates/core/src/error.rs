//! Error type shared by every numerical routine in the crate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A vector field or test function reaches the edge of the grid.
    #[error("support error: {0}")]
    Support(String),
    /// The map id + eps*Phi could not be inverted by fixed-point iteration.
    #[error("invertibility error: {0}")]
    Invertibility(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("bracket error: {0}")]
    Bracket(String),
    #[error("solver did not converge: {message} (residual {residual:e})")]
    Solver { message: String, residual: f64 },
    #[error("profile degenerates: {0}")]
    Degenerate(String),
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("extrapolation failure: {0}")]
    Extrapolation(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
