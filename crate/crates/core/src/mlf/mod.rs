//! Mittag-Leffler functions E_{alpha,beta} of scalar and matrix arguments.

mod matrix;
mod scalar;

use num_complex::Complex64;
use thiserror::Error;

pub use matrix::{
    ml_matrix, ml_matrix_real, MatrixMethod, MatrixMlRequest, MatrixMlValue, CONDITION_LIMIT,
    DEFAULT_MATRIX_TOL,
};
pub use scalar::{
    ml_complex, ml_real, ml_scalar, ml_scalar_in, MlRequest, MlValue, Region, ASYMPTOTIC_RADIUS,
    DEFAULT_TOL, SERIES_RADIUS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlError {
    #[error("invalid Mittag-Leffler input: {0}")]
    InvalidInput(String),
    #[error("accuracy target not met ({region:?}): best estimate {best} with relative error {est_error:e}")]
    Accuracy { best: Complex64, est_error: f64, region: Region },
    #[error("E_{{{alpha},{beta}}}({z}) overflows double precision")]
    Overflow { alpha: f64, beta: f64, z: Complex64 },
    #[error("matrix Mittag-Leffler failed: {0}")]
    Matrix(String),
}
