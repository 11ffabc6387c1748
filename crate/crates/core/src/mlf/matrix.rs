use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ml_scalar, MlError, MlRequest};
use crate::special::recip_gamma;

/// Default relative accuracy for matrix evaluations.
pub const DEFAULT_MATRIX_TOL: f64 = 1e-8;

/// Eigenvector matrices with a larger 2-norm condition number are not used;
/// the evaluation falls back to the power series.
pub const CONDITION_LIMIT: f64 = 1e8;

const EPS: f64 = f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMlRequest {
    pub alpha: f64,
    pub beta: f64,
    pub m: DMatrix<Complex64>,
    pub tol: f64,
}

impl MatrixMlRequest {
    pub fn new(alpha: f64, beta: f64, m: DMatrix<Complex64>) -> Self {
        MatrixMlRequest { alpha, beta, m, tol: DEFAULT_MATRIX_TOL }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixMethod {
    Eigen,
    Series,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMlValue {
    pub value: DMatrix<Complex64>,
    pub method: MatrixMethod,
    /// Condition number of the eigenvector matrix (infinite when singular).
    pub condition: f64,
    /// Estimated relative error in the Frobenius norm.
    pub est_error: f64,
}

/// E_{alpha,beta}(M) for a square matrix.
///
/// Diagonalisable matrices with a well-conditioned eigenbasis are mapped
/// through the scalar function on the spectrum; otherwise the defining power
/// series is summed with a norm-controlled remainder bound.
pub fn ml_matrix(req: &MatrixMlRequest) -> Result<MatrixMlValue, MlError> {
    let n = req.m.nrows();
    if n == 0 || n != req.m.ncols() {
        return Err(MlError::InvalidInput(format!(
            "matrix must be square and non-empty, got {}x{}",
            n,
            req.m.ncols()
        )));
    }
    if req.m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(MlError::InvalidInput("matrix has non-finite entries".into()));
    }
    MlRequest::new(req.alpha, req.beta, Complex64::new(0.0, 0.0))
        .with_tol(req.tol.min(1e-4))
        .validate()?;

    let (s, eigenvalues, condition) = eigenbasis(&req.m);
    if condition <= CONDITION_LIMIT {
        if let Some(inv) = s.clone().try_inverse() {
            let scalar_tol = (req.tol / (10.0 * condition)).clamp(1e-14, 1e-4);
            let mut diag = Vec::with_capacity(n);
            let mut scalar_err: f64 = 0.0;
            for lam in &eigenvalues {
                let v = ml_scalar(&MlRequest::new(req.alpha, req.beta, *lam).with_tol(scalar_tol))?;
                scalar_err = scalar_err.max(v.est_error);
                diag.push(v.value);
            }
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
            let value = &s * d * inv;
            let est_error = condition * (scalar_err + 4.0 * EPS * n as f64);
            return finish(value, MatrixMethod::Eigen, condition, est_error, req.tol);
        }
    }
    let (value, est_error) = series(req.alpha, req.beta, &req.m)?;
    finish(value, MatrixMethod::Series, condition, est_error, req.tol)
}

fn finish(
    value: DMatrix<Complex64>,
    method: MatrixMethod,
    condition: f64,
    est_error: f64,
    tol: f64,
) -> Result<MatrixMlValue, MlError> {
    if value.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(MlError::Matrix("result overflows double precision".into()));
    }
    if est_error > tol {
        return Err(MlError::Matrix(format!(
            "{method:?} evaluation estimated relative error {est_error:e} exceeds {tol:e}"
        )));
    }
    Ok(MatrixMlValue { value, method, condition, est_error })
}

/// Real-matrix convenience wrapper; the imaginary part of the result is dropped.
pub fn ml_matrix_real(
    alpha: f64,
    beta: f64,
    m: &DMatrix<f64>,
    tol: f64,
) -> Result<DMatrix<f64>, MlError> {
    let mc = m.map(|v| Complex64::new(v, 0.0));
    let v = ml_matrix(&MatrixMlRequest::new(alpha, beta, mc).with_tol(tol))?;
    Ok(v.value.map(|c| c.re))
}

/// Eigenvectors from the complex Schur form by back-substitution on the
/// triangular factor. Returns (unit-column eigenvector matrix, eigenvalues,
/// 2-norm condition number).
fn eigenbasis(m: &DMatrix<Complex64>) -> (DMatrix<Complex64>, Vec<Complex64>, f64) {
    let n = m.nrows();
    let (q, t) = nalgebra::Schur::new(m.clone()).unpack();
    let t_norm = t.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let small = EPS * t_norm;
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * y[(j, k)];
            }
            let mut den = t[(i, i)] - lam;
            if den.norm() < small {
                if acc.norm() == 0.0 {
                    continue;
                }
                den = Complex64::new(small, 0.0);
            }
            y[(i, k)] = -acc / den;
        }
    }
    let mut s = q * y;
    for mut col in s.column_iter_mut() {
        let norm = col.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            col /= Complex64::new(norm, 0.0);
        }
    }
    let sv = s.clone().singular_values();
    let (max, min) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &v| (a.max(v), b.min(v)));
    let condition = if min > 0.0 && s.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        max / min
    } else {
        f64::INFINITY
    };
    let eigenvalues = (0..n).map(|k| t[(k, k)]).collect();
    (s, eigenvalues, condition)
}

fn series(alpha: f64, beta: f64, m: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, f64), MlError> {
    let n = m.nrows();
    let nu = m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let mut power = DMatrix::<Complex64>::identity(n, n);
    let mut sum = DMatrix::<Complex64>::zeros(n, n);
    let mut bound_sum = 0.0;
    let mut rounding = 0.0;
    let mut prev_bound = f64::INFINITY;
    for k in 0..5_000usize {
        let c = recip_gamma(alpha * k as f64 + beta);
        sum += &power * Complex64::new(c, 0.0);
        // Frobenius-norm bound for the k-th term
        let bound = nu.powi(k as i32) * c.abs() * (n as f64).sqrt();
        bound_sum += bound;
        rounding += EPS * (2.0 + (n * k) as f64) * bound;
        let ratio = if prev_bound > 0.0 && prev_bound.is_finite() { bound / prev_bound } else { 1.0 };
        prev_bound = bound;
        let sum_norm = sum.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if k >= 2 && ratio < 0.5 {
            let tail = bound * ratio / (1.0 - ratio);
            if tail <= 0.1 * EPS * sum_norm || bound == 0.0 {
                let rel = (tail + rounding) / sum_norm.max(f64::MIN_POSITIVE);
                return Ok((sum, rel));
            }
        }
        if !bound_sum.is_finite() {
            break;
        }
        power = &power * m;
    }
    Err(MlError::Matrix(format!("power series did not converge (norm {nu:e})")))
}
