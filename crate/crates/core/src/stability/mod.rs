//! Stability analysis of `D^alpha x = A x + f(x)` and of general Caputo systems.
//!
//! * [`sector`]: eigenvalue sector test, linearisation, Lipschitz moduli.
//! * [`perron`]: constants of the Lyapunov-Perron contraction, admissible
//!   radius, weighted norm and the operator itself.
//! * [`lyapunov`]: Lyapunov certificates, predicted decay, super-solutions and
//!   the comparison principle.
//! * [`decay`]: power-law fits, the no-fast-decay test and trajectory
//!   separation.
//! * [`report`]: JSON report schema.
//!
//! Suprema over `t >= 1` are taken on log-spaced grids up to a finite
//! `t_max`, and ball-based checks sample with a seeded Halton sequence.

use thiserror::Error;

use crate::fraccalc::CalcError;
use crate::mlf::MlError;
use crate::solver::SolverError;

pub mod decay;
pub mod lyapunov;
pub mod perron;
pub mod report;
pub mod sector;

pub use decay::{
    check_no_fast_decay, check_separation, fit_decay, fit_decay_windows, DecayFit, NoFastDecayReport,
    SeparationReport,
};
pub use lyapunov::{
    build_super_solution, check_certificate, predicted_decay, verify_comparison, CertificateReport,
    ComparisonReport, DecayClass, DecayPrediction, LyapunovCertificate, SuperSolution, SuperSolutionCheck,
};
pub use perron::{
    admissible_radius, estimate_c1, estimate_c3, estimate_c_alpha_a, perron_apply, weighted_norm, C1Estimate,
    C3Estimate, PerronConstants, RadiusCertificate, WeightedNorm,
};
pub use report::{Metadata, Report, StabilityReport, SCHEMA_VERSION};
pub use sector::{
    classify_spectrum, in_sector, linearize, lipschitz_modulus, sector_classify, LipschitzEstimate, Linearization, SectorReport,
    SectorVerdict,
};

/// Default seed for ball sampling.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("eigenvalue {re}{im:+}i lies outside the stability sector for alpha = {alpha}")]
    Sector { alpha: f64, re: f64, im: f64 },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("no radius with C(alpha, A) l_h(r) < 1 down to r = {r_min:e} (q = {q_min})")]
    NoCertificate { r_min: f64, q_min: f64 },
    #[error("unsupported structure: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Calc(#[from] CalcError),
}

fn check_alpha(alpha: f64) -> Result<(), StabilityError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(StabilityError::Input(format!("alpha = {alpha} outside (0, 1)")))
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 2, "bad log grid");
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect();
    g[0] = lo;
    g[n - 1] = hi;
    g
}

/// Least-squares line `y = slope x + intercept`; returns `(slope, intercept, rms)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum::<f64>() / n).sqrt();
    (slope, intercept, rms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1.0, 1e3, 4);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[3], 1e3);
        assert!((g[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn line_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (s, i, r) = linear_fit(&x, &y);
        assert!((s + 0.5).abs() < 1e-14 && (i - 2.0).abs() < 1e-14 && r < 1e-14);
    }
}
