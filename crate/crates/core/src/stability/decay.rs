//! Power-law decay fits, the power-rate lower bound and trajectory separation.

use serde::{Deserialize, Serialize};

use super::{check_alpha, linear_fit, log_grid, StabilityError};
use crate::field::SharedField;
use crate::fraccalc::SampledFunction;
use crate::solver::{solve_ivp, CaputoIvp, SolverConfig, Status};

/// `|x(t)| ~ exp(intercept) t^-gamma` on `[t_lo, t_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma: f64,
    pub intercept: f64,
    pub rms: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub nodes: usize,
}

/// Least-squares slope of `log |x|` against `log t` over the nodes in `window`.
pub fn fit_decay(samples: &SampledFunction, window: (f64, f64)) -> Result<DecayFit, StabilityError> {
    let (lo, hi) = window;
    let t_max = samples.mesh().horizon();
    if !(lo >= 1.0 && hi > lo && hi <= t_max * (1.0 + 1e-12)) {
        return Err(StabilityError::Input(format!("window [{lo}, {hi}] not inside [1, {t_max}]")));
    }
    let norms = samples.norms();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (t, n) in samples.times().iter().zip(&norms) {
        if *t >= lo && *t <= hi {
            if !(*n > 0.0) {
                return Err(StabilityError::Input(format!("zero state at t = {t}")));
            }
            x.push(t.ln());
            y.push(n.ln());
        }
    }
    if x.len() < 20 {
        return Err(StabilityError::Input(format!("window holds {} nodes, need 20", x.len())));
    }
    let (slope, intercept, rms) = linear_fit(&x, &y);
    Ok(DecayFit { gamma: -slope, intercept, rms, t_lo: lo, t_hi: hi, nodes: x.len() })
}

/// Fits over consecutive windows `[edges[k], edges[k+1]]`.
pub fn fit_decay_windows(samples: &SampledFunction, edges: &[f64]) -> Result<Vec<DecayFit>, StabilityError> {
    edges.windows(2).map(|w| fit_decay(samples, (w[0], w[1]))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoFastDecayReport {
    pub alpha: f64,
    pub beta_test: f64,
    pub t0: f64,
    pub t_end: f64,
    pub checkpoints: Vec<f64>,
    /// `t^beta_test |x(t)|` at the checkpoints.
    pub weighted: Vec<f64>,
    pub growth: f64,
    pub required_growth: f64,
    /// `None` for the trivial trajectory.
    pub passed: Option<bool>,
}

/// Finite-horizon surrogate for `limsup t^beta |x(t)| = infinity`:
/// `t^beta |x|` must grow by at least `(T/t0)^((beta - alpha)/2)` across
/// the window.
pub fn check_no_fast_decay(
    samples: &SampledFunction,
    alpha: f64,
    beta_test: f64,
    window: (f64, f64),
) -> Result<NoFastDecayReport, StabilityError> {
    check_alpha(alpha)?;
    if !(beta_test > alpha) {
        return Err(StabilityError::Input(format!("beta_test = {beta_test} must exceed alpha = {alpha}")));
    }
    let (t0, t_end) = window;
    let horizon = samples.mesh().horizon();
    if horizon < 1e3 * (1.0 - 1e-12) {
        return Err(StabilityError::Input(format!("horizon {horizon} below 1e3")));
    }
    if !(t0 > 0.0 && t_end > t0 && t_end <= horizon * (1.0 + 1e-12)) {
        return Err(StabilityError::Input(format!("window [{t0}, {t_end}] not inside (0, {horizon}]")));
    }
    let required_growth = (t_end / t0).powf((beta_test - alpha) / 2.0);
    let norms = samples.norms();
    let checkpoints = log_grid(t0, t_end, 16);
    let mut report = NoFastDecayReport {
        alpha,
        beta_test,
        t0,
        t_end,
        checkpoints: checkpoints.clone(),
        weighted: Vec::new(),
        growth: f64::NAN,
        required_growth,
        passed: None,
    };
    if norms.iter().all(|n| *n == 0.0) {
        return Ok(report);
    }
    report.weighted = checkpoints
        .iter()
        .map(|&t| t.powf(beta_test) * interpolate(samples.times(), &norms, t.min(horizon)))
        .collect();
    let first = report.weighted[0];
    let last = report.weighted[report.weighted.len() - 1];
    report.growth = last / first;
    report.passed = Some(first > 0.0 && report.growth >= required_growth);
    Ok(report)
}

fn interpolate(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    let k = ts.partition_point(|&s| s < t);
    if k == 0 {
        return ys[0];
    }
    if k >= ts.len() {
        return ys[ts.len() - 1];
    }
    let w = (t - ts[k - 1]) / (ts[k] - ts[k - 1]);
    ys[k - 1] + w * (ys[k] - ys[k - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub x1: f64,
    pub x2: f64,
    /// `min_j (x2(t_j) - x1(t_j))` over the common support.
    pub min_gap: f64,
    pub argmin_t: f64,
    /// `min_gap` on the mesh with twice as many steps.
    pub refined_min_gap: f64,
    /// `min_gap` changed by 10% or more under refinement.
    pub unresolved: bool,
    /// End of the common support; below the horizon when a run stopped early.
    pub t_end: f64,
    pub truncated: bool,
    pub warnings: Vec<String>,
    pub passed: bool,
}

/// Solves from `x1 < x2` on a shared mesh and reports the smallest gap.
pub fn check_separation(
    alpha: f64,
    field: &SharedField,
    x1: f64,
    x2: f64,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<SeparationReport, StabilityError> {
    check_alpha(alpha)?;
    if field.dim() != 1 {
        return Err(StabilityError::Input("separation needs a scalar field".into()));
    }
    if !(x1 < x2) {
        return Err(StabilityError::Input(format!("need x1 < x2, got {x1}, {x2}")));
    }
    let gap = |cfg: &SolverConfig| -> Result<(f64, f64, f64, f64, f64, bool), StabilityError> {
        let a = solve_ivp(&CaputoIvp::new(alpha, field.clone(), vec![x1], horizon)?, cfg)?;
        let b = solve_ivp(&CaputoIvp::new(alpha, field.clone(), vec![x2], horizon)?, cfg)?;
        let mut n = a.len().min(b.len());
        let truncated = !(a.is_completed() && b.is_completed());
        // an exit point is appended off-mesh, so drop it from the comparison
        for tr in [&a, &b] {
            if matches!(tr.status, Status::DomainExit { .. }) && tr.len() == n {
                n -= 1;
            }
        }
        let (mut min, mut arg) = (f64::INFINITY, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..n {
            let (u, v) = (a.state(j)[0], b.state(j)[0]);
            lo = lo.min(u).min(v);
            hi = hi.max(u).max(v);
            if v - u < min {
                min = v - u;
                arg = a.times()[j];
            }
        }
        Ok((min, arg, a.times()[n - 1], lo, hi, truncated))
    };
    let (min_gap, argmin_t, t_end, lo, hi, truncated) = gap(cfg)?;
    let (refined_min_gap, ..) = gap(&cfg.refined())?;
    let unresolved = !((refined_min_gap - min_gap).abs() < 0.1 * min_gap.abs());
    let mut warnings = Vec::new();
    for p in field.non_lipschitz_points() {
        if p[0] >= lo && p[0] <= hi {
            warnings.push(format!(
                "field is not Lipschitz at x = {}; solutions through it need not be unique",
                p[0]
            ));
        }
    }
    if truncated {
        warnings.push(format!("a run stopped early; gap compared up to t = {t_end}"));
    }
    if unresolved {
        warnings.push(format!("min_gap {min_gap:e} changed to {refined_min_gap:e} under refinement"));
    }
    Ok(SeparationReport {
        x1,
        x2,
        min_gap,
        argmin_t,
        refined_min_gap,
        unresolved,
        t_end,
        truncated,
        warnings,
        passed: min_gap > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{scalar_field, FieldSpec};
    use crate::mesh::Mesh;
    use crate::mlf::ml_real;
    use crate::solver::Corrector;

    fn ml_decay(alpha: f64, horizon: f64) -> SampledFunction {
        let mesh = Mesh::geometric(horizon, 2000, 1.05).unwrap();
        SampledFunction::from_fn(mesh, |t| ml_real(alpha, 1.0, -t.powf(alpha), 1e-13).unwrap())
    }

    #[test]
    fn pure_power_law() {
        let mesh = Mesh::geometric(1e3, 400, 1.1).unwrap();
        let s = SampledFunction::from_fn(mesh, |t| t.powf(-0.5));
        let fit = fit_decay(&s, (1.0, 1e3)).unwrap();
        assert!((fit.gamma - 0.5).abs() < 1e-12 && fit.rms <= 1e-12, "{fit:?}");
    }

    #[test]
    fn fit_rejects_bad_windows() {
        let mesh = Mesh::geometric(1e3, 400, 1.1).unwrap();
        let z = SampledFunction::from_fn(mesh.clone(), |_| 0.0);
        assert!(fit_decay(&z, (10.0, 100.0)).is_err());
        let s = SampledFunction::from_fn(mesh, |t| 1.0 / t);
        assert!(fit_decay(&s, (0.5, 100.0)).is_err());
        assert!(fit_decay(&s, (999.0, 1000.0)).is_err());
    }

    #[test]
    fn mittag_leffler_decay_rate() {
        let s = ml_decay(0.6, 1e4);
        let fit = fit_decay(&s, (1e2, 1e4)).unwrap();
        assert!((0.55..=0.65).contains(&fit.gamma), "{fit:?}");
    }

    #[test]
    fn no_fast_decay_examples() {
        let s = ml_decay(0.5, 1e4);
        let rep = check_no_fast_decay(&s, 0.5, 0.7, (10.0, 1e4)).unwrap();
        assert_eq!(rep.passed, Some(true));
        assert!(rep.growth >= 10f64.powf(0.3), "{rep:?}");
        assert!(check_no_fast_decay(&s, 0.5, 0.5, (10.0, 1e4)).is_err());

        let fast = SampledFunction::from_fn(s.mesh().clone(), |t| 1.0 / (1.0 + t));
        assert_eq!(check_no_fast_decay(&fast, 0.5, 0.7, (10.0, 1e4)).unwrap().passed, Some(false));
        let zero = SampledFunction::from_fn(s.mesh().clone(), |_| 0.0);
        assert_eq!(check_no_fast_decay(&zero, 0.5, 0.7, (10.0, 1e4)).unwrap().passed, None);
    }

    #[test]
    fn linear_gap_is_scaled_relaxation() {
        let f = scalar_field("neg", |x| -x);
        let cfg = SolverConfig::graded(400, 2.0);
        let rep = check_separation(0.5, &f, 0.5, 1.0, 5.0, &cfg).unwrap();
        assert!(rep.passed && !rep.unresolved && rep.warnings.is_empty(), "{rep:?}");
        let exact = 0.5 * ml_real(0.5, 1.0, -5f64.sqrt(), 1e-13).unwrap();
        assert!((rep.min_gap - exact).abs() < 1e-4 * exact, "{} vs {exact}", rep.min_gap);
        assert_eq!(rep.argmin_t, 5.0);
    }

    #[test]
    fn non_lipschitz_separation_warns() {
        let f = FieldSpec::new("power_sign").param("beta", 0.5).build().unwrap();
        let cfg = SolverConfig::graded(400, 2.0).with_corrector(Corrector::Newton);
        let rep = check_separation(0.5, &f, 0.0, 0.1, 10.0, &cfg).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.warnings.iter().any(|w| w.contains("not Lipschitz")), "{rep:?}");
        assert!(check_separation(0.5, &f, 0.1, 0.0, 10.0, &SolverConfig::uniform(10)).is_err());
    }
}
