//! Lyapunov certificates, the decay they imply, super-solutions of
//! `D^alpha y = A y^p`, and numerical checks of the comparison principle.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_alpha, StabilityError};
use crate::field::SharedField;
use crate::fraccalc::{caputo_derivative_all, SampledFunction};
use crate::halton::ball_points;
use crate::mesh::Mesh;
use crate::special::gamma;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// `V` with `C1 |x|^a <= V(x) <= C2 |x|^b` and
/// `<grad V(x), f(x)> <= -C3 |x|^c` on the ball of radius `r`.
#[derive(Clone)]
pub struct LyapunovCertificate {
    pub dim: usize,
    pub v: ScalarFn,
    pub grad_v: GradientFn,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub r: f64,
}

impl fmt::Debug for LyapunovCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovCertificate")
            .field("dim", &self.dim)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("c", &self.c)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("c3", &self.c3)
            .field("r", &self.r)
            .finish()
    }
}

impl LyapunovCertificate {
    /// `V(x) = |x|^2`, so `a = b = 2` and `C1 = C2 = 1`.
    pub fn squared_norm(dim: usize, c: f64, c3: f64, r: f64) -> Self {
        LyapunovCertificate {
            dim,
            v: Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()),
            grad_v: Arc::new(|x: &[f64], g: &mut [f64]| {
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi = 2.0 * xi;
                }
            }),
            a: 2.0,
            b: 2.0,
            c,
            c1: 1.0,
            c2: 1.0,
            c3,
            r,
        }
    }

    pub fn validate(&self) -> Result<(), StabilityError> {
        let pos = [("a", self.a), ("b", self.b), ("r", self.r), ("C1", self.c1), ("C2", self.c2)];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(StabilityError::Input(format!("certificate constant {name} = {v} must be positive")));
            }
        }
        if !(self.c3 >= 0.0 && self.c >= 0.0) {
            return Err(StabilityError::Input("C3 and c must be non-negative".into()));
        }
        Ok(())
    }

    pub fn is_strict(&self) -> bool {
        self.c3 > 0.0
    }
}

/// Worst sampled margins; a margin is negative where a condition fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub samples: usize,
    pub seed: u64,
    /// `min V(x) - C1 |x|^a`
    pub lower_margin: f64,
    /// `min C2 |x|^b - V(x)`
    pub upper_margin: f64,
    /// `min -C3 |x|^c - <grad V(x), f(x)>`
    pub decrease_margin: f64,
    /// `min (V(x) + V(y))/2 - V((x+y)/2)` over consecutive sample pairs
    pub convexity_margin: f64,
    pub worst_decrease_point: Vec<f64>,
    pub v1_ok: bool,
    pub v2_ok: bool,
    pub v3_ok: bool,
    pub passed: bool,
}

/// Checks the certificate conditions on `samples` Halton points of the ball.
/// Each margin may be negative by a rounding allowance of `1e-12` times the
/// magnitude of the compared terms.
pub fn check_certificate(
    cert: &LyapunovCertificate,
    field: &SharedField,
    samples: usize,
    seed: u64,
) -> Result<CertificateReport, StabilityError> {
    cert.validate()?;
    if field.dim() != cert.dim {
        return Err(StabilityError::Input("certificate and field dimensions differ".into()));
    }
    let pts = ball_points(cert.dim, cert.r, samples.max(2), seed);
    let slack = |a: f64, b: f64| 1e-12 * (a.abs() + b.abs()) + 1e-300;
    let (mut lower, mut upper, mut decrease, mut convex) =
        (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let (mut v1, mut v2, mut v3) = (true, true, true);
    let mut worst = pts[0].clone();
    let mut grad = vec![0.0; cert.dim];
    let mut f = vec![0.0; cert.dim];
    for (k, x) in pts.iter().enumerate() {
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let v = (cert.v)(x);
        let lo = cert.c1 * n.powf(cert.a);
        let hi = cert.c2 * n.powf(cert.b);
        lower = lower.min(v - lo);
        upper = upper.min(hi - v);
        v2 &= v - lo >= -slack(v, lo) && hi - v >= -slack(v, hi);
        (cert.grad_v)(x, &mut grad);
        field.eval(0.0, x, &mut f);
        let dot: f64 = grad.iter().zip(&f).map(|(g, h)| g * h).sum();
        let bound = -cert.c3 * n.powf(cert.c);
        if !dot.is_finite() || !v.is_finite() {
            return Err(StabilityError::Numeric(format!("certificate not finite at {x:?}")));
        }
        if bound - dot < decrease {
            decrease = bound - dot;
            worst = x.clone();
        }
        v3 &= bound - dot >= -slack(dot, bound);
        if k % 2 == 1 {
            let y = &pts[k - 1];
            let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
            let vy = (cert.v)(y);
            let vm = (cert.v)(&mid);
            let m = 0.5 * (v + vy) - vm;
            convex = convex.min(m);
            v1 &= m >= -slack(v + vy, vm);
        }
    }
    Ok(CertificateReport {
        samples: pts.len(),
        seed,
        lower_margin: lower,
        upper_margin: upper,
        decrease_margin: decrease,
        convexity_margin: convex,
        worst_decrease_point: worst,
        v1_ok: v1,
        v2_ok: v2,
        v3_ok: v3,
        passed: v1 && v2 && v3,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayClass {
    /// `C3 = 0`: stability without a rate.
    Stable,
    MittagLeffler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPrediction {
    pub class: DecayClass,
    /// Guaranteed power `|x(t)| = O(t^-exponent)`, `alpha b / (a c)`.
    pub exponent: Option<f64>,
    /// `p = c / b`
    pub p: f64,
}

/// Decay rate guaranteed by a certificate that passed [`check_certificate`].
pub fn predicted_decay(cert: &LyapunovCertificate, alpha: f64) -> Result<DecayPrediction, StabilityError> {
    check_alpha(alpha)?;
    cert.validate()?;
    let p = cert.c / cert.b;
    if !cert.is_strict() {
        return Ok(DecayPrediction { class: DecayClass::Stable, exponent: None, p });
    }
    if !(p > 0.0) {
        return Err(StabilityError::Input("c must be positive for a decay rate".into()));
    }
    Ok(DecayPrediction { class: DecayClass::MittagLeffler, exponent: Some(alpha / (p * cert.a)), p })
}

/// `w = V0` on `[0, t1]` and `w = C t^(-alpha/p)` afterwards, a
/// super-solution of `D^alpha y = A y^p`, `y(0) = V0`, with `A < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperSolution {
    pub v0: f64,
    pub a_coef: f64,
    pub p: f64,
    pub alpha: f64,
    pub t1: f64,
    pub c: f64,
}

pub fn build_super_solution(v0: f64, a_coef: f64, p: f64, alpha: f64) -> Result<SuperSolution, StabilityError> {
    check_alpha(alpha)?;
    if !(p > 0.0) {
        return Err(StabilityError::Input(format!("p = {p} must be positive")));
    }
    if !(v0 > 0.0) || !(a_coef < 0.0) {
        return Err(StabilityError::Input("need V0 > 0 and A < 0".into()));
    }
    let bracket = 2f64.powf(alpha) / gamma(1.0 - alpha)
        + alpha / p * 2f64.powf(alpha + alpha / p) / gamma(2.0 - alpha);
    let t1_alpha = v0.powf(1.0 - p) / (-a_coef) * bracket;
    let t1 = t1_alpha.powf(1.0 / alpha);
    let c = v0 * t1.powf(alpha / p);
    Ok(SuperSolution { v0, a_coef, p, alpha, t1, c })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperSolutionCheck {
    /// `min_j (D^alpha w - A w^p + 5 err_j)`; non-negative when the check passes.
    pub min_margin: f64,
    pub worst_t: f64,
    /// Largest discretisation error estimate of `D^alpha w` on the checked nodes.
    pub max_error_estimate: f64,
    pub passed: bool,
}

impl SuperSolution {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t1 {
            self.v0
        } else {
            self.c * t.powf(-self.alpha / self.p)
        }
    }

    pub fn sample(&self, mesh: &Mesh) -> SampledFunction {
        SampledFunction::from_fn(mesh.clone(), |t| self.eval(t))
    }

    /// Checks `D^alpha w >= A w^p` at the nodes of `mesh` inside `(lo, hi]`,
    /// allowing five times the discretisation error estimate.
    pub fn check(&self, mesh: &Mesh, lo: f64, hi: f64) -> Result<SuperSolutionCheck, StabilityError> {
        let w = self.sample(mesh);
        let (dw, err) = derivative_with_error(&w, self.alpha)?;
        let mut out = SuperSolutionCheck { min_margin: f64::INFINITY, worst_t: lo, max_error_estimate: 0.0, passed: true };
        for (j, &t) in mesh.times().iter().enumerate() {
            if t <= lo || t > hi {
                continue;
            }
            let m = dw[j] - self.a_coef * self.eval(t).powf(self.p) + 5.0 * err[j];
            out.max_error_estimate = out.max_error_estimate.max(err[j]);
            if m < out.min_margin {
                out.min_margin = m;
                out.worst_t = t;
            }
        }
        out.passed = out.min_margin >= 0.0;
        Ok(out)
    }
}

/// Caputo derivative at every node and an error estimate: the difference to
/// the derivative computed on the coarsened mesh, carried to odd nodes from
/// their even neighbours.
fn derivative_with_error(f: &SampledFunction, alpha: f64) -> Result<(Vec<f64>, Vec<f64>), StabilityError> {
    let fine = caputo_derivative_all(f, alpha)?;
    let n = f.len();
    let (_, idx) = f.mesh().coarsened();
    let mut err = vec![0.0; n];
    if idx.len() >= 3 {
        let coarse = caputo_derivative_all(&f.select(&idx)?, alpha)?;
        for (c, &j) in idx.iter().enumerate() {
            let e = (fine.state(j)[0] - coarse.state(c)[0]).abs();
            err[j] = e;
        }
        for j in 0..n {
            if idx.binary_search(&j).is_err() {
                let left = err[j - 1];
                let right = if j + 1 < n { err[j + 1] } else { left };
                err[j] = left.max(right);
            }
        }
    }
    Ok((fine.values().to_vec(), err))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub l_non_increasing: bool,
    pub initial_ok: bool,
    /// `D^alpha m1 >= L(m1)` within tolerance at interior nodes.
    pub super_ok: bool,
    /// `D^alpha m2 <= L(m2)` within tolerance at interior nodes.
    pub sub_ok: bool,
    pub super_margin: f64,
    pub sub_margin: f64,
    pub first_hypothesis_violation: Option<usize>,
    pub hypotheses_ok: bool,
    /// `m1 >= m2` at every node; only claimed when the hypotheses hold.
    pub ordering: Option<bool>,
    pub first_ordering_violation: Option<usize>,
    pub max_error_estimate: f64,
}

/// Checks the hypotheses of the comparison principle for
/// `D^alpha m = L(m)` with super-solution candidate `m1` and sub-solution
/// candidate `m2`, then the ordering `m1 >= m2`.
pub fn verify_comparison<L>(
    m1: &SampledFunction,
    m2: &SampledFunction,
    l: L,
    alpha: f64,
) -> Result<ComparisonReport, StabilityError>
where
    L: Fn(f64) -> f64,
{
    check_alpha(alpha)?;
    if m1.mesh() != m2.mesh() || m1.dim() != 1 || m2.dim() != 1 {
        return Err(StabilityError::Input("m1 and m2 must be scalar and share a grid".into()));
    }
    let (v1, v2) = (m1.values(), m2.values());
    let lo = v1.iter().chain(v2).copied().fold(f64::INFINITY, f64::min);
    let hi = v1.iter().chain(v2).copied().fold(f64::NEG_INFINITY, f64::max);
    let probe: Vec<f64> = (0..=256).map(|k| lo + (hi - lo) * k as f64 / 256.0).collect();
    let l_non_increasing = probe.windows(2).all(|w| l(w[1]) <= l(w[0]) + 1e-12 * l(w[0]).abs().max(1.0));

    let (d1, e1) = derivative_with_error(m1, alpha)?;
    let (d2, e2) = derivative_with_error(m2, alpha)?;
    let n = m1.len();
    let (mut super_margin, mut sub_margin) = (f64::INFINITY, f64::INFINITY);
    let mut first = None;
    let mut max_err: f64 = 0.0;
    for j in 1..n - 1 {
        let s1 = d1[j] - l(v1[j]) + 5.0 * e1[j];
        let s2 = l(v2[j]) - d2[j] + 5.0 * e2[j];
        max_err = max_err.max(e1[j]).max(e2[j]);
        super_margin = super_margin.min(s1);
        sub_margin = sub_margin.min(s2);
        if (s1 < 0.0 || s2 < 0.0) && first.is_none() {
            first = Some(j);
        }
    }
    let initial_ok = v1[0] >= v2[0];
    let super_ok = super_margin >= 0.0;
    let sub_ok = sub_margin >= 0.0;
    let hypotheses_ok = l_non_increasing && initial_ok && super_ok && sub_ok;
    let violation = (0..n).find(|&j| v1[j] < v2[j] - 1e-12 * v2[j].abs().max(1.0));
    Ok(ComparisonReport {
        l_non_increasing,
        initial_ok,
        super_ok,
        sub_ok,
        super_margin,
        sub_margin,
        first_hypothesis_violation: if initial_ok { first } else { Some(0) },
        hypotheses_ok,
        ordering: hypotheses_ok.then_some(violation.is_none()),
        first_ordering_violation: violation,
        max_error_estimate: max_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{scalar_field, FieldSpec};
    use crate::mlf::ml_real;
    use proptest::prelude::*;

    #[test]
    fn certificate_examples() {
        let f = FieldSpec::new("power_sign").param("beta", 3.0).build().unwrap();
        let cert = LyapunovCertificate::squared_norm(1, 4.0, 2.0, 1.0);
        let rep = check_certificate(&cert, &f, 10_000, 0).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.samples >= 10_000);

        let two = FieldSpec::new("twodim").build().unwrap();
        let cert = LyapunovCertificate::squared_norm(2, 4.0, 1.0, 0.5);
        let rep = check_certificate(&cert, &two, 10_000, 0).unwrap();
        assert!(rep.passed, "{rep:?}");
        // the decrease condition fails once |x1| can exceed 1/2 with x2 large
        let wide = LyapunovCertificate::squared_norm(2, 4.0, 1.0, 2.0);
        assert!(!check_certificate(&wide, &two, 10_000, 0).unwrap().v3_ok);

        let grow = scalar_field("grow", |x| x * x * x);
        let cert = LyapunovCertificate::squared_norm(1, 4.0, 2.0, 1.0);
        let rep = check_certificate(&cert, &grow, 10_000, 0).unwrap();
        assert!(!rep.v3_ok && rep.v2_ok && rep.decrease_margin < 0.0);
    }

    #[test]
    fn predicted_decay_examples() {
        let cert = LyapunovCertificate::squared_norm(1, 4.0, 2.0, 1.0);
        let p = predicted_decay(&cert, 0.5).unwrap();
        assert_eq!(p.exponent, Some(0.125));
        assert_eq!(p.class, DecayClass::MittagLeffler);
        let lin = LyapunovCertificate::squared_norm(1, 2.0, 2.0, 1.0);
        assert_eq!(predicted_decay(&lin, 0.5).unwrap().exponent, Some(0.25));
        let weak = LyapunovCertificate::squared_norm(1, 4.0, 0.0, 1.0);
        let p = predicted_decay(&weak, 0.5).unwrap();
        assert_eq!((p.class, p.exponent), (DecayClass::Stable, None));
    }

    #[test]
    fn super_solution_formula() {
        let s = build_super_solution(1.0, -1.0, 1.0, 0.5).unwrap();
        let expect = 2f64.sqrt() / gamma(0.5) + 0.5 * 2.0 / gamma(1.5);
        assert!((s.t1.sqrt() - expect).abs() < 1e-14);
        assert!(build_super_solution(1.0, -1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn super_solution_inequality_holds() {
        for (v0, a, p, alpha) in [(0.25, -2.0, 2.0, 0.5), (1.0, -1.0, 1.0, 0.5), (0.5, -1.0, 1.5, 0.7)] {
            let s = build_super_solution(v0, a, p, alpha).unwrap();
            let mesh = Mesh::graded(10.0 * s.t1, 4000, 1.0 / alpha).unwrap();
            let chk = s.check(&mesh, s.t1, 10.0 * s.t1).unwrap();
            assert!(chk.passed, "{v0} {a} {p} {alpha}: {chk:?}");
        }
    }

    #[test]
    fn comparison_examples() {
        let alpha = 0.6;
        let mesh = Mesh::graded(5.0, 800, 1.0 / alpha).unwrap();
        let e = |t: f64| ml_real(alpha, 1.0, -t.powf(alpha), 1e-12).unwrap();
        let m1 = SampledFunction::from_fn(mesh.clone(), e);
        let m2 = SampledFunction::from_fn(mesh, |t| 0.5 * e(t));
        let rep = verify_comparison(&m1, &m2, |x| -x, alpha).unwrap();
        assert!(rep.hypotheses_ok && rep.ordering == Some(true), "{rep:?}");
        let swapped = verify_comparison(&m2, &m1, |x| -x, alpha).unwrap();
        assert!(!swapped.hypotheses_ok && swapped.ordering.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn no_ordering_claim_without_hypotheses(
            a1 in -1.0f64..1.0, a2 in -1.0f64..1.0, b1 in -1.0f64..1.0, b2 in -1.0f64..1.0,
        ) {
            let mesh = Mesh::uniform(2.0, 64).unwrap();
            let m1 = SampledFunction::from_fn(mesh.clone(), |t| a1 + b1 * t);
            let m2 = SampledFunction::from_fn(mesh, |t| a2 + b2 * t * t);
            let rep = verify_comparison(&m1, &m2, |x| -x, 0.5).unwrap();
            prop_assert!(rep.ordering != Some(true) || rep.hypotheses_ok);
            prop_assert_eq!(rep.ordering.is_some(), rep.hypotheses_ok);
        }
    }
}
