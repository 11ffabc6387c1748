//! Lyapunov-Perron machinery for `D^alpha y = diag(lambda) y + h(y)`.
//!
//! With `K_lambda(s) = s^(alpha-1) E_{alpha,alpha}(lambda s^alpha)` the operator is
//! `(T_x xi)^i(t) = E_alpha(lambda_i t^alpha) x^i + int_0^t K_lambda_i(t - s) h^i(xi(s)) ds`,
//! and it contracts in the weighted norm
//! `|xi|_w = max(sup_[0,1] |xi|, sup_[1,inf) t^alpha |xi|)` with factor
//! `C(alpha, A) l_h(r)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::sector::{in_sector, lipschitz_modulus};
use super::{check_alpha, linear_fit, log_grid, StabilityError};
use crate::field::SharedField;
use crate::fraccalc::SampledFunction;
use crate::mlf::{ml_complex, ml_real};
use crate::quad::integrate;

/// Accuracy requested from Mittag-Leffler evaluations in this module.
const ML_TOL: f64 = 1e-12;

/// Default horizon for suprema over `t >= 1`.
pub const DEFAULT_T_MAX: f64 = 1e3;

fn require_sector(alpha: f64, lambda: Complex64) -> Result<(), StabilityError> {
    check_alpha(alpha)?;
    if in_sector(alpha, lambda) {
        Ok(())
    } else {
        Err(StabilityError::Sector { alpha, re: lambda.re, im: lambda.im })
    }
}

fn ml_abs(alpha: f64, beta: f64, z: Complex64) -> Result<f64, StabilityError> {
    Ok(ml_complex(alpha, beta, z, ML_TOL)?.norm())
}

/// Supremum of `f` over `grid` and over the grid with every interval halved.
/// Returns `(sup, argmax, sup_coarse)`.
fn sup_with_doubling<F>(grid: &[f64], mut f: F) -> Result<(f64, f64, f64), StabilityError>
where
    F: FnMut(f64) -> Result<f64, StabilityError>,
{
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &t in grid {
        let v = f(t)?;
        if v > best.0 {
            best = (v, t);
        }
    }
    let coarse = best.0;
    for w in grid.windows(2) {
        let t = (w[0] * w[1]).sqrt();
        let v = f(t)?;
        if v > best.0 {
            best = (v, t);
        }
    }
    Ok((best.0, best.1, coarse))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C1Estimate {
    pub value: f64,
    pub argmax_t: f64,
    /// Supremum on the undoubled grid.
    pub coarse_value: f64,
}

/// `sup_t |E_alpha(lambda t^alpha)| / E_alpha(-t^alpha)` over `t = 0` and a
/// log-spaced grid on `[1e-6, t_max]` with `grid` points (and its midpoints).
pub fn estimate_c1(alpha: f64, lambda: Complex64, t_max: f64, grid: usize) -> Result<C1Estimate, StabilityError> {
    require_sector(alpha, lambda)?;
    if !(t_max >= 1e3) || grid < 2 {
        return Err(StabilityError::Input("estimate_c1 needs t_max >= 1e3 and at least 2 grid points".into()));
    }
    let g = log_grid(1e-6, t_max, grid);
    let (value, argmax_t, coarse) = sup_with_doubling(&g, |t| {
        let ta = t.powf(alpha);
        Ok(ml_abs(alpha, 1.0, lambda * ta)? / ml_real(alpha, 1.0, -ta, ML_TOL)?)
    })?;
    // t = 0 gives exactly 1
    if value < 1.0 {
        return Ok(C1Estimate { value: 1.0, argmax_t: 0.0, coarse_value: coarse.max(1.0) });
    }
    Ok(C1Estimate { value, argmax_t, coarse_value: coarse.max(1.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C3Estimate {
    pub value: f64,
    /// Summed quadrature error estimate.
    pub error: f64,
    /// Contribution of `u > u_tail`, integrated after `u = 1/v`.
    pub tail: f64,
}

/// `int_0^inf s^(alpha-1) |E_{alpha,alpha}(lambda s^alpha)| ds`.
///
/// With `u = s^alpha` the integrand becomes `|E_{alpha,alpha}(lambda u)| / alpha`,
/// which is smooth at 0 and decays like `u^-2`. The range `u > 1e3/|lambda|`
/// is mapped to `v = 1/u` on `(0, |lambda|/1e3]`, where the integrand is
/// bounded.
pub fn estimate_c3(alpha: f64, lambda: Complex64) -> Result<C3Estimate, StabilityError> {
    require_sector(alpha, lambda)?;
    let scale = 1.0 / lambda.norm();
    let mut err = None;
    let mut g = |u: f64| match ml_complex(alpha, alpha, lambda * u, ML_TOL) {
        Ok(v) => v.norm() / alpha,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    let mut edges = vec![0.0, scale];
    while *edges.last().expect("non-empty") < 1e3 * scale {
        let next = edges.last().expect("non-empty") * 4.0;
        edges.push(next.min(1e3 * scale));
    }
    let (mut value, mut error) = (0.0, 0.0);
    for w in edges.windows(2) {
        let q = integrate(&mut g, w[0], w[1], 1e-14, 1e-13, 400);
        value += q.value;
        error += q.error;
    }
    let u_tail = *edges.last().expect("non-empty");
    let q = integrate(|v: f64| g(1.0 / v) / (v * v), 0.0, 1.0 / u_tail, 1e-14, 1e-13, 400);
    value += q.value;
    error += q.error;
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(C3Estimate { value, error, tail: q.value })
}

/// `t^alpha int_0^t (t-s)^(alpha-1) E_{alpha,alpha}(-(t-s)^alpha) s^-alpha ds`,
/// split at `t/2` with substitutions that remove both endpoint singularities.
fn sup_term_at(alpha: f64, t: f64) -> Result<f64, StabilityError> {
    let mut err = None;
    let mut ml = |x: f64| match ml_real(alpha, alpha, x, ML_TOL) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    let half = 0.5 * t;
    // s in [0, t/2]: s = u^(1/(1-alpha))
    let a = integrate(
        |u: f64| {
            let s = u.powf(1.0 / (1.0 - alpha));
            let sigma = t - s;
            sigma.powf(alpha - 1.0) * ml(-sigma.powf(alpha)) / (1.0 - alpha)
        },
        0.0,
        half.powf(1.0 - alpha),
        1e-13,
        1e-11,
        200,
    );
    // t - s in [0, t/2]: t - s = u^(1/alpha)
    let b = integrate(
        |u: f64| {
            let s = t - u.powf(1.0 / alpha);
            ml(-u) * s.powf(-alpha) / alpha
        },
        0.0,
        half.powf(alpha),
        1e-13,
        1e-11,
        200,
    );
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(t.powf(alpha) * (a.value + b.value))
}

/// Constants of the contraction estimate.
///
/// `c_alpha_a = max_i c3[i] + c_lambda * sup_term` with
/// `c_lambda = max_i c1[i]`; `denominator` is
/// `max_i (sup_[0,1] |E_alpha(lambda_i t^alpha)| + sup_[1,t_max] t^alpha |E_alpha(lambda_i t^alpha)|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerronConstants {
    pub alpha: f64,
    pub eigenvalues: Vec<Complex64>,
    pub c1: Vec<C1Estimate>,
    pub c3: Vec<C3Estimate>,
    pub c_lambda: f64,
    pub sup_term: f64,
    pub sup_term_argmax: f64,
    pub c_alpha_a: f64,
    pub denominator: f64,
    pub t_max: f64,
    pub grid: usize,
    pub warnings: Vec<String>,
}

impl PerronConstants {
    /// Contraction factor `C(alpha, A) l` for a Lipschitz modulus `l`.
    pub fn q(&self, lipschitz: f64) -> f64 {
        self.c_alpha_a * lipschitz
    }
}

/// Evaluates all constants for a spectrum inside the sector; suprema over
/// `t >= 1` use `grid` log-spaced points up to `t_max` plus midpoints.
pub fn estimate_c_alpha_a(
    alpha: f64,
    eigenvalues: &[Complex64],
    t_max: f64,
    grid: usize,
) -> Result<PerronConstants, StabilityError> {
    if eigenvalues.is_empty() {
        return Err(StabilityError::Input("empty spectrum".into()));
    }
    for &l in eigenvalues {
        require_sector(alpha, l)?;
    }
    let mut warnings = Vec::new();
    let c1: Vec<C1Estimate> =
        eigenvalues.iter().map(|&l| estimate_c1(alpha, l, t_max, grid)).collect::<Result<_, _>>()?;
    let c3: Vec<C3Estimate> = eigenvalues.iter().map(|&l| estimate_c3(alpha, l)).collect::<Result<_, _>>()?;
    let c_lambda = c1.iter().map(|c| c.value).fold(0.0, f64::max);
    for (l, c) in eigenvalues.iter().zip(&c1) {
        if (c.value - c.coarse_value).abs() > 1e-3 * c.value {
            warnings.push(format!("C1 for lambda = {l} changed by more than 1e-3 under grid doubling"));
        }
    }
    let g = log_grid(1.0, t_max, grid);
    let (sup_term, sup_term_argmax, coarse) = sup_with_doubling(&g, |t| sup_term_at(alpha, t))?;
    if (sup_term - coarse).abs() > 1e-3 * sup_term {
        warnings.push("sup term changed by more than 1e-3 under grid doubling".into());
    }
    if sup_term_argmax >= t_max * (1.0 - 1e-12) {
        warnings.push(format!("sup term attained at t_max = {t_max}; the supremum may be larger"));
    }
    warnings.push(format!("suprema over t >= 1 truncated at t_max = {t_max}"));
    let c3_max = c3.iter().map(|c| c.value).fold(0.0, f64::max);
    let c_alpha_a = c3_max + c_lambda * sup_term;

    let head = {
        let mut v: Vec<f64> = (0..=grid).map(|k| k as f64 / grid as f64).collect();
        v[0] = 0.0;
        v
    };
    let mut denominator: f64 = 0.0;
    for &l in eigenvalues {
        let mut s0: f64 = 0.0;
        for &t in &head {
            s0 = s0.max(ml_abs(alpha, 1.0, l * t.powf(alpha))?);
        }
        let (s1, _, _) = sup_with_doubling(&g, |t| {
            let ta = t.powf(alpha);
            Ok(ta * ml_abs(alpha, 1.0, l * ta)?)
        })?;
        denominator = denominator.max(s0 + s1);
    }
    Ok(PerronConstants {
        alpha,
        eigenvalues: eigenvalues.to_vec(),
        c1,
        c3,
        c_lambda,
        sup_term,
        sup_term_argmax,
        c_alpha_a,
        denominator,
        t_max,
        grid,
        warnings,
    })
}

/// Radius `r` with `q = C(alpha, A) l_h(r) <= q_target`, and the initial-value
/// radius `r_star = r (1 - q) / denominator`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusCertificate {
    pub r: f64,
    pub q: f64,
    pub r_star: f64,
    pub lipschitz: f64,
    pub q_target: f64,
    /// Every `(r, q)` evaluated during the search.
    pub trace: Vec<(f64, f64)>,
}

/// Searches `[r_min, r_max]` for the largest `r` with `q(r) <= 1/2`, using
/// sampled Lipschitz moduli of `h`. When only `1/2 < q(r_min) < 1` is
/// achievable, `r_min` is returned with that `q`.
pub fn admissible_radius(
    pc: &PerronConstants,
    h: &SharedField,
    r_min: f64,
    r_max: f64,
    pairs: usize,
    seed: u64,
) -> Result<RadiusCertificate, StabilityError> {
    if !(r_min > 0.0 && r_max >= r_min) {
        return Err(StabilityError::Input(format!("bad radius range [{r_min}, {r_max}]")));
    }
    let q_target = 0.5;
    let mut trace = Vec::new();
    let mut q_of = |r: f64| -> Result<(f64, f64), StabilityError> {
        let l = lipschitz_modulus(h, r, pairs, seed)?.value;
        let q = pc.q(l);
        trace.push((r, q));
        Ok((q, l))
    };
    let finish = |r: f64, q: f64, l: f64, trace: Vec<(f64, f64)>| RadiusCertificate {
        r,
        q,
        r_star: r * (1.0 - q) / pc.denominator,
        lipschitz: l,
        q_target,
        trace,
    };
    let (q_hi, l_hi) = q_of(r_max)?;
    if q_hi <= q_target {
        return Ok(finish(r_max, q_hi, l_hi, trace));
    }
    let (q_lo, l_lo) = q_of(r_min)?;
    if q_lo >= 1.0 {
        return Err(StabilityError::NoCertificate { r_min, q_min: q_lo });
    }
    if q_lo > q_target {
        return Ok(finish(r_min, q_lo, l_lo, trace));
    }
    let (mut lo, mut hi) = (r_min.ln(), r_max.ln());
    let mut best = (r_min, q_lo, l_lo);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let (q, l) = q_of(mid.exp())?;
        if q <= q_target {
            lo = mid;
            best = (mid.exp(), q, l);
        } else {
            hi = mid;
        }
        if hi - lo < 1e-4 {
            break;
        }
    }
    Ok(finish(best.0, best.1, best.2, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub value: f64,
    pub sup_head: f64,
    pub sup_tail: f64,
    /// Log-log slope of `t^alpha |x(t)|` over `[max(1, T/10), T]`.
    pub tail_slope: f64,
    /// `t^alpha |x(t)|` is still growing at the horizon.
    pub unbounded_trend: bool,
}

/// Discrete `|x|_w` over the nodes of `x`; the horizon must be at least 1.
pub fn weighted_norm(x: &SampledFunction, alpha: f64) -> Result<WeightedNorm, StabilityError> {
    check_alpha(alpha)?;
    let t = x.times();
    let horizon = x.mesh().horizon();
    if horizon < 1.0 {
        return Err(StabilityError::Input(format!("horizon {horizon} < 1")));
    }
    let norms = x.norms();
    let (mut head, mut tail): (f64, f64) = (0.0, 0.0);
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    let lo = (horizon / 10.0).max(1.0);
    for (&tj, &nj) in t.iter().zip(&norms) {
        if tj <= 1.0 {
            head = head.max(nj);
        }
        if tj >= 1.0 {
            let w = tj.powf(alpha) * nj;
            tail = tail.max(w);
            if tj >= lo && w > 0.0 {
                lx.push(tj.ln());
                ly.push(w.ln());
            }
        }
    }
    let tail_slope = if lx.len() >= 3 && lx[lx.len() - 1] > lx[0] { linear_fit(&lx, &ly).0 } else { 0.0 };
    Ok(WeightedNorm {
        value: head.max(tail),
        sup_head: head,
        sup_tail: tail,
        tail_slope,
        unbounded_trend: tail_slope > 1e-3,
    })
}

/// `K_lambda(s) = s^(alpha-1) E_{alpha,alpha}(lambda s^alpha)` integrated
/// against `1` and `tau - t_k` over one interval, seen from `t_j`
/// (`far = t_j - t_k`, `near = t_j - t_{k+1}`).
fn perron_moments(alpha: f64, lambda: f64, far: f64, near: f64) -> Result<(f64, f64), StabilityError> {
    let h = far - near;
    if near >= 10.0 * h {
        // smooth kernel: 4-point Gauss-Legendre
        const X: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
        const W: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
        let (mut m0, mut m1) = (0.0, 0.0);
        for q in 0..4 {
            let s = near + 0.5 * h * (1.0 + X[q]);
            let k = s.powf(alpha - 1.0) * ml_real(alpha, alpha, lambda * s.powf(alpha), ML_TOL)?;
            m0 += W[q] * k;
            m1 += W[q] * k * (far - s);
        }
        return Ok((0.5 * h * m0, 0.5 * h * m1));
    }
    // P0(s) = s^alpha E_{alpha,alpha+1}(lambda s^alpha), P2(s) = s^(alpha+1) E_{alpha,alpha+2}(lambda s^alpha)
    let p = |s: f64| -> Result<(f64, f64), StabilityError> {
        if s == 0.0 {
            return Ok((0.0, 0.0));
        }
        let sa = s.powf(alpha);
        Ok((
            sa * ml_real(alpha, alpha + 1.0, lambda * sa, ML_TOL)?,
            sa * s * ml_real(alpha, alpha + 2.0, lambda * sa, ML_TOL)?,
        ))
    };
    let (p0f, p2f) = p(far)?;
    let (p0n, p2n) = p(near)?;
    Ok((p0f - p0n, p2f - p2n - h * p0n))
}

/// Applies the Lyapunov-Perron operator of `D^alpha y = A y + h(y)` with
/// diagonal `A` to the sampled function `xi`, on the nodes of `xi`.
///
/// `h(xi)` is interpolated linearly on each interval and integrated exactly
/// against the Mittag-Leffler kernel. On uniform meshes the moments depend
/// only on `j - k` and are computed once.
pub fn perron_apply(
    alpha: f64,
    a: &DMatrix<f64>,
    h: &SharedField,
    x0: &[f64],
    xi: &SampledFunction,
) -> Result<SampledFunction, StabilityError> {
    check_alpha(alpha)?;
    let d = x0.len();
    if a.nrows() != d || a.ncols() != d || xi.dim() != d || h.dim() != d {
        return Err(StabilityError::Input("dimensions of A, h, x0 and xi differ".into()));
    }
    for i in 0..d {
        for j in 0..d {
            if i != j && a[(i, j)] != 0.0 {
                return Err(StabilityError::Unsupported(
                    "perron_apply needs a diagonal matrix; transform the system first".into(),
                ));
            }
        }
    }
    let t = xi.times();
    let n = t.len() - 1;
    let hv: Vec<Vec<f64>> = (0..=n).map(|k| h.eval_vec(t[k], xi.state(k))).collect();
    if hv.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StabilityError::Numeric("h is not finite along xi".into()));
    }
    let uniform = xi.mesh().is_uniform();
    let step = t[1];
    let mut out = vec![0.0; (n + 1) * d];
    for i in 0..d {
        let lambda = a[(i, i)];
        let cache: Vec<(f64, f64)> = if uniform {
            (1..=n)
                .map(|m| perron_moments(alpha, lambda, m as f64 * step, (m - 1) as f64 * step))
                .collect::<Result<_, _>>()?
        } else {
            Vec::new()
        };
        out[i] = x0[i];
        for j in 1..=n {
            let mut acc = ml_real(alpha, 1.0, lambda * t[j].powf(alpha), ML_TOL)? * x0[i];
            for k in 0..j {
                let dk = t[k + 1] - t[k];
                let (m0, m1) =
                    if uniform { cache[j - k - 1] } else { perron_moments(alpha, lambda, t[j] - t[k], t[j] - t[k + 1])? };
                acc += m0 * hv[k][i] + m1 / dk * (hv[k + 1][i] - hv[k][i]);
            }
            out[j * d + i] = acc;
        }
    }
    Ok(SampledFunction::new(xi.mesh().clone(), d, out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::scalar_field;
    use crate::mesh::Mesh;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn c1_examples() {
        let e = estimate_c1(0.5, c(-1.0, 0.0), 1e3, 40).unwrap();
        assert!((e.value - 1.0).abs() < 1e-10);
        let e = estimate_c1(0.5, c(-2.0, 0.0), 1e3, 40).unwrap();
        assert!(e.value > 0.0 && e.value <= 1.0 + 1e-10);
        let l = Complex64::from_polar(1.0, 0.9 * std::f64::consts::PI);
        let e = estimate_c1(0.5, l, 1e3, 40).unwrap();
        let fine = estimate_c1(0.5, l, 1e3, 80).unwrap();
        assert!(e.value.is_finite() && e.value >= 1.0);
        assert!((e.value - fine.value).abs() < 1e-2 * fine.value);
        assert!(matches!(estimate_c1(0.5, c(1.0, 0.0), 1e3, 40), Err(StabilityError::Sector { .. })));
    }

    #[test]
    fn c3_scaling_identity() {
        for alpha in [0.3, 0.5, 0.7] {
            for l in [0.5, 1.0, 2.0, 5.0] {
                let e = estimate_c3(alpha, c(-l, 0.0)).unwrap();
                assert!((e.value - 1.0 / l).abs() < 1e-8, "alpha {alpha} L {l}: {}", e.value);
            }
        }
    }

    #[test]
    fn c3_complex_is_finite() {
        let l = Complex64::from_polar(1.0, 0.8 * std::f64::consts::PI);
        let e = estimate_c3(0.6, l).unwrap();
        assert!(e.value.is_finite() && e.value > 0.0 && e.error < 1e-6);
        assert!(estimate_c3(0.6, c(1.0, 1.0)).is_err());
    }

    #[test]
    fn weighted_norm_examples() {
        let mesh = Mesh::geometric(100.0, 800, 1.05).unwrap();
        let one = SampledFunction::from_fn(mesh.clone(), |_| 1.0);
        let w = weighted_norm(&one, 0.5).unwrap();
        assert!((w.value - 10.0).abs() < 1e-12 && w.unbounded_trend);
        let zero = SampledFunction::from_fn(mesh, |_| 0.0);
        assert_eq!(weighted_norm(&zero, 0.5).unwrap().value, 0.0);
        let short = SampledFunction::from_fn(Mesh::uniform(0.5, 4).unwrap(), |_| 1.0);
        assert!(weighted_norm(&short, 0.5).is_err());
    }

    #[test]
    fn perron_linear_part() {
        let mesh = Mesh::uniform(5.0, 50).unwrap();
        let xi = SampledFunction::from_fn(mesh, |t| t.sin());
        let zero = scalar_field("zero", |_| 0.0);
        let a = DMatrix::from_element(1, 1, -1.0);
        let y = perron_apply(0.5, &a, &zero, &[2.0], &xi).unwrap();
        for (j, &t) in y.times().iter().enumerate() {
            let exact = 2.0 * ml_real(0.5, 1.0, -t.sqrt(), 1e-12).unwrap();
            assert!((y.state(j)[0] - exact).abs() < 1e-11);
        }
        let off = DMatrix::from_row_slice(2, 2, &[-1.0, 0.1, 0.0, -1.0]);
        let xi2 = SampledFunction::new(Mesh::uniform(1.0, 2).unwrap(), 2, vec![0.0; 6]).unwrap();
        let z2 = crate::field::FieldSpec::new("zero").param("d", 2.0).build().unwrap();
        assert!(matches!(perron_apply(0.5, &off, &z2, &[1.0, 1.0], &xi2), Err(StabilityError::Unsupported(_))));
    }

    #[test]
    fn perron_moments_match_quadrature() {
        // constant and linear h are integrated exactly by the moments
        let (alpha, lambda) = (0.4, -1.5);
        for (far, near) in [(0.3, 0.0), (1.0, 0.7), (5.0, 4.9), (2.0, 1.0)] {
            let (m0, m1) = perron_moments(alpha, lambda, far, near).unwrap();
            let k = |s: f64| s.powf(alpha - 1.0) * ml_real(alpha, alpha, lambda * s.powf(alpha), 1e-13).unwrap();
            // s = near + u^(1/alpha) removes the endpoint singularity
            let sub = |g: &dyn Fn(f64) -> f64| {
                integrate(
                    |u: f64| {
                        let s = near + u.powf(1.0 / alpha);
                        g(s) * u.powf(1.0 / alpha - 1.0) / alpha
                    },
                    0.0,
                    (far - near).powf(alpha),
                    1e-15,
                    1e-13,
                    200,
                )
                .value
            };
            let q0 = sub(&|s| k(s));
            let q1 = sub(&|s| k(s) * (far - s));
            assert!((m0 - q0).abs() < 1e-10 * q0.abs().max(1e-3), "{far} {near}: {m0} {q0}");
            assert!((m1 - q1).abs() < 1e-10 * q1.abs().max(1e-3), "{far} {near}: {m1} {q1}");
        }
    }
}
