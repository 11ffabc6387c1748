use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::MlError;
use crate::special::{ln_gamma, recip_gamma};

/// Default relative accuracy for scalar evaluations.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Series is attempted for |z| at or below this radius.
pub const SERIES_RADIUS: f64 = 5.0;
/// Asymptotic expansion is attempted for |z| at or above this radius.
pub const ASYMPTOTIC_RADIUS: f64 = 14.0;

/// Poles whose angle lies within this distance of +-pi sit on the Stokes
/// boundary; their residues are counted as error, not value.
const STOKES_MARGIN: f64 = 0.05 * PI;

const EPS: f64 = f64::EPSILON;

/// A request for E_{alpha,beta}(z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlRequest {
    pub alpha: f64,
    pub beta: f64,
    pub z: Complex64,
    pub tol: f64,
}

impl MlRequest {
    pub fn new(alpha: f64, beta: f64, z: Complex64) -> Self {
        MlRequest { alpha, beta, z, tol: DEFAULT_TOL }
    }

    pub fn real(alpha: f64, beta: f64, x: f64) -> Self {
        Self::new(alpha, beta, Complex64::new(x, 0.0))
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<(), MlError> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(MlError::InvalidInput(format!("alpha = {} outside (0, 2)", self.alpha)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(MlError::InvalidInput(format!("beta = {} must be positive", self.beta)));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-4) {
            return Err(MlError::InvalidInput(format!("tol = {} outside (0, 1e-4]", self.tol)));
        }
        if !(self.z.re.is_finite() && self.z.im.is_finite()) {
            return Err(MlError::InvalidInput("z is not finite".into()));
        }
        Ok(())
    }
}

/// Evaluation method that produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Series,
    Asymptotic,
    Contour,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlValue {
    pub value: Complex64,
    pub region: Region,
    /// Estimated relative error of `value`.
    pub est_error: f64,
}

/// Raw output of one evaluation method: value and absolute error estimate.
#[derive(Debug, Clone, Copy)]
struct Estimate {
    value: Complex64,
    abs_error: f64,
}

impl Estimate {
    fn rel_error(&self) -> f64 {
        let m = self.value.norm();
        if m > 0.0 {
            self.abs_error / m
        } else if self.abs_error == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn into_value(self, region: Region, real_input: bool) -> MlValue {
        let value = if real_input { Complex64::new(self.value.re, 0.0) } else { self.value };
        MlValue { value, region, est_error: self.rel_error() }
    }
}

/// E_{alpha,beta}(z) = sum_k z^k / Gamma(alpha k + beta) to relative accuracy `req.tol`.
///
/// Region choice is a deterministic function of the inputs: the series for
/// |z| <= 5 when its cancellation estimate meets the tolerance, the
/// asymptotic expansion for |z| >= 14 when its truncation and Stokes-line
/// estimates meet the tolerance, and contour inversion otherwise.
pub fn ml_scalar(req: &MlRequest) -> Result<MlValue, MlError> {
    req.validate()?;
    let real_input = req.z.im == 0.0;
    let r = req.z.norm();
    let mut best: Option<(Estimate, Region)> = None;

    let mut consider = |est: Estimate, region: Region| -> Option<MlValue> {
        if est.value.re.is_finite() && est.value.im.is_finite() && est.rel_error() <= req.tol {
            return Some(est.into_value(region, real_input));
        }
        match &best {
            Some((b, _)) if b.rel_error() <= est.rel_error() => {}
            _ => best = Some((est, region)),
        }
        None
    };

    if r <= SERIES_RADIUS {
        if let Some(v) = consider(series(req.alpha, req.beta, req.z), Region::Series) {
            return Ok(v);
        }
    } else if r >= ASYMPTOTIC_RADIUS {
        if let Some(v) = consider(asymptotic(req.alpha, req.beta, req.z), Region::Asymptotic) {
            return Ok(v);
        }
    }
    let eps_target = (req.tol * 1e-5).max(1e-15);
    if let Some(v) = consider(contour(req.alpha, req.beta, req.z, eps_target), Region::Contour) {
        return Ok(v);
    }
    let (est, region) = best.expect("at least one estimate");
    if !(est.value.re.is_finite() && est.value.im.is_finite()) {
        return Err(MlError::Overflow { alpha: req.alpha, beta: req.beta, z: req.z });
    }
    let v = est.into_value(region, real_input);
    Err(MlError::Accuracy { best: v.value, est_error: v.est_error, region })
}

/// Evaluates with a fixed method, bypassing region selection. The returned
/// `est_error` is that method's own estimate; no tolerance check is made.
pub fn ml_scalar_in(req: &MlRequest, region: Region) -> Result<MlValue, MlError> {
    req.validate()?;
    let est = match region {
        Region::Series => series(req.alpha, req.beta, req.z),
        Region::Asymptotic => asymptotic(req.alpha, req.beta, req.z),
        Region::Contour => contour(req.alpha, req.beta, req.z, (req.tol * 1e-5).max(1e-15)),
    };
    Ok(est.into_value(region, req.z.im == 0.0))
}

/// Real-argument convenience wrapper.
pub fn ml_real(alpha: f64, beta: f64, x: f64, tol: f64) -> Result<f64, MlError> {
    Ok(ml_scalar(&MlRequest::real(alpha, beta, x).with_tol(tol))?.value.re)
}

/// Complex-argument convenience wrapper returning only the value.
pub fn ml_complex(alpha: f64, beta: f64, z: Complex64, tol: f64) -> Result<Complex64, MlError> {
    Ok(ml_scalar(&MlRequest::new(alpha, beta, z).with_tol(tol))?.value)
}

/// Neumaier-compensated complex accumulator.
#[derive(Default)]
struct CompensatedSum {
    re: f64,
    re_c: f64,
    im: f64,
    im_c: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: Complex64) {
        fn step(sum: &mut f64, c: &mut f64, x: f64) {
            let t = *sum + x;
            if sum.abs() >= x.abs() {
                *c += (*sum - t) + x;
            } else {
                *c += (x - t) + *sum;
            }
            *sum = t;
        }
        step(&mut self.re, &mut self.re_c, v.re);
        step(&mut self.im, &mut self.im_c, v.im);
    }

    fn total(&self) -> Complex64 {
        Complex64::new(self.re + self.re_c, self.im + self.im_c)
    }
}

fn series(alpha: f64, beta: f64, z: Complex64) -> Estimate {
    if z == Complex64::new(0.0, 0.0) {
        return Estimate { value: Complex64::new(recip_gamma(beta), 0.0), abs_error: 0.0 };
    }
    let ln_z = z.ln();
    let mut acc = CompensatedSum::default();
    let mut rounding = 0.0;
    let mut power = Complex64::new(1.0, 0.0);
    let mut prev_mag = f64::INFINITY;
    let mut tail = f64::INFINITY;
    for k in 0..20_000usize {
        let arg = alpha * k as f64 + beta;
        let direct = arg <= 170.0 && power.norm() < 1e290;
        let (term, rel) = if direct {
            (power * recip_gamma(arg), EPS * (8.0 + k as f64))
        } else {
            let lg = ln_gamma(arg);
            let l = ln_z * k as f64 - lg;
            (l.exp(), EPS * (8.0 + l.re.abs() + lg.abs()))
        };
        let mag = term.norm();
        acc.add(term);
        rounding += rel * mag;
        if direct {
            power *= z;
        }
        // Ratio of successive magnitudes; once below 1/2 the terms are
        // geometrically dominated and the tail is bounded by mag * r / (1 - r).
        let ratio = if prev_mag.is_finite() && prev_mag > 0.0 { mag / prev_mag } else { 1.0 };
        prev_mag = mag;
        if k >= 2 && ratio < 0.5 {
            let bound = mag * ratio / (1.0 - ratio);
            if bound <= 0.25 * EPS * acc.total().norm() || mag == 0.0 {
                tail = bound;
                break;
            }
        }
    }
    let value = acc.total();
    Estimate { value, abs_error: rounding + tail + EPS * value.norm() }
}

/// Magnitude bound for the k-th algebraic term: |z|^{-k} Gamma(alpha k - beta + 1) / pi
/// dominates |z^{-k} / Gamma(beta - alpha k)|.
fn algebraic_bound(alpha: f64, beta: f64, ln_r: f64, k: usize) -> f64 {
    let x = beta - alpha * k as f64;
    let lg = if x < 0.5 {
        ln_gamma(1.0 - x) - PI.ln()
    } else {
        -ln_gamma(x)
    };
    (lg - k as f64 * ln_r).exp()
}

fn pole_angles(alpha: f64, theta: f64, limit: f64) -> Vec<f64> {
    let jmin = ((-limit * alpha - theta) / (2.0 * PI)).ceil() as i64;
    let jmax = ((limit * alpha - theta) / (2.0 * PI)).floor() as i64;
    (jmin..=jmax).map(|j| (theta + 2.0 * PI * j as f64) / alpha).collect()
}

fn residue(alpha: f64, beta: f64, s: Complex64) -> Complex64 {
    (s.ln() * (1.0 - beta) + s).exp() / alpha
}

fn asymptotic(alpha: f64, beta: f64, z: Complex64) -> Estimate {
    let r = z.norm();
    let theta = z.arg();
    let root = r.powf(1.0 / alpha);
    let mut value = CompensatedSum::default();
    let mut error = 0.0;
    let mut exp_mag = 0.0;

    for angle in pole_angles(alpha, theta, PI + STOKES_MARGIN) {
        let s = Complex64::from_polar(root, angle);
        let res = residue(alpha, beta, s);
        if angle.abs() < PI - STOKES_MARGIN {
            value.add(res);
            exp_mag += res.norm();
        } else {
            error += res.norm();
        }
    }

    let ln_r = r.ln();
    let inv_z = z.inv();
    let mut power = Complex64::new(1.0, 0.0);
    let mut prev_bound = f64::INFINITY;
    let mut algebraic = CompensatedSum::default();
    let mut truncation = 0.0;
    for k in 1..=400usize {
        power *= inv_z;
        let bound = algebraic_bound(alpha, beta, ln_r, k);
        if bound >= prev_bound {
            // smallest term passed: the omitted remainder is of this size
            truncation = bound;
            break;
        }
        let term = -power * recip_gamma(beta - alpha * k as f64);
        algebraic.add(term);
        prev_bound = bound;
        let scale = (algebraic.total().norm() + exp_mag).max(f64::MIN_POSITIVE);
        if bound < 0.1 * EPS * scale {
            truncation = bound;
            break;
        }
        truncation = bound;
    }
    value.add(algebraic.total());
    let v = value.total();
    Estimate { value: v, abs_error: error + truncation + 4.0 * EPS * (v.norm() + exp_mag) }
}

// ---------------------------------------------------------------------------
// Laplace-transform inversion on an optimal parabolic contour.
//
// t^{beta-1} E_{alpha,beta}(z t^alpha) has Laplace transform
// s^{alpha-beta} / (s^alpha - z); we invert at t = 1. Singularities are the
// branch point at the origin and the poles s^alpha = z on the principal
// sheet. The contour s(u) = mu (1 + iu)^2 is placed between two consecutive
// singularities, sorted by phi(s) = (Re s + |s|)/2, with mu, h, N chosen to
// balance discretisation and round-off; poles to its right add residues.

const LOG_MACHINE_EPS: f64 = -36.043_653_389_117_154;

struct ContourParams {
    mu: f64,
    h: f64,
    n: f64,
}

fn optimal_param_between(
    phi_j: f64,
    phi_j1: f64,
    pj: f64,
    qj: f64,
    mut log_eps: f64,
) -> Option<ContourParams> {
    let fac = 1.01;
    let f_max = (log_eps - LOG_MACHINE_EPS).exp();
    let sq_phi_j = phi_j.sqrt();
    let threshold = 2.0 * ((log_eps - LOG_MACHINE_EPS)).sqrt();
    let sq_phi_j1 = phi_j1.sqrt().min(threshold - sq_phi_j);

    let (sq_bar_j, sq_bar_j1, f_bar) = if pj < 1e-14 && qj < 1e-14 {
        (sq_phi_j, sq_phi_j1, 1.0)
    } else if pj < 1e-14 {
        let f_min = if sq_phi_j > 0.0 {
            fac * (sq_phi_j / (sq_phi_j1 - sq_phi_j)).powf(qj)
        } else {
            fac
        };
        if f_min >= f_max {
            return None;
        }
        let f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fq = f_bar.powf(-1.0 / qj);
        (sq_phi_j, (2.0 * sq_phi_j1 - fq * sq_phi_j) / (2.0 + fq), f_bar)
    } else if qj < 1e-14 {
        let f_min = fac * (sq_phi_j1 / (sq_phi_j1 - sq_phi_j)).powf(pj);
        if f_min >= f_max {
            return None;
        }
        let f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        ((2.0 * sq_phi_j + fp * sq_phi_j1) / (2.0 - fp), sq_phi_j1, f_bar)
    } else {
        let mut f_min = fac * (sq_phi_j + sq_phi_j1) / (sq_phi_j1 - sq_phi_j).powf(pj.max(qj));
        if f_min >= f_max {
            return None;
        }
        f_min = f_min.max(1.5);
        let f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        let fq = f_bar.powf(-1.0 / qj);
        let w = -phi_j1 / log_eps;
        let den = 2.0 + w - (1.0 + w) * fp + fq;
        let a = ((2.0 + w + fq) * sq_phi_j + fp * sq_phi_j1) / den;
        let b = (-(1.0 + w) * fq * sq_phi_j + (2.0 + w - (1.0 + w) * fp) * sq_phi_j1) / den;
        (a, b, f_bar)
    };

    log_eps -= f_bar.ln();
    let w = -sq_bar_j1 * sq_bar_j1 / log_eps;
    let mu = (((1.0 + w) * sq_bar_j + sq_bar_j1) / (2.0 + w)).powi(2);
    let h = -2.0 * PI / log_eps * (sq_bar_j1 - sq_bar_j) / ((1.0 + w) * sq_bar_j + sq_bar_j1);
    let n = ((1.0 - log_eps / mu).sqrt() / h).ceil();
    if !(mu > 0.0 && h > 0.0 && n.is_finite()) {
        return None;
    }
    Some(ContourParams { mu, h, n })
}

fn optimal_param_unbounded(phi_j: f64, pj: f64, log_eps: f64) -> Option<ContourParams> {
    let sq_phi_j = phi_j.sqrt();
    let mut phibar = if phi_j > 0.0 { phi_j * 1.01 } else { 0.01 };
    let mut sq_phibar = phibar.sqrt();
    let (f_min, f_max, f_tar) = (1.0, 10.0, 5.0f64);

    let mut n;
    let mut a;
    let mut sq_mu;
    let mut iterations = 0;
    loop {
        let phi_t = phibar;
        let log_eps_phi_t = log_eps / phi_t;
        n = (phi_t / PI * (1.0 - 1.5 * log_eps_phi_t + (1.0 - 2.0 * log_eps_phi_t).sqrt())).ceil();
        a = PI * n / phi_t;
        sq_mu = sq_phibar * (4.0 - a).abs() / (7.0 - (1.0 + 12.0 * a).sqrt()).abs();
        let fbar = ((sq_phibar - sq_phi_j) / sq_mu).powf(-pj);
        iterations += 1;
        if pj < 1e-14 || (f_min < fbar && fbar < f_max) || iterations > 100 {
            break;
        }
        sq_phibar = f_tar.powf(-1.0 / pj) * sq_mu + sq_phi_j;
        phibar = sq_phibar * sq_phibar;
    }
    let mut mu = sq_mu * sq_mu;
    let mut h = (-3.0 * a - 2.0 + 2.0 * (1.0 + 12.0 * a).sqrt()) / (4.0 - a) / n;

    let threshold = log_eps - LOG_MACHINE_EPS;
    if mu > threshold {
        let q = if pj.abs() < 1e-14 { 0.0 } else { f_tar.powf(-1.0 / pj) * mu.sqrt() };
        let phibar = (q + phi_j.sqrt()).powi(2);
        if phibar < threshold {
            let w = (LOG_MACHINE_EPS / (LOG_MACHINE_EPS - log_eps)).sqrt();
            let u = (-phibar / LOG_MACHINE_EPS).sqrt();
            mu = threshold;
            n = (w * log_eps / 2.0 / PI / (u * w - 1.0)).ceil();
            h = (LOG_MACHINE_EPS / (LOG_MACHINE_EPS - log_eps)).sqrt() / n;
        } else {
            return None;
        }
    }
    if !(mu > 0.0 && h > 0.0 && n.is_finite() && n > 0.0) {
        return None;
    }
    Some(ContourParams { mu, h, n })
}

/// Contour value with an a-posteriori error estimate: the quadrature is
/// repeated on a coarser contour and the discrepancy, scaled by the ratio of
/// the two discretisation targets, bounds the error of the fine result.
fn contour(alpha: f64, beta: f64, z: Complex64, eps_target: f64) -> Estimate {
    let fine = contour_raw(alpha, beta, z, eps_target);
    let coarse_target = (eps_target * 1e3).min(1e-6);
    let coarse = contour_raw(alpha, beta, z, coarse_target);
    if !fine.value.re.is_finite() || !fine.value.im.is_finite() {
        return fine.into_estimate(f64::INFINITY);
    }
    let ratio = (fine.log_eps - coarse.log_eps).exp().min(1.0);
    let discretisation = ((fine.value - coarse.value).norm() * ratio).max(fine.log_eps.exp() * 1e-3);
    fine.into_estimate(discretisation)
}

struct ContourRun {
    value: Complex64,
    rounding: f64,
    log_eps: f64,
}

impl ContourRun {
    fn into_estimate(self, discretisation: f64) -> Estimate {
        Estimate { value: self.value, abs_error: discretisation + self.rounding }
    }
}

fn contour_raw(alpha: f64, beta: f64, z: Complex64, eps_target: f64) -> ContourRun {
    let mut log_eps = eps_target.ln();
    let r = z.norm();
    let theta = z.arg();

    let mut poles: Vec<(f64, Complex64)> = if r > 0.0 {
        pole_angles(alpha, theta, PI)
            .into_iter()
            .filter(|a| a.abs() <= PI)
            .map(|a| {
                let s = Complex64::from_polar(r.powf(1.0 / alpha), a);
                (0.5 * (s.re + s.norm()), s)
            })
            .filter(|(phi, _)| *phi > 1e-15)
            .collect()
    } else {
        Vec::new()
    };
    poles.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut s_star = vec![Complex64::new(0.0, 0.0)];
    let mut phi = vec![0.0];
    for (p, s) in &poles {
        s_star.push(*s);
        phi.push(*p);
    }
    let j1_count = s_star.len();
    phi.push(f64::INFINITY);
    let mut p = vec![1.0; j1_count];
    p[0] = (-2.0 * (alpha - beta + 1.0)).max(0.0);
    let mut q = vec![1.0; j1_count];
    q[j1_count - 1] = f64::INFINITY;

    let admissible: Vec<usize> = (0..j1_count)
        .filter(|&j| phi[j] < log_eps - LOG_MACHINE_EPS && phi[j] < phi[j + 1])
        .collect();

    let mut chosen: Option<(usize, ContourParams)> = None;
    while chosen.is_none() {
        let mut best: Option<(usize, ContourParams)> = None;
        for &j in &admissible {
            let params = if j < j1_count - 1 {
                optimal_param_between(phi[j], phi[j + 1], p[j], q[j], log_eps)
            } else {
                optimal_param_unbounded(phi[j], p[j], log_eps)
            };
            if let Some(cp) = params {
                if best.as_ref().map_or(true, |(_, b)| cp.n < b.n) {
                    best = Some((j, cp));
                }
            }
        }
        match best {
            Some((j, cp)) if cp.n <= 200.0 => chosen = Some((j, cp)),
            Some(found) if log_eps > -2.0 => chosen = Some(found),
            _ if log_eps > -2.0 => break,
            _ => log_eps += 10f64.ln(),
        }
    }
    let Some((region, cp)) = chosen else {
        return ContourRun { value: Complex64::new(f64::NAN, f64::NAN), rounding: f64::INFINITY, log_eps };
    };

    let n = cp.n as i64;
    let i = Complex64::new(0.0, 1.0);
    let mut integral = CompensatedSum::default();
    let mut abs_sum = 0.0;
    for k in -n..=n {
        let u = cp.h * k as f64;
        let s = (i * u + 1.0).powi(2) * cp.mu;
        let ds = Complex64::new(-2.0 * cp.mu * u, 2.0 * cp.mu);
        let ln_s = s.ln();
        let num = (ln_s * (alpha - beta)).exp();
        let den = (ln_s * alpha).exp() - z;
        let term = s.exp() * num / den * ds;
        abs_sum += term.norm();
        integral.add(term);
    }
    let scale = cp.h / (2.0 * PI);
    let mut value = integral.total() * scale / i;

    let mut residue_mag = 0.0;
    for s in &s_star[region + 1..] {
        let res = residue(alpha, beta, *s);
        residue_mag += res.norm();
        value += res;
    }
    let rounding = 4.0 * EPS * (abs_sum * scale + residue_mag);
    ContourRun { value, rounding, log_eps }
}
