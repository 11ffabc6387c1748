//! Caputo initial value problems `D^alpha x = f(t, x)`, `x(0) = x0`.
//!
//! [`solve_ivp`] integrates the equivalent Volterra equation
//! `x(t) = x0 + 1/Gamma(alpha) int_0^t (t-s)^(alpha-1) f(s, x(s)) ds`
//! with an Adams-Bashforth-Moulton product-integration scheme on an
//! arbitrary mesh: product-rectangle predictor, product-trapezoidal
//! corrector, fixed number of corrector sweeps. Cost is `O(N^2)`.
//!
//! Solutions of these equations typically behave like `x0 + c t^alpha` near
//! the origin, which limits the plain scheme to order `2 alpha` at the first
//! nodes. [`StartCorrection::PowerSeries`] adds starting weights so that the
//! first steps are resolved to the global order `1 + alpha`.

use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::SharedField;
use crate::fraccalc::{integral_row, kernel_moments, CalcError, SampledFunction};
use crate::mesh::{Mesh, MeshError, MeshSpec};
use crate::mlf::{ml_matrix_real, MlError, DEFAULT_MATRIX_TOL};
use crate::special::gamma;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error("field returned a non-finite value at node {node} (t = {t})")]
    Field { node: usize, t: f64 },
    #[error("trajectory did not complete; residuals need a completed run")]
    NotCompleted,
}

/// `D^alpha x = f(t, x)`, `x(0) = x0` on `[0, horizon]`, optionally confined to
/// the ball `|x - x0| <= domain`.
#[derive(Clone, Debug)]
pub struct CaputoIvp {
    pub alpha: f64,
    pub field: SharedField,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub domain: Option<f64>,
}

impl CaputoIvp {
    pub fn new(alpha: f64, field: SharedField, x0: Vec<f64>, horizon: f64) -> Result<Self, SolverError> {
        let p = CaputoIvp { alpha, field, x0, horizon, domain: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_domain(mut self, radius: f64) -> Result<Self, SolverError> {
        self.domain = Some(radius);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SolverError::Invalid(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SolverError::Invalid(format!("horizon = {} must be positive", self.horizon)));
        }
        if self.x0.len() != self.field.dim() {
            return Err(SolverError::Invalid(format!(
                "x0 has dimension {}, field has {}",
                self.x0.len(),
                self.field.dim()
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Invalid("x0 is not finite".into()));
        }
        if let Some(k) = self.domain {
            if !(k > 0.0) {
                return Err(SolverError::Invalid(format!("domain radius {k} must be positive")));
            }
        }
        Ok(())
    }
}

fn default_iters() -> usize {
    2
}

fn default_blowup() -> f64 {
    1e12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub mesh: MeshSpec,
    #[serde(default = "default_iters")]
    pub corrector_iters: usize,
    #[serde(default = "default_blowup")]
    pub blowup_threshold: f64,
    #[serde(default)]
    pub start_correction: StartCorrection,
    #[serde(default)]
    pub corrector: Corrector,
}

/// How the implicit corrector equation of each step is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corrector {
    /// `corrector_iters` fixed-point sweeps from the predictor.
    #[default]
    FixedPoint,
    /// Damped Newton iteration to convergence, falling back to the sweeps when
    /// it stalls. Needed when steps are large compared with the local
    /// Lipschitz constant, e.g. near the non-Lipschitz point of
    /// `-sign(x) |x|^beta`.
    Newton,
}

/// Optional correction of the first steps for solutions that behave like a
/// power series in `t^alpha` near the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartCorrection {
    #[default]
    None,
    /// Starting weights that keep every row exact for `t^(k + l alpha)` below
    /// `t^(1 + alpha)`, at most six terms.
    PowerSeries,
}

impl StartCorrection {
    pub fn exponents(self, alpha: f64) -> Vec<f64> {
        match self {
            StartCorrection::None => Vec::new(),
            StartCorrection::PowerSeries => {
                let mut e: Vec<f64> = (0..2)
                    .flat_map(|k| (0..).map(move |l| k as f64 + l as f64 * alpha).take_while(|&s| s < 1.0 + alpha - 1e-12))
                    .collect();
                e.sort_by(f64::total_cmp);
                e.dedup_by(|a, b| (*a - *b).abs() < 1e-8);
                e.truncate(6);
                e
            }
        }
    }
}

impl SolverConfig {
    pub fn new(mesh: MeshSpec) -> Self {
        SolverConfig {
            mesh,
            corrector_iters: default_iters(),
            blowup_threshold: default_blowup(),
            start_correction: StartCorrection::None,
            corrector: Corrector::FixedPoint,
        }
    }

    pub fn with_corrector(mut self, c: Corrector) -> Self {
        self.corrector = c;
        self
    }

    pub fn with_start_correction(mut self, c: StartCorrection) -> Self {
        self.start_correction = c;
        self
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(MeshSpec::Uniform { n })
    }

    pub fn graded(n: usize, exponent: f64) -> Self {
        Self::new(MeshSpec::Graded { n, exponent })
    }

    pub fn geometric(n: usize, stretch: f64) -> Self {
        Self::new(MeshSpec::Geometric { n, stretch })
    }

    pub fn refined(&self) -> Self {
        SolverConfig { mesh: self.mesh.refined(), ..*self }
    }

    fn validate(&self) -> Result<(), SolverError> {
        if self.corrector_iters == 0 {
            return Err(SolverError::Invalid("corrector_iters must be at least 1".into()));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(SolverError::Invalid("blowup_threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Status {
    Completed,
    /// The solution reached `|x - x0| = K` at `t_exit`; the exit point is the
    /// last sample of the trajectory.
    DomainExit { t_exit: f64, state: Vec<f64> },
    /// The solution left every bounded set or became non-finite after the
    /// last stored node; `t_blowup` is the first offending mesh time.
    Blowup { t_blowup: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: SampledFunction,
    pub status: Status,
    pub alpha: f64,
    pub config: Option<SolverConfig>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        self.samples.times()
    }

    pub fn state(&self, j: usize) -> &[f64] {
        self.samples.state(j)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    pub fn is_completed(&self) -> bool {
        self.status == Status::Completed
    }

    pub fn norms(&self) -> Vec<f64> {
        self.samples.norms()
    }

    pub fn last(&self) -> &[f64] {
        self.samples.state(self.len() - 1)
    }

    /// CSV with header `t,x1,...,xd` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.dim();
        let header: Vec<String> =
            std::iter::once("t".to_string()).chain((1..=d).map(|i| format!("x{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (j, t) in self.times().iter().enumerate() {
            write!(w, "{t:.16e}")?;
            for v in self.state(j) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Integrates `p` on the mesh described by `cfg`.
pub fn solve_ivp(p: &CaputoIvp, cfg: &SolverConfig) -> Result<Trajectory, SolverError> {
    p.validate()?;
    let mesh = cfg.mesh.build(p.horizon)?;
    solve_on_mesh(p, &mesh, cfg)
}

/// Integrates `p` on an explicit mesh; the mesh horizon overrides `p.horizon`.
pub fn solve_on_mesh(p: &CaputoIvp, mesh: &Mesh, cfg: &SolverConfig) -> Result<Trajectory, SolverError> {
    p.validate()?;
    cfg.validate()?;
    let exps = cfg.start_correction.exponents(p.alpha);
    if exps.len() > 1 && mesh.len() > exps.len() + 1 {
        if let Some(start) = StartWeights::new(mesh.times(), p.alpha, &exps) {
            let mut stepper = Stepper::new(p, mesh, cfg, Some(start))?;
            if stepper.corrected_start()? {
                return stepper.run();
            }
        }
    }
    Stepper::new(p, mesh, cfg, None)?.run()
}

/// Correction weights on nodes `0..m` that make each row exact for `t^sigma`.
struct StartWeights {
    exps: Vec<f64>,
    /// `t_k^sigma` for every exponent and node
    tpow: Vec<Vec<f64>>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// column scaling applied before factorisation
    scale: Vec<f64>,
    exact_coef: Vec<f64>,
}

impl StartWeights {
    fn new(t: &[f64], alpha: f64, exps: &[f64]) -> Option<Self> {
        let m = exps.len();
        let tpow: Vec<Vec<f64>> = exps.iter().map(|&s| t.iter().map(|&tk| tk.powf(s)).collect()).collect();
        // rows: exponents, columns: nodes 0..m; row i scaled by t_1^-sigma_i
        let scale: Vec<f64> = (0..m).map(|i| 1.0 / tpow[i][1]).collect();
        let v = DMatrix::from_fn(m, m, |i, c| tpow[i][c] * scale[i]);
        let sv = v.clone().singular_values();
        let cond = sv.max() / sv.min();
        if !(cond < 1e10) {
            return None;
        }
        let exact_coef = exps
            .iter()
            .map(|&s| gamma(s + 1.0) * gamma(alpha) / gamma(s + alpha + 1.0))
            .collect();
        Some(StartWeights { exps: exps.to_vec(), tpow, lu: v.lu(), scale, exact_coef })
    }

    fn len(&self) -> usize {
        self.exps.len()
    }

    /// Starting weights for a row whose base rule has weights `w` on nodes
    /// `0..w.len()` and targets time `tj`.
    fn solve(&self, alpha: f64, tj: f64, w: &[f64]) -> Vec<f64> {
        let m = self.len();
        let rhs = nalgebra::DVector::from_fn(m, |i, _| {
            let exact = self.exact_coef[i] * tj.powf(self.exps[i] + alpha);
            let quad: f64 = w.iter().zip(&self.tpow[i]).map(|(a, b)| a * b).sum();
            (exact - quad) * self.scale[i]
        });
        self.lu.solve(&rhs).map(|s| s.iter().copied().collect()).unwrap_or_else(|| vec![0.0; m])
    }
}

#[derive(Debug, PartialEq)]
enum Outcome {
    Accepted,
    Blowup,
    /// corrector iterate outside the ball of the given radius
    Exit(Vec<f64>, f64),
}

struct Stepper<'a> {
    p: &'a CaputoIvp,
    t: &'a [f64],
    mesh: &'a Mesh,
    cfg: &'a SolverConfig,
    d: usize,
    inv_gamma: f64,
    start: Option<StartWeights>,
    xs: Vec<f64>,
    fs: Vec<f64>,
    powers: Vec<f64>,
    pred_w: Vec<f64>,
    corr_w: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(p: &'a CaputoIvp, mesh: &'a Mesh, cfg: &'a SolverConfig, start: Option<StartWeights>) -> Result<Self, SolverError> {
        let t = mesh.times();
        let n = t.len() - 1;
        let d = p.x0.len();
        let mut xs = Vec::with_capacity((n + 1) * d);
        let mut fs = Vec::with_capacity((n + 1) * d);
        xs.extend_from_slice(&p.x0);
        let f0 = p.field.eval_vec(0.0, &p.x0);
        if f0.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Field { node: 0, t: 0.0 });
        }
        fs.extend_from_slice(&f0);
        Ok(Stepper {
            p,
            t,
            mesh,
            cfg,
            d,
            inv_gamma: 1.0 / gamma(p.alpha),
            start,
            xs,
            fs,
            powers: vec![0.0; n + 1],
            pred_w: vec![0.0; n + 1],
            corr_w: vec![0.0; n + 1],
        })
    }

    /// Product-rectangle (predictor) and product-trapezoidal (corrector)
    /// weights for row `j`.
    fn fill_weights(&mut self, j: usize) {
        let (t, alpha) = (self.t, self.p.alpha);
        let tj = t[j];
        for k in 0..j {
            self.powers[k] = (tj - t[k]).powf(alpha);
        }
        self.powers[j] = 0.0;
        self.corr_w[..=j].iter_mut().for_each(|w| *w = 0.0);
        for k in 0..j {
            let h = t[k + 1] - t[k];
            let (m0, m1) = kernel_moments(alpha, tj - t[k], tj - t[k + 1], h, self.powers[k], self.powers[k + 1]);
            self.pred_w[k] = m0;
            self.corr_w[k] += m0 - m1 / h;
            self.corr_w[k + 1] += m1 / h;
        }
    }

    fn field(&self, j: usize, x: &[f64], out: &mut [f64]) -> Result<(), SolverError> {
        self.p.field.eval(self.t[j], x, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Field { node: j, t: self.t[j] });
        }
        Ok(())
    }

    /// Solves the first `m` steps jointly with starting weights by Newton's
    /// method (finite-difference Jacobian). Returns false when the iteration
    /// fails, in which case the caller falls back to the uncorrected scheme.
    fn corrected_start(&mut self) -> Result<bool, SolverError> {
        let start = self.start.take().expect("start weights present");
        let m = start.len() - 1;
        let d = self.d;
        let alpha = self.p.alpha;
        // row j: base corrector weights on 0..=j plus starting weights on 0..=m
        let mut rows: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(m);
        for j in 1..=m {
            self.fill_weights(j);
            let base = self.corr_w[..=j].to_vec();
            let s = start.solve(alpha, self.t[j], &base);
            rows.push((base, s));
        }
        self.start = Some(start);
        // initial guess: uncorrected steps
        let mut plain = Stepper::new(self.p, self.mesh, self.cfg, None)?;
        for j in 1..=m {
            if plain.step(j)? != Outcome::Accepted {
                return Ok(false);
            }
        }
        let mut x: Vec<f64> = plain.xs[d..(m + 1) * d].to_vec();
        let f0 = self.fs[..d].to_vec();
        let nd = m * d;
        let mut fx = vec![0.0; nd];
        for _ in 0..30 {
            for k in 0..m {
                self.field(k + 1, &x[k * d..(k + 1) * d], &mut fx[k * d..(k + 1) * d])?;
            }
            let mut g = vec![0.0; nd];
            for (r, (base, s)) in rows.iter().enumerate() {
                let j = r + 1;
                for i in 0..d {
                    let mut acc = (base[0] + s[0]) * f0[i];
                    for k in 1..=j {
                        acc += base[k] * fx[(k - 1) * d + i];
                    }
                    for (c, sc) in s.iter().enumerate().skip(1) {
                        acc += sc * fx[(c - 1) * d + i];
                    }
                    g[r * d + i] = x[r * d + i] - self.p.x0[i] - self.inv_gamma * acc;
                }
            }
            let mut jac = DMatrix::<f64>::identity(nd, nd);
            let mut xp = vec![0.0; d];
            let mut fp = vec![0.0; d];
            let mut fm = vec![0.0; d];
            for k in 0..m {
                for q in 0..d {
                    let xk = &x[k * d..(k + 1) * d];
                    let step = 1e-7 * (1.0 + xk[q].abs());
                    xp.copy_from_slice(xk);
                    xp[q] += step;
                    self.field(k + 1, &xp, &mut fp)?;
                    xp[q] -= 2.0 * step;
                    self.field(k + 1, &xp, &mut fm)?;
                    for (r, (base, s)) in rows.iter().enumerate() {
                        let mut c = s[k + 1];
                        if k + 1 <= r + 1 {
                            c += base[k + 1];
                        }
                        for i in 0..d {
                            jac[(r * d + i, k * d + q)] -= self.inv_gamma * c * (fp[i] - fm[i]) / (2.0 * step);
                        }
                    }
                }
            }
            let Some(delta) = jac.lu().solve(&nalgebra::DVector::from_vec(g)) else {
                return Ok(false);
            };
            let mut size = 0.0f64;
            for (xi, di) in x.iter_mut().zip(delta.iter()) {
                *xi -= di;
                size = size.max(di.abs() / (1.0 + xi.abs()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Ok(false);
            }
            if size < 1e-14 {
                for k in 0..m {
                    let xk = x[k * d..(k + 1) * d].to_vec();
                    let mut f = vec![0.0; d];
                    self.field(k + 1, &xk, &mut f)?;
                    self.xs.extend_from_slice(&xk);
                    self.fs.extend_from_slice(&f);
                }
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Solves `x = base + w f(t_j, x)` by Newton's method with a
    /// finite-difference Jacobian and backtracking on the residual norm.
    fn newton_corrector(&self, j: usize, base: &[f64], w: f64, init: &[f64]) -> Option<Vec<f64>> {
        let d = self.d;
        let tj = self.t[j];
        let f = self.p.field.as_ref();
        let resid = |x: &[f64], out: &mut [f64]| -> Option<f64> {
            f.eval(tj, x, out);
            for i in 0..d {
                out[i] = x[i] - base[i] - w * out[i];
            }
            out.iter().all(|v| v.is_finite()).then(|| norm(out))
        };
        let mut x = init.to_vec();
        let mut g = vec![0.0; d];
        let mut r = resid(&x, &mut g)?;
        let (mut fp, mut fm, mut xp) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut trial = vec![0.0; d];
        let mut gt = vec![0.0; d];
        for _ in 0..60 {
            let scale = 1.0 + norm(&x);
            if r <= 1e-15 * scale {
                return Some(x);
            }
            let mut jac = DMatrix::<f64>::identity(d, d);
            for q in 0..d {
                let step = 1e-7 * (1.0 + x[q].abs());
                xp.copy_from_slice(&x);
                xp[q] += step;
                f.eval(tj, &xp, &mut fp);
                xp[q] -= 2.0 * step;
                f.eval(tj, &xp, &mut fm);
                for i in 0..d {
                    jac[(i, q)] -= w * (fp[i] - fm[i]) / (2.0 * step);
                }
            }
            let delta = jac.lu().solve(&nalgebra::DVector::from_column_slice(&g))?;
            let mut lambda = 1.0;
            loop {
                for i in 0..d {
                    trial[i] = x[i] - lambda * delta[i];
                }
                if let Some(rt) = resid(&trial, &mut gt) {
                    if rt < r {
                        break;
                    }
                }
                lambda *= 0.5;
                if lambda < 1e-12 {
                    return (r <= 1e-10 * scale).then_some(x);
                }
            }
            let size = lambda * norm(delta.as_slice());
            x.copy_from_slice(&trial);
            g.copy_from_slice(&gt);
            r = norm(&g);
            if size <= 1e-15 * scale {
                return (r <= 1e-10 * scale).then_some(x);
            }
        }
        None
    }

    /// Advances to node `j`, storing the new sample only when it is accepted.
    fn step(&mut self, j: usize) -> Result<Outcome, SolverError> {
        self.fill_weights(j);
        let d = self.d;
        let tj = self.t[j];
        let (sp, sc) = match &self.start {
            Some(s) => (
                s.solve(self.p.alpha, tj, &self.pred_w[..j]),
                s.solve(self.p.alpha, tj, &self.corr_w[..=j]),
            ),
            None => (Vec::new(), Vec::new()),
        };
        let mut pred = vec![0.0; d];
        let mut hist = vec![0.0; d];
        for k in 0..j {
            let fk = &self.fs[k * d..(k + 1) * d];
            for i in 0..d {
                pred[i] += self.pred_w[k] * fk[i];
                hist[i] += self.corr_w[k] * fk[i];
            }
        }
        for (c, (a, b)) in sp.iter().zip(&sc).enumerate() {
            let fk = &self.fs[c * d..(c + 1) * d];
            for i in 0..d {
                pred[i] += a * fk[i];
                hist[i] += b * fk[i];
            }
        }
        let mut x: Vec<f64> = (0..d).map(|i| self.p.x0[i] + self.inv_gamma * pred[i]).collect();
        let mut fx = vec![0.0; d];
        let mut finite = x.iter().all(|v| v.is_finite());
        let newton = match self.cfg.corrector {
            Corrector::Newton if finite => {
                let base: Vec<f64> = (0..d).map(|i| self.p.x0[i] + self.inv_gamma * hist[i]).collect();
                self.newton_corrector(j, &base, self.inv_gamma * self.corr_w[j], &x)
            }
            _ => None,
        };
        let sweeps = if let Some(root) = newton {
            x = root;
            0
        } else {
            self.cfg.corrector_iters
        };
        for _ in 0..sweeps {
            if !finite {
                break;
            }
            self.p.field.eval(tj, &x, &mut fx);
            if fx.iter().any(|v| !v.is_finite()) {
                if norm(&x) > self.cfg.blowup_threshold {
                    finite = false;
                    break;
                }
                return Err(SolverError::Field { node: j, t: tj });
            }
            for i in 0..d {
                x[i] = self.p.x0[i] + self.inv_gamma * (hist[i] + self.corr_w[j] * fx[i]);
            }
            finite = x.iter().all(|v| v.is_finite());
        }
        if !finite || norm(&x) > self.cfg.blowup_threshold {
            return Ok(Outcome::Blowup);
        }
        if let Some(k) = self.p.domain {
            let dist: Vec<f64> = x.iter().zip(&self.p.x0).map(|(a, b)| a - b).collect();
            if norm(&dist) > k {
                return Ok(Outcome::Exit(x, k));
            }
        }
        self.field(j, &x, &mut fx)?;
        self.xs.extend_from_slice(&x);
        self.fs.extend_from_slice(&fx);
        Ok(Outcome::Accepted)
    }

    fn run(mut self) -> Result<Trajectory, SolverError> {
        let d = self.d;
        let n = self.t.len() - 1;
        let first = self.xs.len() / d;
        let mut status = Status::Completed;
        let mut times: Vec<f64> = self.t[..first].to_vec();
        for j in first..=n {
            let (x, k) = match self.step(j)? {
                Outcome::Accepted => {
                    times.push(self.t[j]);
                    continue;
                }
                Outcome::Blowup => {
                    status = Status::Blowup { t_blowup: self.t[j] };
                    break;
                }
                Outcome::Exit(x, k) => (x, k),
            };
            // locate |x - x0| = k on the segment from the previous node
            let prev = &self.xs[(j - 1) * d..j * d];
            let d0: Vec<f64> = prev.iter().zip(&self.p.x0).map(|(a, b)| a - b).collect();
            let dv: Vec<f64> = x.iter().zip(prev).map(|(a, b)| a - b).collect();
            let a = dv.iter().map(|v| v * v).sum::<f64>();
            let b = d0.iter().zip(&dv).map(|(u, v)| u * v).sum::<f64>();
            let c = d0.iter().map(|v| v * v).sum::<f64>() - k * k;
            let s = ((-b + (b * b - a * c).max(0.0).sqrt()) / a).clamp(1e-9, 1.0);
            let t_exit = self.t[j - 1] + s * (self.t[j] - self.t[j - 1]);
            let state: Vec<f64> = prev.iter().zip(&dv).map(|(u, v)| u + s * v).collect();
            self.xs.extend_from_slice(&state);
            times.push(t_exit);
            status = Status::DomainExit { t_exit, state };
            break;
        }
        let mesh = if times.len() == self.t.len() { self.mesh.clone() } else { Mesh::new(times)? };
        let samples = SampledFunction::new(mesh, d, self.xs)?;
        Ok(Trajectory { samples, status, alpha: self.p.alpha, config: Some(*self.cfg) })
    }
}

/// `x(t_j) = E_alpha(t_j^alpha A) x0` via the matrix Mittag-Leffler function.
pub fn solve_linear(alpha: f64, a: &DMatrix<f64>, x0: &[f64], mesh: &Mesh) -> Result<Trajectory, SolverError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SolverError::Invalid(format!("alpha = {alpha} outside (0, 1)")));
    }
    if a.nrows() != a.ncols() || a.nrows() != x0.len() {
        return Err(SolverError::Invalid("matrix and initial state dimensions differ".into()));
    }
    let d = x0.len();
    let x = nalgebra::DVector::from_column_slice(x0);
    let mut values = Vec::with_capacity(mesh.len() * d);
    for &t in mesh.times() {
        let e = ml_matrix_real(alpha, 1.0, &(a * t.powf(alpha)), DEFAULT_MATRIX_TOL)?;
        values.extend((e * &x).iter());
    }
    Ok(Trajectory {
        samples: SampledFunction::new(mesh.clone(), d, values)?,
        status: Status::Completed,
        alpha,
        config: None,
    })
}

/// Volterra residuals of a completed trajectory.
///
/// `fine[j]` measures the trajectory against the product-trapezoidal Volterra
/// sum on its own mesh. For a predictor-corrector run this is the corrector
/// defect, so `subgrid` repeats the check on every other node, where the
/// discretisation error of the trajectory becomes visible. `max` is the
/// larger of the two maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub fine: Vec<f64>,
    pub subgrid: Vec<f64>,
    pub max_fine: f64,
    pub max_subgrid: f64,
    pub max: f64,
}

/// Residuals with the product-trapezoid rule, plus starting weights for the
/// exponents `exps` when there are at least two.
fn volterra_residuals(samples: &SampledFunction, p: &CaputoIvp, exps: &[f64]) -> Vec<f64> {
    let t = samples.times();
    let d = samples.dim();
    let inv_gamma = 1.0 / gamma(p.alpha);
    let fvals: Vec<Vec<f64>> =
        (0..t.len()).map(|k| p.field.eval_vec(t[k], samples.state(k))).collect();
    let start = if exps.len() > 1 && t.len() > exps.len() + 1 { StartWeights::new(t, p.alpha, exps) } else { None };
    let mut w = vec![0.0; t.len()];
    let mut out = vec![0.0; t.len()];
    for j in 1..t.len() {
        integral_row(t, p.alpha, j, &mut w);
        if let Some(sw) = &start {
            w[j + 1..sw.len().max(j + 1)].iter_mut().for_each(|v| *v = 0.0);
            for (k, c) in sw.solve(p.alpha, t[j], &w[..=j]).into_iter().enumerate() {
                w[k] += c;
            }
        }
        let mut r = vec![0.0; d];
        for (k, fk) in fvals.iter().enumerate().take((j + 1).max(start.as_ref().map_or(0, |s| s.len()))) {
            for i in 0..d {
                r[i] += w[k] * fk[i];
            }
        }
        let xj = samples.state(j);
        out[j] = (0..d).map(|i| (xj[i] - p.x0[i] - inv_gamma * r[i]).powi(2)).sum::<f64>().sqrt();
    }
    out[0] = norm(&samples.state(0).iter().zip(&p.x0).map(|(a, b)| a - b).collect::<Vec<_>>());
    out
}

pub fn residual_check(traj: &Trajectory, p: &CaputoIvp) -> Result<ResidualReport, SolverError> {
    if !traj.is_completed() {
        return Err(SolverError::NotCompleted);
    }
    if traj.dim() != p.x0.len() {
        return Err(SolverError::Invalid("trajectory and problem dimensions differ".into()));
    }
    let exps = traj.config.map(|c| c.start_correction.exponents(p.alpha)).unwrap_or_default();
    let fine = volterra_residuals(&traj.samples, p, &exps);
    let (_, idx) = traj.samples.mesh().coarsened();
    let subgrid = if idx.len() >= 2 {
        volterra_residuals(&traj.samples.select(&idx)?, p, &exps)
    } else {
        Vec::new()
    };
    let max_fine = fine.iter().copied().fold(0.0, f64::max);
    let max_subgrid = subgrid.iter().copied().fold(0.0, f64::max);
    Ok(ResidualReport { fine, subgrid, max_fine, max_subgrid, max: max_fine.max(max_subgrid) })
}
