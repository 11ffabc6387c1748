//! Riemann-Liouville integrals and Caputo derivatives of sampled functions.
//!
//! All operators act on the piecewise-linear interpolant of the samples and
//! integrate the singular kernels exactly against each linear piece
//! (product integration).
//!
//! | kernel | row `j` applied to samples gives |
//! |---|---|
//! | [`Kernel::Integral`] | `int_0^{t_j} (t_j - s)^(alpha-1) v(s) ds` (no `1/Gamma(alpha)`) |
//! | [`Kernel::Derivative`] | the Caputo derivative of order `alpha` at `t_j` |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Mesh, MeshError};
use crate::special::gamma;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalcError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("order alpha = {0} outside (0, 1)")]
    Order(f64),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("node {node} out of range for a grid of {len} nodes")]
    Node { node: usize, len: usize },
    #[error("state dimension must be positive")]
    Dimension,
}

fn check_order(alpha: f64) -> Result<(), CalcError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CalcError::Order(alpha))
    }
}

/// Samples of a (vector-valued) function on a mesh, stored node-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    mesh: Mesh,
    dim: usize,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(mesh: Mesh, dim: usize, values: Vec<f64>) -> Result<Self, CalcError> {
        if dim == 0 {
            return Err(CalcError::Dimension);
        }
        if values.len() != mesh.len() * dim {
            return Err(CalcError::Length { expected: mesh.len() * dim, got: values.len() });
        }
        Ok(SampledFunction { mesh, dim, values })
    }

    pub fn scalar(mesh: Mesh, values: Vec<f64>) -> Result<Self, CalcError> {
        Self::new(mesh, 1, values)
    }

    pub fn from_fn<F: FnMut(f64) -> f64>(mesh: Mesh, mut f: F) -> Self {
        let values = mesh.times().iter().map(|&t| f(t)).collect();
        SampledFunction { mesh, dim: 1, values }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn times(&self) -> &[f64] {
        self.mesh.times()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Samples of component `i`.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.dim).copied().collect()
    }

    /// Euclidean norm of the state at every node.
    pub fn norms(&self) -> Vec<f64> {
        self.values
            .chunks(self.dim)
            .map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Keeps the nodes listed in `idx` (which must start at 0 and increase).
    pub fn select(&self, idx: &[usize]) -> Result<Self, CalcError> {
        let times = idx.iter().map(|&i| self.mesh.times()[i]).collect();
        let mut values = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            values.extend_from_slice(self.state(i));
        }
        Self::new(Mesh::new(times)?, self.dim, values)
    }

    pub fn map<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> SampledFunction {
        let values = self.values.chunks(self.dim).map(|s| f(s)).collect();
        SampledFunction { mesh: self.mesh.clone(), dim: 1, values }
    }
}

/// Moments of the kernel `s^(e-1)` over one mesh interval `[a, b]` as seen
/// from a target time `t >= b`, with `far = t - a`, `near = t - b`,
/// `h = b - a`, `p_far = far^e`, `p_near = near^e`.
///
/// Returns `(int_a^b (t-s)^(e-1) ds, int_a^b (s-a)(t-s)^(e-1) ds)`. For
/// intervals short relative to their distance from `t` the binomial series
/// avoids the cancellation in the closed forms.
#[inline]
pub(crate) fn kernel_moments(e: f64, far: f64, near: f64, h: f64, p_far: f64, p_near: f64) -> (f64, f64) {
    let x = h / far;
    if x <= 0.2 {
        let mut c = 1.0;
        let mut s0 = 1.0;
        let mut s1 = 0.5;
        let mut n = 0.0;
        loop {
            c *= -(e - 1.0 - n) / (n + 1.0) * x;
            s0 += c / (n + 2.0);
            s1 += c / (n + 3.0);
            n += 1.0;
            if c.abs() < 1e-17 || n > 60.0 {
                break;
            }
        }
        let scale = p_far / far;
        (scale * h * s0, scale * h * h * s1)
    } else {
        let m0 = (p_far - p_near) / e;
        let m1 = far * m0 - (p_far * far - p_near * near) / (e + 1.0);
        (m0, m1)
    }
}

/// Which singular integral a weight table discretises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Integral,
    Derivative,
}

/// Product-integration weights on a mesh, generated row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureWeights {
    mesh: Mesh,
    alpha: f64,
    kernel: Kernel,
}

pub fn convolution_weights(mesh: &Mesh, alpha: f64, kernel: Kernel) -> Result<QuadratureWeights, CalcError> {
    check_order(alpha)?;
    Ok(QuadratureWeights { mesh: mesh.clone(), alpha, kernel })
}

impl QuadratureWeights {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// Weights for nodes `0..=j`. The derivative row 0 is empty; see
    /// [`caputo_derivative`] for the value at the origin.
    pub fn row(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; j + 1];
        match self.kernel {
            Kernel::Integral => integral_row(self.mesh.times(), self.alpha, j, &mut out),
            Kernel::Derivative => caputo_row(self.mesh.times(), self.alpha, j, &mut out),
        }
        out
    }

    /// Full lower-triangular table; row `j` has `j + 1` entries.
    pub fn table(&self) -> Vec<Vec<f64>> {
        (0..self.mesh.len()).map(|j| self.row(j)).collect()
    }

    /// Row `j` applied to every component of `f`.
    pub fn apply(&self, j: usize, f: &SampledFunction) -> Result<Vec<f64>, CalcError> {
        if f.mesh() != &self.mesh {
            return Err(CalcError::Length { expected: self.mesh.len(), got: f.len() });
        }
        if j >= self.mesh.len() {
            return Err(CalcError::Node { node: j, len: self.mesh.len() });
        }
        if self.kernel == Kernel::Derivative && j == 0 {
            return caputo_derivative(f, self.alpha, 0);
        }
        let w = self.row(j);
        let mut acc = vec![0.0; f.dim()];
        for (k, wk) in w.iter().enumerate() {
            for (a, v) in acc.iter_mut().zip(f.state(k)) {
                *a += wk * v;
            }
        }
        Ok(acc)
    }
}

/// Product-trapezoidal weights for `int_0^{t_j} (t_j-s)^(alpha-1) v(s) ds`.
pub(crate) fn integral_row(t: &[f64], alpha: f64, j: usize, out: &mut [f64]) {
    out[..=j].iter_mut().for_each(|w| *w = 0.0);
    if j == 0 {
        return;
    }
    let tj = t[j];
    let mut p_near = (tj - t[0]).powf(alpha);
    for k in 0..j {
        let far = tj - t[k];
        let near = tj - t[k + 1];
        let p_far = p_near;
        p_near = if k + 1 == j { 0.0 } else { near.powf(alpha) };
        let h = t[k + 1] - t[k];
        let (m0, m1) = kernel_moments(alpha, far, near, h, p_far, p_near);
        out[k] += m0 - m1 / h;
        out[k + 1] += m1 / h;
    }
}

/// Caputo derivative coefficients at node `j` from the singular-integral
/// representation
/// `(v(t)-v(0)) / (Gamma(1-alpha) t^alpha) + alpha/Gamma(1-alpha) int_0^t (v(t)-v(s)) (t-s)^(-alpha-1) ds`;
/// Row 0 is left empty; node 0 uses the limit `Gamma(1+alpha) (v_1 - v_0) / t_1^alpha`,
/// which involves node 1 and is applied by [`caputo_derivative`].
pub(crate) fn caputo_row(t: &[f64], alpha: f64, j: usize, out: &mut [f64]) {
    out[..=j].iter_mut().for_each(|w| *w = 0.0);
    if j == 0 {
        return;
    }
    let norm = 1.0 / gamma(1.0 - alpha);
    let tj = t[j];
    let edge = tj.powf(-alpha);
    out[j] += edge;
    out[0] -= edge;

    let h_last = tj - t[j - 1];
    let last = alpha * h_last.powf(-alpha) / (1.0 - alpha);
    out[j] += last;
    out[j - 1] -= last;

    let mut p_near = (tj - t[0]).powf(-alpha);
    for k in 0..j - 1 {
        let far = tj - t[k];
        let near = tj - t[k + 1];
        let p_far = p_near;
        p_near = near.powf(-alpha);
        let h = t[k + 1] - t[k];
        let (k0, k1) = kernel_moments(-alpha, far, near, h, p_far, p_near);
        let a0 = alpha * k0;
        let a1 = alpha * k1 / h;
        out[j] += a0;
        out[k] -= a0 - a1;
        out[k + 1] -= a1;
    }
    out.iter_mut().for_each(|w| *w *= norm);
}

/// `I^alpha f` at every node, including the `1/Gamma(alpha)` factor.
pub fn rl_integral(f: &SampledFunction, alpha: f64) -> Result<SampledFunction, CalcError> {
    check_order(alpha)?;
    let t = f.times();
    let n = t.len();
    let d = f.dim();
    let g = 1.0 / gamma(alpha);
    let mut w = vec![0.0; n];
    let mut values = vec![0.0; n * d];
    for j in 1..n {
        integral_row(t, alpha, j, &mut w);
        let out = &mut values[j * d..(j + 1) * d];
        for (k, wk) in w[..=j].iter().enumerate() {
            for (o, v) in out.iter_mut().zip(f.state(k)) {
                *o += wk * v;
            }
        }
        out.iter_mut().for_each(|o| *o *= g);
    }
    SampledFunction::new(f.mesh().clone(), d, values)
}

/// Caputo derivative of order `alpha` at node `j`.
pub fn caputo_derivative(f: &SampledFunction, alpha: f64, j: usize) -> Result<Vec<f64>, CalcError> {
    check_order(alpha)?;
    if j >= f.len() {
        return Err(CalcError::Node { node: j, len: f.len() });
    }
    if j == 0 {
        let g = gamma(1.0 + alpha) / f.times()[1].powf(alpha);
        return Ok(f.state(1).iter().zip(f.state(0)).map(|(b, a)| g * (b - a)).collect());
    }
    let mut w = vec![0.0; j + 1];
    caputo_row(f.times(), alpha, j, &mut w);
    let mut acc = vec![0.0; f.dim()];
    for (k, wk) in w.iter().enumerate() {
        for (a, v) in acc.iter_mut().zip(f.state(k)) {
            *a += wk * v;
        }
    }
    Ok(acc)
}

/// Caputo derivative at every node.
pub fn caputo_derivative_all(f: &SampledFunction, alpha: f64) -> Result<SampledFunction, CalcError> {
    check_order(alpha)?;
    let mut values = Vec::with_capacity(f.values().len());
    for j in 0..f.len() {
        values.extend(caputo_derivative(f, alpha, j)?);
    }
    SampledFunction::new(f.mesh().clone(), f.dim(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn power_rule_integral(p: f64, alpha: f64, t: f64) -> f64 {
        gamma(p + 1.0) / gamma(p + 1.0 + alpha) * t.powf(p + alpha)
    }

    /// Independent L1 discretisation of the Caputo derivative on the same
    /// piecewise-linear interpolant.
    fn l1_caputo(t: &[f64], v: &[f64], alpha: f64, j: usize) -> f64 {
        let mut s = 0.0;
        for k in 0..j {
            let slope = (v[k + 1] - v[k]) / (t[k + 1] - t[k]);
            s += slope * ((t[j] - t[k]).powf(1.0 - alpha) - (t[j] - t[k + 1]).powf(1.0 - alpha));
        }
        s / gamma(2.0 - alpha)
    }

    #[test]
    fn integral_of_constant_and_linear_is_exact() {
        let mesh = Mesh::graded(2.0, 37, 1.7).unwrap();
        for &alpha in &[0.2, 0.5, 0.9] {
            let one = rl_integral(&SampledFunction::from_fn(mesh.clone(), |_| 1.0), alpha).unwrap();
            let lin = rl_integral(&SampledFunction::from_fn(mesh.clone(), |t| t), alpha).unwrap();
            for (j, &t) in mesh.times().iter().enumerate().skip(1) {
                assert_relative_eq!(one.state(j)[0], power_rule_integral(0.0, alpha, t), max_relative = 1e-13);
                assert_relative_eq!(lin.state(j)[0], power_rule_integral(1.0, alpha, t), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn first_row_matches_symbolic_integral() {
        // int_0^h (h - s)^(alpha-1) (a s + b) ds = b h^alpha / alpha + a h^(alpha+1) / (alpha (alpha+1))
        let (alpha, h) = (0.35, 0.125);
        let w = convolution_weights(&Mesh::uniform(4.0 * h, 4).unwrap(), alpha, Kernel::Integral)
            .unwrap()
            .row(1);
        let (a, b) = (3.0, -0.7);
        let got = w[0] * b + w[1] * (a * h + b);
        let exact = b * h.powf(alpha) / alpha + a * h.powf(alpha + 1.0) / (alpha * (alpha + 1.0));
        assert_relative_eq!(got, exact, max_relative = 1e-14);
        // standard form: h^alpha / (alpha (alpha+1)) * (alpha, 1)
        let s = h.powf(alpha) / (alpha * (alpha + 1.0));
        assert_relative_eq!(w[0], s * alpha, max_relative = 1e-14);
        assert_relative_eq!(w[1], s, max_relative = 1e-14);
    }

    #[test]
    fn quadratic_converges_at_second_order() {
        let alpha = 0.3;
        let err = |n: usize| {
            let mesh = Mesh::uniform(1.0, n).unwrap();
            let i = rl_integral(&SampledFunction::from_fn(mesh.clone(), |t| t * t), alpha).unwrap();
            mesh.times()
                .iter()
                .enumerate()
                .map(|(j, &t)| (i.state(j)[0] - power_rule_integral(2.0, alpha, t)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(64), err(128), err(256));
        assert!(e1 / e2 >= 2f64.powf(1.5) && e2 / e3 >= 2f64.powf(1.5), "{e1} {e2} {e3}");
        assert!(e3 < 1e-5);
    }

    #[test]
    fn graded_power_function_final_node() {
        // t^alpha is linear in the grading variable but not in t, so the
        // piecewise-linear rule is accurate to interpolation order only.
        let alpha = 0.5;
        let n = 64;
        let mesh = Mesh::graded(1.0, n, 1.0 / alpha).unwrap();
        let i = rl_integral(&SampledFunction::from_fn(mesh, |t| t.powf(alpha)), alpha).unwrap();
        let exact = power_rule_integral(alpha, alpha, 1.0);
        assert!((i.state(n)[0] - exact).abs() < 1e-4, "{}", (i.state(n)[0] - exact).abs());
    }

    #[test]
    fn caputo_of_constant_vanishes() {
        let mesh = Mesh::graded(3.0, 50, 2.0).unwrap();
        let f = SampledFunction::from_fn(mesh, |_| 4.2);
        for j in 0..f.len() {
            assert!(caputo_derivative(&f, 0.6, j).unwrap()[0].abs() < 1e-12);
        }
    }

    #[test]
    fn caputo_matches_l1_scheme() {
        let mesh = Mesh::graded(2.0, 80, 1.5).unwrap();
        let f = SampledFunction::from_fn(mesh.clone(), |t| (3.0 * t).sin() + t * t);
        let v = f.component(0);
        for &alpha in &[0.1, 0.45, 0.8] {
            for j in 1..f.len() {
                let d = caputo_derivative(&f, alpha, j).unwrap()[0];
                let l1 = l1_caputo(mesh.times(), &v, alpha, j);
                assert!((d - l1).abs() <= 1e-11 * (1.0 + l1.abs()), "j {j}: {d} vs {l1}");
            }
        }
    }

    #[test]
    fn caputo_of_power_function() {
        let alpha = 0.4;
        let mesh = Mesh::graded(1.0, 400, 2.0).unwrap();
        let f = SampledFunction::from_fn(mesh, |t| t.powf(alpha));
        let exact = gamma(1.0 + alpha);
        for j in [100, 200, 400] {
            let d = caputo_derivative(&f, alpha, j).unwrap()[0];
            assert!((d - exact).abs() < 2e-3, "j {j}: {d}");
        }
        // limit form at the origin is exact for t^alpha
        assert_relative_eq!(caputo_derivative(&f, alpha, 0).unwrap()[0], exact, max_relative = 1e-13);
    }

    #[test]
    fn caputo_of_mittag_leffler_relaxation() {
        let alpha = 0.6;
        let e = |t: f64| crate::mlf::ml_real(alpha, 1.0, -t.powf(alpha), 1e-12).unwrap();
        let err = |n: usize| {
            let mesh = Mesh::uniform(2.0, n).unwrap();
            let f = SampledFunction::from_fn(mesh.clone(), e);
            (n / 4..=n)
                .map(|j| (caputo_derivative(&f, alpha, j).unwrap()[0] + f.state(j)[0]).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(200), err(400));
        assert!(e2 < 5e-3 && e2 < e1, "{e1} {e2}");
    }

    #[test]
    fn derivative_inverts_integral() {
        let alpha = 0.5;
        let psi = |t: f64| (2.0 * t).cos();
        let err = |n: usize| {
            let mesh = Mesh::uniform(1.0, n).unwrap();
            let f = SampledFunction::from_fn(mesh.clone(), psi);
            let i = rl_integral(&f, alpha).unwrap();
            (n / 4..n)
                .map(|j| (caputo_derivative(&i, alpha, j).unwrap()[0] - psi(mesh.times()[j])).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(100), err(200));
        assert!(e2 < e1 && e2 < 1e-2, "{e1} {e2}");
    }

    #[test]
    fn weight_rows_agree_with_operators() {
        let mesh = Mesh::graded(1.5, 30, 1.3).unwrap();
        let f = SampledFunction::from_fn(mesh.clone(), |t| t.exp());
        let wi = convolution_weights(&mesh, 0.7, Kernel::Integral).unwrap();
        let wd = convolution_weights(&mesh, 0.7, Kernel::Derivative).unwrap();
        let i = rl_integral(&f, 0.7).unwrap();
        for j in 1..mesh.len() {
            assert_relative_eq!(wi.apply(j, &f).unwrap()[0] / gamma(0.7), i.state(j)[0], max_relative = 1e-13);
            assert_relative_eq!(
                wd.apply(j, &f).unwrap()[0],
                caputo_derivative(&f, 0.7, j).unwrap()[0],
                max_relative = 1e-13
            );
        }
        assert_eq!(wi.table().len(), mesh.len());
    }

    #[test]
    fn input_errors() {
        let mesh = Mesh::uniform(1.0, 4).unwrap();
        assert!(matches!(SampledFunction::scalar(mesh.clone(), vec![0.0; 3]), Err(CalcError::Length { .. })));
        let f = SampledFunction::from_fn(mesh, |t| t);
        assert_eq!(rl_integral(&f, 1.0), Err(CalcError::Order(1.0)));
        assert!(matches!(caputo_derivative(&f, 0.5, 9), Err(CalcError::Node { .. })));
    }

    proptest! {
        #[test]
        fn integral_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, alpha in 0.05f64..0.95) {
            let mesh = Mesh::graded(2.0, 25, 1.4).unwrap();
            let f = SampledFunction::from_fn(mesh.clone(), |t| t.sin());
            let g = SampledFunction::from_fn(mesh.clone(), |t| 1.0 / (1.0 + t));
            let h = SampledFunction::from_fn(mesh.clone(), |t| a * t.sin() + b / (1.0 + t));
            let (fi, gi, hi) = (rl_integral(&f, alpha).unwrap(), rl_integral(&g, alpha).unwrap(), rl_integral(&h, alpha).unwrap());
            for j in 0..mesh.len() {
                let lhs = hi.state(j)[0];
                let rhs = a * fi.state(j)[0] + b * gi.state(j)[0];
                prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
                let dl = caputo_derivative(&h, alpha, j).unwrap()[0];
                let dr = a * caputo_derivative(&f, alpha, j).unwrap()[0] + b * caputo_derivative(&g, alpha, j).unwrap()[0];
                prop_assert!((dl - dr).abs() <= 1e-11 * (1.0 + dl.abs()));
            }
        }

        #[test]
        fn integral_preserves_positivity(vals in prop::collection::vec(0.0f64..10.0, 21), alpha in 0.05f64..0.95) {
            let mesh = Mesh::uniform(3.0, 20).unwrap();
            let f = SampledFunction::scalar(mesh, vals).unwrap();
            let i = rl_integral(&f, alpha).unwrap();
            prop_assert!(i.values().iter().all(|v| *v >= 0.0));
        }
    }
}
