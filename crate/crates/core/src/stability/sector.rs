//! Sector condition, linearisation about an equilibrium, and sampled
//! Lipschitz moduli.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{check_alpha, StabilityError};
use crate::field::{FnField, SharedField};
use crate::halton::Halton;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorVerdict {
    StableSector,
    NotInSector,
    ZeroEigenvalue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorReport {
    pub alpha: f64,
    pub eigenvalues: Vec<Complex64>,
    pub in_sector: Vec<bool>,
    pub verdict: SectorVerdict,
}

/// Magnitude below which an eigenvalue counts as zero, relative to the
/// spectral scale.
const ZERO_EIGEN: f64 = 1e-12;

/// `lambda != 0` and `|arg lambda| > alpha pi / 2`.
pub fn in_sector(alpha: f64, lambda: Complex64) -> bool {
    lambda.norm() > 0.0 && lambda.arg().abs() > alpha * PI / 2.0
}

/// Classifies a given spectrum.
pub fn classify_spectrum(alpha: f64, eigenvalues: &[Complex64]) -> Result<SectorReport, StabilityError> {
    check_alpha(alpha)?;
    if eigenvalues.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
        return Err(StabilityError::Numeric("non-finite eigenvalue".into()));
    }
    let scale = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let zero = |l: &Complex64| l.norm() <= ZERO_EIGEN * scale;
    let in_sector: Vec<bool> = eigenvalues.iter().map(|&l| !zero(&l) && in_sector(alpha, l)).collect();
    let verdict = if eigenvalues.iter().any(zero) {
        SectorVerdict::ZeroEigenvalue
    } else if in_sector.iter().all(|&f| f) {
        SectorVerdict::StableSector
    } else {
        SectorVerdict::NotInSector
    };
    Ok(SectorReport { alpha, eigenvalues: eigenvalues.to_vec(), in_sector, verdict })
}

/// Eigenvalues of `a` tested against the open sector `|arg| > alpha pi / 2`.
pub fn sector_classify(alpha: f64, a: &DMatrix<f64>) -> Result<SectorReport, StabilityError> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(StabilityError::Input(format!("matrix is {}x{}, expected square", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(StabilityError::Numeric("matrix has non-finite entries".into()));
    }
    let ev: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    classify_spectrum(alpha, &ev)
}

/// `field(x) = A (x - x_star) + remainder(x)`.
#[derive(Clone)]
pub struct Linearization {
    pub a: DMatrix<f64>,
    pub x_star: Vec<f64>,
    pub remainder: SharedField,
}

impl std::fmt::Debug for Linearization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Linearization").field("a", &self.a).field("x_star", &self.x_star).finish()
    }
}

/// Central-difference Jacobian at an equilibrium `x_star` (evaluated at
/// `t = 0`) and the remainder field, which vanishes at `x_star` exactly.
/// Entries below `10 fd_step^2`, the truncation level of the difference
/// quotient, are set to zero.
pub fn linearize(field: &SharedField, x_star: &[f64], fd_step: f64) -> Result<Linearization, StabilityError> {
    let d = field.dim();
    if x_star.len() != d {
        return Err(StabilityError::Input(format!("x_star has dimension {}, field has {d}", x_star.len())));
    }
    if !(fd_step > 0.0) {
        return Err(StabilityError::Input("fd_step must be positive".into()));
    }
    let f_star = field.eval_vec(0.0, x_star);
    if f_star.iter().any(|v| !v.is_finite()) {
        return Err(StabilityError::Numeric("field is not finite at x_star".into()));
    }
    let mut a = DMatrix::zeros(d, d);
    let mut xp = x_star.to_vec();
    for j in 0..d {
        xp[j] = x_star[j] + fd_step;
        let fp = field.eval_vec(0.0, &xp);
        xp[j] = x_star[j] - fd_step;
        let fm = field.eval_vec(0.0, &xp);
        xp[j] = x_star[j];
        for i in 0..d {
            let v = (fp[i] - fm[i]) / (2.0 * fd_step);
            a[(i, j)] = if v.abs() <= 10.0 * fd_step * fd_step { 0.0 } else { v };
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(StabilityError::Numeric("field is not finite near x_star".into()));
    }
    let (inner, am, xs) = (field.clone(), a.clone(), x_star.to_vec());
    let singular = field.non_lipschitz_points();
    let remainder = FnField::new(d, format!("{} remainder", field.label()), move |t, x: &[f64], out: &mut [f64]| {
        inner.eval(t, x, out);
        for i in 0..d {
            let mut ax = 0.0;
            for j in 0..d {
                ax += am[(i, j)] * (x[j] - xs[j]);
            }
            out[i] -= f_star[i] + ax;
        }
    })
    .with_non_lipschitz(singular);
    Ok(Linearization { a, x_star: x_star.to_vec(), remainder: Arc::new(remainder) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub r: f64,
    /// Largest sampled difference quotient; a lower bound for the modulus.
    pub value: f64,
    pub pairs: usize,
    pub seed: u64,
}

/// Sampled lower bound of `sup |f(x) - f(y)| / |x - y|` over the ball of
/// radius `r` about the origin.
///
/// Each Halton point in `B_r x B_r` contributes the pair `(x, y)` and the
/// nearby pair `(x, x + 1e-4 (y - x))`, so both global and local quotients
/// are seen. `t = 0` is used for time-dependent fields.
pub fn lipschitz_modulus(field: &SharedField, r: f64, pairs: usize, seed: u64) -> Result<LipschitzEstimate, StabilityError> {
    let d = field.dim();
    if !(r > 0.0 && r.is_finite()) {
        return Err(StabilityError::Input(format!("radius {r} must be positive")));
    }
    if 2 * d > 16 {
        return Err(StabilityError::Input("sampling supports dimensions up to 8".into()));
    }
    let mut gen = Halton::new(2 * d, seed);
    let (mut fx, mut fy) = (vec![0.0; d], vec![0.0; d]);
    let mut best: f64 = 0.0;
    let mut count = 0;
    let in_ball = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>() <= r * r;
    while count < pairs {
        let u = gen.next_point();
        let p: Vec<f64> = u.iter().map(|v| r * (2.0 * v - 1.0)).collect();
        let (x, y) = p.split_at(d);
        if !in_ball(x) || !in_ball(y) {
            continue;
        }
        count += 1;
        field.eval(0.0, x, &mut fx);
        let near: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + 1e-4 * (b - a)).collect();
        for z in [y, &near[..]] {
            let dist = x.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dist == 0.0 {
                continue;
            }
            field.eval(0.0, z, &mut fy);
            let df = fx.iter().zip(&fy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if !df.is_finite() {
                return Err(StabilityError::Numeric("field is not finite on the ball".into()));
            }
            best = best.max(df / dist);
        }
    }
    Ok(LipschitzEstimate { r, value: best, pairs, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{scalar_field, FieldSpec};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sector_examples() {
        let r = sector_classify(0.5, &DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert_eq!(r.verdict, SectorVerdict::StableSector);
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, -1.0]);
        let r = sector_classify(0.8, &a).unwrap();
        assert_eq!(r.verdict, SectorVerdict::StableSector);
        assert!(r.eigenvalues.iter().all(|l| (l.re + 1.0).abs() < 1e-12 && (l.im.abs() - 1.0).abs() < 1e-12));
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]);
        assert_eq!(sector_classify(0.5, &s).unwrap().verdict, SectorVerdict::ZeroEigenvalue);
        let u = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, -1.0, 0.1]);
        assert_eq!(sector_classify(0.9, &u).unwrap().verdict, SectorVerdict::StableSector);
        assert_eq!(sector_classify(0.99, &u).unwrap().verdict, SectorVerdict::NotInSector);
        assert!(sector_classify(0.5, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn linearize_examples() {
        let cube = FieldSpec::new("power_sign").param("beta", 3.0).build().unwrap();
        let l = linearize(&cube, &[0.0], 1e-4).unwrap();
        assert!(l.a[(0, 0)].abs() < 1e-7);
        assert!((l.remainder.eval_vec(0.0, &[0.5])[0] + 0.125).abs() < 1e-8);

        let f = scalar_field("quad", |x| -x + x * x);
        let l = linearize(&f, &[0.0], 1e-5).unwrap();
        assert!((l.a[(0, 0)] + 1.0).abs() < 1e-9);
        assert_eq!(l.remainder.eval_vec(0.0, &[0.0])[0], 0.0);

        let two = FieldSpec::new("twodim").build().unwrap();
        let l = linearize(&two, &[0.0, 0.0], 1e-4).unwrap();
        // symbolic Jacobian at the origin: [[-3x1^2, 4x2^3], [-2x1x2, -3x2^2 - x1^2]] = 0
        assert!(l.a.iter().all(|v| v.abs() < 1e-7));
    }

    #[test]
    fn lipschitz_examples() {
        let lin = scalar_field("lin", |x| -x);
        for r in [0.1, 1.0, 7.0] {
            assert!((lipschitz_modulus(&lin, r, 1000, 0).unwrap().value - 1.0).abs() < 1e-3);
        }
        let cube = scalar_field("cube", |x| -x * x * x);
        let est: Vec<f64> =
            [0.1, 0.05, 0.025].iter().map(|&r| lipschitz_modulus(&cube, r, 1000, 0).unwrap().value).collect();
        // sup |f'| = 3 r^2 on the ball
        assert!((est[0] - 0.03).abs() < 0.03 * 0.01, "{est:?}");
        assert!(est[0] <= 0.03 + 1e-15);
        for w in est.windows(2) {
            assert!(w[1] < w[0] && (w[0] / w[1] - 4.0).abs() < 0.05);
        }
    }

    proptest! {
        #[test]
        fn sector_verdict_invariant_under_scaling_and_conjugation(
            alpha in 0.05f64..0.95,
            spec in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..6),
            scale in 0.01f64..100.0,
        ) {
            let ev: Vec<Complex64> = spec.iter().map(|&(a, b)| c(a, b)).collect();
            let base = classify_spectrum(alpha, &ev).unwrap();
            let scaled: Vec<Complex64> = ev.iter().map(|l| l * scale).collect();
            let conj: Vec<Complex64> = ev.iter().map(|l| l.conj()).collect();
            prop_assert_eq!(classify_spectrum(alpha, &scaled).unwrap().verdict, base.verdict);
            prop_assert_eq!(classify_spectrum(alpha, &conj).unwrap().verdict, base.verdict);
            prop_assert_eq!(base.verdict == SectorVerdict::StableSector, base.in_sector.iter().all(|&f| f));
        }
    }
}
