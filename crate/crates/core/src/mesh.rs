//! Time grids starting at t = 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("mesh needs at least two nodes, got {0}")]
    TooShort(usize),
    #[error("mesh must start at 0, starts at {0}")]
    BadStart(f64),
    #[error("mesh is not strictly increasing at node {0}")]
    NotIncreasing(usize),
    #[error("invalid mesh parameter: {0}")]
    Parameter(String),
}

/// A strictly increasing grid with `t[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Mesh(Vec<f64>);

/// Mesh recipes.
///
/// * `Uniform { n }`: `n` equal steps.
/// * `Graded { n, exponent }`: `t_j = T (j/n)^exponent`; exponent `1/alpha`
///   clusters nodes where solutions behave like `t^alpha`.
/// * `Geometric { n, stretch }`: for `T > 1`, `n/4` equal steps on `[0, 1]`
///   followed by steps growing by a constant ratio, which must not exceed
///   `stretch`. Reduces to uniform when `T <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    Uniform { n: usize },
    Graded { n: usize, exponent: f64 },
    Geometric { n: usize, stretch: f64 },
}

impl MeshSpec {
    pub fn nodes(&self) -> usize {
        match *self {
            MeshSpec::Uniform { n } | MeshSpec::Graded { n, .. } | MeshSpec::Geometric { n, .. } => n,
        }
    }

    pub fn build(&self, horizon: f64) -> Result<Mesh, MeshError> {
        match *self {
            MeshSpec::Uniform { n } => Mesh::uniform(horizon, n),
            MeshSpec::Graded { n, exponent } => Mesh::graded(horizon, n, exponent),
            MeshSpec::Geometric { n, stretch } => Mesh::geometric(horizon, n, stretch),
        }
    }

    /// Same recipe with the step count doubled.
    pub fn refined(&self) -> MeshSpec {
        match *self {
            MeshSpec::Uniform { n } => MeshSpec::Uniform { n: 2 * n },
            MeshSpec::Graded { n, exponent } => MeshSpec::Graded { n: 2 * n, exponent },
            MeshSpec::Geometric { n, stretch } => MeshSpec::Geometric { n: 2 * n, stretch },
        }
    }
}

fn check_horizon(horizon: f64, n: usize) -> Result<(), MeshError> {
    if n < 2 {
        return Err(MeshError::Parameter(format!("need at least 2 steps, got {n}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(MeshError::Parameter(format!("horizon {horizon} must be positive")));
    }
    Ok(())
}

impl Mesh {
    pub fn new(times: Vec<f64>) -> Result<Self, MeshError> {
        if times.len() < 2 {
            return Err(MeshError::TooShort(times.len()));
        }
        if times[0] != 0.0 {
            return Err(MeshError::BadStart(times[0]));
        }
        for j in 1..times.len() {
            if !(times[j] > times[j - 1]) || !times[j].is_finite() {
                return Err(MeshError::NotIncreasing(j));
            }
        }
        Ok(Mesh(times))
    }

    pub fn uniform(horizon: f64, n: usize) -> Result<Self, MeshError> {
        check_horizon(horizon, n)?;
        let h = horizon / n as f64;
        let mut t: Vec<f64> = (0..=n).map(|j| j as f64 * h).collect();
        t[n] = horizon;
        Mesh::new(t)
    }

    pub fn graded(horizon: f64, n: usize, exponent: f64) -> Result<Self, MeshError> {
        check_horizon(horizon, n)?;
        if !(exponent >= 1.0 && exponent.is_finite()) {
            return Err(MeshError::Parameter(format!("grading exponent {exponent} must be >= 1")));
        }
        let mut t: Vec<f64> =
            (0..=n).map(|j| horizon * (j as f64 / n as f64).powf(exponent)).collect();
        t[n] = horizon;
        Mesh::new(t)
    }

    pub fn geometric(horizon: f64, n: usize, stretch: f64) -> Result<Self, MeshError> {
        check_horizon(horizon, n)?;
        if !(stretch > 1.0) {
            return Err(MeshError::Parameter(format!("stretch {stretch} must exceed 1")));
        }
        if horizon <= 1.0 {
            return Mesh::uniform(horizon, n);
        }
        let n1 = (n / 4).max(1);
        let n2 = n - n1;
        if n2 == 0 {
            return Err(MeshError::Parameter("too few steps for a geometric mesh".into()));
        }
        let h = 1.0 / n1 as f64;
        let length = |r: f64| -> f64 {
            // h r + h r^2 + ... + h r^n2
            if (r - 1.0).abs() < 1e-12 {
                h * n2 as f64
            } else {
                h * r * (r.powi(n2 as i32) - 1.0) / (r - 1.0)
            }
        };
        let target = horizon - 1.0;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while length(hi) < target {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(MeshError::Parameter("horizon unreachable".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if length(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ratio = 0.5 * (lo + hi);
        if ratio > stretch {
            return Err(MeshError::Parameter(format!(
                "step ratio {ratio:.6} exceeds stretch {stretch}; increase n"
            )));
        }
        let mut t: Vec<f64> = (0..=n1).map(|j| j as f64 * h).collect();
        t[n1] = 1.0;
        let mut step = h;
        for _ in 0..n2 {
            step *= ratio;
            let last = *t.last().expect("non-empty");
            t.push(last + step);
        }
        t[n] = horizon;
        Mesh::new(t)
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.0.last().expect("mesh is non-empty")
    }

    /// Largest step.
    pub fn max_step(&self) -> f64 {
        self.0.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Largest ratio between consecutive steps.
    pub fn max_ratio(&self) -> f64 {
        let steps: Vec<f64> = self.0.windows(2).map(|w| w[1] - w[0]).collect();
        steps.windows(2).map(|s| s[1] / s[0]).fold(1.0, f64::max)
    }

    /// Every other node, always keeping the last one.
    pub fn coarsened(&self) -> (Mesh, Vec<usize>) {
        let n = self.0.len() - 1;
        let mut idx: Vec<usize> = (0..=n).step_by(2).collect();
        if *idx.last().expect("non-empty") != n {
            idx.push(n);
        }
        let t = idx.iter().map(|&i| self.0[i]).collect();
        (Mesh(t), idx)
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.0[1] - self.0[0];
        self.0.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h.max(1.0))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl<'de> Deserialize<'de> for Mesh {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Mesh::new(v).map_err(serde::de::Error::custom)
    }
}
