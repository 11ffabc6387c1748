//! Autonomous and time-dependent vector fields, and a registry of named fields.
//!
//! New registry entries are added in [`FieldSpec::build`]: pick a name, list
//! its parameters in `allow`, read them with `get`/`get_or`, and return a
//! shared [`VectorField`]. Add the name to [`REGISTRY`] as well.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("unknown field `{0}`")]
    Unknown(String),
    #[error("field `{field}`: missing parameter `{param}`")]
    MissingParam { field: String, param: String },
    #[error("field `{field}`: unexpected parameter `{param}`")]
    UnknownParam { field: String, param: String },
    #[error("field `{field}`: {reason}")]
    BadParam { field: String, reason: String },
    #[error("field evaluation produced a non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("state has dimension {got}, field expects {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Right-hand side `f(t, x)` of `D^alpha x = f(t, x)`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `f(t, x)` into `out`.
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Points where the field is known not to be locally Lipschitz.
    fn non_lipschitz_points(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }

    fn label(&self) -> String {
        "field".into()
    }

    fn eval_vec(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval(t, x, &mut out);
        out
    }
}

impl fmt::Debug for dyn VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField({}, dim {})", self.label(), self.dim())
    }
}

pub type SharedField = Arc<dyn VectorField>;

/// A field defined by a closure.
pub struct FnField<F> {
    dim: usize,
    label: String,
    f: F,
    singular: Vec<Vec<f64>>,
}

impl<F> FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, label: impl Into<String>, f: F) -> Self {
        FnField { dim, label: label.into(), f, singular: Vec::new() }
    }

    pub fn with_non_lipschitz(mut self, points: Vec<Vec<f64>>) -> Self {
        self.singular = points;
        self
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f)(t, x, out)
    }

    fn non_lipschitz_points(&self) -> Vec<Vec<f64>> {
        self.singular.clone()
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Shorthand for a scalar autonomous field `x -> g(x)`.
pub fn scalar_field<G>(label: &str, g: G) -> SharedField
where
    G: Fn(f64) -> f64 + Send + Sync + 'static,
{
    Arc::new(FnField::new(1, label, move |_t, x: &[f64], out: &mut [f64]| out[0] = g(x[0])))
}

/// Named parameter map.
pub type Params = BTreeMap<String, f64>;

/// Registry key plus parameters.
///
/// | name | parameters | field |
/// |---|---|---|
/// | `zero` | `d` (default 1) | `0` |
/// | `linear_diag` | `a1`, ..., `ad` | `a_i x_i` |
/// | `power_sign` | `beta`, `coef` (default -1) | `coef sign(x) abs(x)^beta` |
/// | `cubic_plus_g` | `c4`, `c5` (default 0) | `-x^3 + c4 x^4 + c5 x^5` |
/// | `twodim` | none | `(-x1^3 + x2^4, -x2^3 - x2 x1^2)` |
/// | `exp_reciprocal` | none | `-exp(-1/abs(x)) x`, `0` at the origin |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    #[serde(default)]
    pub params: Params,
}

pub const REGISTRY: &[&str] =
    &["zero", "linear_diag", "power_sign", "cubic_plus_g", "twodim", "exp_reciprocal"];

impl FieldSpec {
    pub fn new(name: &str) -> Self {
        FieldSpec { name: name.into(), params: Params::new() }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    fn get(&self, key: &str) -> Result<f64, FieldError> {
        self.params.get(key).copied().ok_or_else(|| FieldError::MissingParam {
            field: self.name.clone(),
            param: key.into(),
        })
    }

    fn get_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn allow(&self, keys: &[&str]) -> Result<(), FieldError> {
        for k in self.params.keys() {
            let ok = keys.iter().any(|a| {
                if let Some(prefix) = a.strip_suffix('*') {
                    k.strip_prefix(prefix).is_some_and(|rest| rest.parse::<usize>().is_ok())
                } else {
                    a == k
                }
            });
            if !ok {
                return Err(FieldError::UnknownParam { field: self.name.clone(), param: k.clone() });
            }
        }
        for (k, v) in &self.params {
            if !v.is_finite() {
                return Err(FieldError::BadParam {
                    field: self.name.clone(),
                    reason: format!("parameter `{k}` is not finite"),
                });
            }
        }
        Ok(())
    }

    fn bad(&self, reason: impl Into<String>) -> FieldError {
        FieldError::BadParam { field: self.name.clone(), reason: reason.into() }
    }

    pub fn build(&self) -> Result<SharedField, FieldError> {
        let name = self.name.as_str();
        let field: SharedField = match name {
            "zero" => {
                self.allow(&["d"])?;
                let d = self.get_or("d", 1.0);
                if d < 1.0 || d.fract() != 0.0 {
                    return Err(self.bad("`d` must be a positive integer"));
                }
                Arc::new(FnField::new(d as usize, name, |_t, _x: &[f64], out: &mut [f64]| {
                    out.iter_mut().for_each(|o| *o = 0.0)
                }))
            }
            "linear_diag" => {
                self.allow(&["a*"])?;
                let mut a = Vec::new();
                while let Some(v) = self.params.get(&format!("a{}", a.len() + 1)) {
                    a.push(*v);
                }
                if a.is_empty() || a.len() != self.params.len() {
                    return Err(self.bad("coefficients must be a1, a2, ... without gaps"));
                }
                Arc::new(FnField::new(a.len(), name, move |_t, x: &[f64], out: &mut [f64]| {
                    for i in 0..a.len() {
                        out[i] = a[i] * x[i];
                    }
                }))
            }
            "power_sign" => {
                self.allow(&["beta", "coef"])?;
                let beta = self.get("beta")?;
                if beta <= 0.0 {
                    return Err(self.bad("`beta` must be positive"));
                }
                let coef = self.get_or("coef", -1.0);
                let f = FnField::new(1, name, move |_t, x: &[f64], out: &mut [f64]| {
                    let v = x[0];
                    out[0] = if v == 0.0 { 0.0 } else { coef * v.signum() * v.abs().powf(beta) };
                });
                if beta < 1.0 {
                    Arc::new(f.with_non_lipschitz(vec![vec![0.0]]))
                } else {
                    Arc::new(f)
                }
            }
            "cubic_plus_g" => {
                self.allow(&["c4", "c5"])?;
                let (c4, c5) = (self.get_or("c4", 0.0), self.get_or("c5", 0.0));
                Arc::new(FnField::new(1, name, move |_t, x: &[f64], out: &mut [f64]| {
                    let v = x[0];
                    let v3 = v * v * v;
                    out[0] = -v3 + v3 * v * (c4 + c5 * v);
                }))
            }
            "twodim" => {
                self.allow(&[])?;
                Arc::new(FnField::new(2, name, |_t, x: &[f64], out: &mut [f64]| {
                    let (a, b) = (x[0], x[1]);
                    out[0] = -a * a * a + b * b * b * b;
                    out[1] = -b * b * b - b * a * a;
                }))
            }
            "exp_reciprocal" => {
                self.allow(&[])?;
                Arc::new(FnField::new(1, name, |_t, x: &[f64], out: &mut [f64]| {
                    let v = x[0];
                    out[0] = if v == 0.0 { 0.0 } else { -(-1.0 / v.abs()).exp() * v };
                }))
            }
            _ => return Err(FieldError::Unknown(self.name.clone())),
        };
        Ok(field)
    }
}
