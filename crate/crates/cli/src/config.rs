//! Scenario files.
//!
//! ```json
//! {
//!   "field": { "name": "power_sign", "params": { "beta": 3 } },
//!   "alpha": 0.5,
//!   "x0": [0.5],
//!   "horizon": 10000,
//!   "solver": { "mesh": { "kind": "geometric", "n": 8000, "stretch": 1.05 }, "corrector": "newton" },
//!   "analyses": [
//!     { "op": "sector" },
//!     { "op": "certificate", "c": 4, "c3": 2, "r": 1 },
//!     { "op": "decay_fit", "edges": [100, 10000] }
//!   ]
//! }
//! ```

use std::path::Path;

use fracdyn::field::{FieldSpec, SharedField};
use fracdyn::solver::{CaputoIvp, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub field: FieldSpec,
    pub alpha: f64,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub output: Output,
}

/// File names inside the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub trajectory: String,
    pub residual: String,
    pub report: String,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            trajectory: "trajectory.csv".into(),
            residual: "residual.json".into(),
            report: "report.json".into(),
        }
    }
}

fn default_fd_step() -> f64 {
    1e-6
}

fn default_t_max() -> f64 {
    1e3
}

fn default_grid() -> usize {
    400
}

fn default_pairs() -> usize {
    2000
}

fn default_samples() -> usize {
    10_000
}

/// One stage of the `analyze` pipeline; stages run in the order
/// sector, constants, radius, certificate, decay fits, no-fast-decay,
/// separation regardless of their order in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analysis {
    /// Linearise at the origin and classify the spectrum.
    Sector {
        #[serde(default = "default_fd_step")]
        fd_step: f64,
    },
    Constants {
        #[serde(default = "default_t_max")]
        t_max: f64,
        #[serde(default = "default_grid")]
        grid: usize,
    },
    Radius {
        r_min: f64,
        r_max: f64,
        #[serde(default = "default_pairs")]
        pairs: usize,
    },
    /// `V(x) = |x|^2` with `<grad V, f> <= -c3 |x|^c` on the ball of radius `r`.
    Certificate {
        c: f64,
        c3: f64,
        r: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// Fits over consecutive windows `[edges[k], edges[k+1]]`.
    DecayFit { edges: Vec<f64> },
    NoFastDecay { beta_test: f64, window: (f64, f64) },
    Separation { x1: f64, x2: f64 },
    /// A known exponent printed next to the fits.
    ReferenceRate { label: String, value: f64 },
}

impl Analysis {
    pub fn stage(&self) -> u8 {
        match self {
            Analysis::Sector { .. } => 0,
            Analysis::Constants { .. } => 1,
            Analysis::Radius { .. } => 2,
            Analysis::Certificate { .. } => 3,
            Analysis::DecayFit { .. } => 4,
            Analysis::NoFastDecay { .. } => 5,
            Analysis::Separation { .. } => 6,
            Analysis::ReferenceRate { .. } => 7,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn build_field(&self) -> Result<SharedField, CliError> {
        self.field.build().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn problem(&self) -> Result<CaputoIvp, CliError> {
        CaputoIvp::new(self.alpha, self.build_field()?, self.x0.clone(), self.horizon)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.problem()?;
        self.solver.mesh.build(self.horizon).map_err(|e| CliError::Config(e.to_string()))?;
        if self.solver.corrector_iters == 0 {
            return bad("solver.corrector_iters must be at least 1".into());
        }
        let d = self.x0.len();
        for a in &self.analyses {
            match a {
                Analysis::Sector { fd_step } if !(*fd_step > 0.0) => return bad("sector.fd_step must be positive".into()),
                Analysis::Constants { t_max, grid } if !(*t_max >= 1.0) || *grid < 2 => {
                    return bad("constants needs t_max >= 1 and grid >= 2".into())
                }
                Analysis::Radius { r_min, r_max, pairs } if !(*r_min > 0.0 && r_max >= r_min) || *pairs == 0 => {
                    return bad("radius needs 0 < r_min <= r_max and pairs > 0".into())
                }
                Analysis::Certificate { c, c3, r, samples } if !(*c >= 0.0 && *c3 >= 0.0 && *r > 0.0) || *samples < 2 => {
                    return bad("certificate needs c, c3 >= 0, r > 0 and samples >= 2".into())
                }
                Analysis::DecayFit { edges } if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) => {
                    return bad("decay_fit.edges must be increasing with at least two entries".into())
                }
                Analysis::DecayFit { edges } if edges[0] < 1.0 || edges[edges.len() - 1] > self.horizon => {
                    return bad("decay_fit windows must lie in [1, horizon]".into())
                }
                Analysis::NoFastDecay { beta_test, window } if !(*beta_test > self.alpha) || !(window.1 > window.0) => {
                    return bad("no_fast_decay needs beta_test > alpha and an increasing window".into())
                }
                Analysis::Separation { x1, x2 } if d != 1 || !(x1 < x2) => {
                    return bad("separation needs a scalar problem and x1 < x2".into())
                }
                _ => {}
            }
        }
        let mut stages: Vec<u8> = self.analyses.iter().map(|a| a.stage()).collect();
        stages.sort_unstable();
        if stages.windows(2).any(|w| w[0] == w[1] && w[0] != 7) {
            return bad("each analysis other than reference_rate may appear once".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "field": { "name": "power_sign", "params": { "beta": 3 } },
        "alpha": 0.5,
        "x0": [0.5],
        "horizon": 10000,
        "solver": { "mesh": { "kind": "geometric", "n": 800, "stretch": 1.1 }, "corrector": "newton" },
        "analyses": [
            { "op": "sector" },
            { "op": "certificate", "c": 4, "c3": 2, "r": 1 },
            { "op": "decay_fit", "edges": [100, 10000] }
        ]
    }"#;

    #[test]
    fn round_trip_is_identity() {
        let a = ScenarioConfig::parse(EXAMPLE).unwrap();
        let b = ScenarioConfig::parse(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.seed, 0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let extra = EXAMPLE.replace("\"alpha\": 0.5", "\"alpha\": 0.5, \"colour\": 1");
        assert!(matches!(ScenarioConfig::parse(&extra), Err(CliError::Config(_))));
        let op = EXAMPLE.replace("\"op\": \"sector\"", "\"op\": \"sector\", \"step\": 1");
        assert!(ScenarioConfig::parse(&op).is_err());
        assert!(ScenarioConfig::parse(&EXAMPLE.replace("0.5,", "1.5,")).is_err());
        assert!(ScenarioConfig::parse(&EXAMPLE.replace("power_sign", "tanh")).is_err());
        assert!(ScenarioConfig::parse(&EXAMPLE.replace("[100, 10000]", "[0.5, 10]")).is_err());
    }
}
