//! JSON reports.
//!
//! Every operation report has the keys `schema_version`, `operation`,
//! `inputs`, `verdict`, `margins`, `constants`, `grids`, `tolerances` and
//! `warnings`. Run-specific data such as timestamps go in [`Metadata`], which
//! is kept apart so that equal inputs give byte-identical reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::decay::{DecayFit, NoFastDecayReport, SeparationReport};
use super::lyapunov::{CertificateReport, DecayPrediction};
use super::perron::{PerronConstants, RadiusCertificate};
use super::sector::SectorReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub operation: String,
    pub inputs: BTreeMap<String, Value>,
    pub verdict: String,
    pub margins: BTreeMap<String, f64>,
    pub constants: BTreeMap<String, f64>,
    pub grids: BTreeMap<String, Value>,
    pub tolerances: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(operation: impl Into<String>, verdict: impl Into<String>) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            operation: operation.into(),
            inputs: BTreeMap::new(),
            verdict: verdict.into(),
            margins: BTreeMap::new(),
            constants: BTreeMap::new(),
            grids: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn input(mut self, key: &str, value: impl Serialize) -> Self {
        self.inputs.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn margin(mut self, key: &str, value: f64) -> Self {
        self.margins.insert(key.into(), value);
        self
    }

    pub fn constant(mut self, key: &str, value: f64) -> Self {
        self.constants.insert(key.into(), value);
        self
    }

    pub fn grid(mut self, key: &str, value: impl Serialize) -> Self {
        self.grids.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn tolerance(mut self, key: &str, value: f64) -> Self {
        self.tolerances.insert(key.into(), value);
        self
    }

    pub fn warn(mut self, w: impl Into<String>) -> Self {
        self.warnings.push(w.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub timestamp: Option<String>,
    pub seed: u64,
}

/// Result of an analysis pipeline; each stage is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub schema_version: u32,
    pub alpha: f64,
    pub sector: Option<SectorReport>,
    pub constants: Option<PerronConstants>,
    pub radius: Option<RadiusCertificate>,
    pub certificate: Option<CertificateReport>,
    pub prediction: Option<DecayPrediction>,
    pub fits: Vec<DecayFit>,
    pub no_fast_decay: Option<NoFastDecayReport>,
    pub separation: Option<SeparationReport>,
    /// Reference exponents with a label, e.g. a known sharp rate.
    pub reference_rates: BTreeMap<String, f64>,
    pub verdict: String,
    pub warnings: Vec<String>,
    pub reports: Vec<Report>,
}

impl StabilityReport {
    pub fn new(alpha: f64) -> Self {
        StabilityReport { schema_version: SCHEMA_VERSION, alpha, ..Default::default() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values serialise")
    }
}
