//! Canned scenarios for the worked examples.
//!
//! | id | field | checks |
//! |---|---|---|
//! | `ex1` | `linear_diag`, `a1 = -1` | stable sector, decay exponent `alpha`, `t^alpha x(T)` against `1/Gamma(1 - alpha)`, no fast decay |
//! | `ex2` | `power_sign`, `beta >= 1` | certificate, predicted exponent, fitted exponent between predicted and sharp, super-solution bound |
//! | `ex4` | `cubic_plus_g`, `c4 = 0.5` | certificate, fitted exponent at least predicted for three initial values |
//! | `ex5` | `twodim` | zero eigenvalue, certificate, fitted exponent at least predicted |
//! | `ex6` | `power_sign`, `beta < 1` | fitted exponent `alpha / beta`, fast decay detected |
//! | `ex3` | `exp_reciprocal` | positive decreasing solution, fitted exponent shrinking across decades |
//! | `separation` | `-x^3` | two solutions keep a positive gap under mesh doubling |
//!
//! Every scenario also checks the Volterra residual of its trajectories.

use std::fs;
use std::path::{Path, PathBuf};

use fracdyn::field::FieldSpec;
use fracdyn::mesh::MeshSpec;
use fracdyn::solver::{solve_ivp, Corrector, SolverConfig};
use fracdyn::special::gamma;
use fracdyn::stability::{build_super_solution, StabilityReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{analyze, write_analysis, write_json, AnalysisOutcome};
use crate::config::{Analysis, Output, ScenarioConfig};
use crate::error::CliError;

pub const IDS: &[&str] = &["ex1", "ex2", "ex4", "ex5", "ex6", "ex3", "separation"];

const RESIDUAL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!("{}: {} ({})", self.name, if self.passed { "PASS" } else { "FAIL" }, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub id: String,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn long_solver(n: usize) -> SolverConfig {
    SolverConfig::geometric(n, 1.05).with_corrector(Corrector::Newton)
}

fn scenario(field: FieldSpec, alpha: f64, x0: Vec<f64>, horizon: f64, solver: SolverConfig, seed: u64) -> ScenarioConfig {
    ScenarioConfig { field, alpha, x0, horizon, solver, seed, analyses: Vec::new(), output: Output::default() }
}

fn with(mut cfg: ScenarioConfig, analyses: Vec<Analysis>) -> ScenarioConfig {
    cfg.analyses = analyses;
    cfg
}

fn reference(label: &str, value: f64) -> Analysis {
    Analysis::ReferenceRate { label: label.into(), value }
}

fn fits(edges: &[f64]) -> Analysis {
    Analysis::DecayFit { edges: edges.to_vec() }
}

/// Validates, runs and writes each scenario under `out/name`, in parallel.
fn run_all(out: &Path, runs: Vec<(String, ScenarioConfig)>) -> Result<Vec<AnalysisOutcome>, CliError> {
    for (_, cfg) in &runs {
        cfg.validate()?;
    }
    runs.par_iter()
        .map(|(name, cfg)| {
            let dir = out.join(name);
            let o = analyze(cfg)?;
            write_analysis(cfg, &dir, &o)?;
            fs::write(dir.join("config.json"), cfg.to_json() + "\n")?;
            Ok(o)
        })
        .collect()
}

fn residual_check(outcomes: &[AnalysisOutcome]) -> Check {
    let mut worst: f64 = 0.0;
    let mut complete = true;
    for o in outcomes {
        match o.summary.as_ref().and_then(|s| s.residual.as_ref()) {
            Some(r) => worst = worst.max(r.max),
            None => complete = false,
        }
    }
    Check::new(
        "volterra residual",
        complete && worst <= RESIDUAL_TOL,
        format!("max {worst:.2e}, tolerance {RESIDUAL_TOL:e}, all completed: {complete}"),
    )
}

fn gamma_of(rep: &StabilityReport, k: usize) -> f64 {
    rep.fits.get(k).map_or(f64::NAN, |f| f.gamma)
}

fn prediction_of(rep: &StabilityReport) -> Option<f64> {
    rep.prediction.as_ref().and_then(|p| p.exponent)
}

fn certificate_check(rep: &StabilityReport) -> Check {
    match &rep.certificate {
        Some(c) => Check::new(
            "lyapunov certificate",
            c.passed,
            format!("{} samples, decrease margin {:.3e}", c.samples, c.decrease_margin),
        ),
        None => Check::new("lyapunov certificate", false, "not evaluated"),
    }
}

fn parameter(value: Option<f64>, default: f64, name: &str, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64, CliError> {
    let v = value.unwrap_or(default);
    if ok(v) {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} {v} outside {range}")))
    }
}

fn alpha_param(o: &Overrides, default: f64) -> Result<f64, CliError> {
    parameter(o.alpha, default, "alpha", |a| a > 0.0 && a < 1.0, "(0, 1)")
}

/// Runs scenario `id`, writing artifacts under `out` and a `checks.json` summary.
pub fn reproduce(id: &str, o: &Overrides, out: &Path) -> Result<Outcome, CliError> {
    let seed = o.seed.unwrap_or(0);
    let checks = match id {
        "ex1" => ex1(o, seed, out)?,
        "ex2" => ex2(o, seed, out)?,
        "ex4" => ex4(o, seed, out)?,
        "ex5" => ex5(o, seed, out)?,
        "ex6" => ex6(o, seed, out)?,
        "ex3" => ex3(o, seed, out)?,
        "separation" => separation(o, seed, out)?,
        other => return Err(CliError::Usage(format!("unknown example `{other}`; expected one of {}", IDS.join(", ")))),
    };
    let outcome = Outcome { id: id.into(), checks };
    write_json(&out.join("checks.json"), &outcome)?;
    Ok(outcome)
}

fn ex1(o: &Overrides, seed: u64, out: &Path) -> Result<Vec<Check>, CliError> {
    let alpha = alpha_param(o, 0.6)?;
    let beta_test = (alpha + 0.1).min(0.5 * (alpha + 1.0));
    let field = FieldSpec::new("linear_diag").param("a1", -1.0);
    let cfg = with(
        scenario(field, alpha, vec![1.0], 1e4, long_solver(8000), seed),
        vec![
            Analysis::Sector { fd_step: 1e-6 },
            Analysis::Constants { t_max: 1e3, grid: 200 },
            Analysis::Radius { r_min: 1e-4, r_max: 1.0, pairs: 500 },
            fits(&[1e2, 1e4]),
            Analysis::NoFastDecay { beta_test, window: (10.0, 1e4) },
            reference("linear", alpha),
        ],
    );
    let runs = run_all(out, vec![("x0_1".into(), cfg)])?;
    let rep = &runs[0].report;
    let tr = runs[0].trajectory.as_ref().expect("fits need a trajectory");
    let g = gamma_of(rep, 0);
    let t_end = *tr.times().last().expect("non-empty");
    let scaled = t_end.powf(alpha) * tr.last()[0].abs();
    let limit = 1.0 / gamma(1.0 - alpha);
    let nfd = rep.no_fast_decay.as_ref().and_then(|r| r.passed);
    Ok(vec![
        Check::new("sector", rep.verdict == "stable_sector", format!("verdict {}", rep.verdict)),
        Check::new("radius", rep.radius.as_ref().is_some_and(|r| r.r_star > 0.0), format!("{:?}", rep.radius.as_ref().map(|r| r.r_star))),
        Check::new("decay exponent", (g - alpha).abs() <= 0.05, format!("gamma {g:.4}, expected {alpha} +- 0.05")),
        Check::new(
            "asymptotic constant",
            (scaled - limit).abs() <= 0.2 * limit,
            format!("t^alpha |x| = {scaled:.4} at t = {t_end}, limit {limit:.4}"),
        ),
        Check::new("no fast decay", nfd == Some(true), format!("beta_test {beta_test}: {nfd:?}")),
        residual_check(&runs),
    ])
}

fn ex2(o: &Overrides, seed: u64, out: &Path) -> Result<Vec<Check>, CliError> {
    let alpha = alpha_param(o, 0.5)?;
    let beta = parameter(o.beta, 3.0, "beta", |b| (1.0..=10.0).contains(&b), "[1, 10]")?;
    let x0 = 0.5;
    let (sharp, lower) = (alpha / beta, alpha / (1.0 + beta));
    let field = FieldSpec::new("power_sign").param("beta", beta);
    // 2x f(x) = -2 |x|^(beta + 1)
    let cfg = with(
        scenario(field.clone(), alpha, vec![x0], 1e4, long_solver(8000), seed),
        vec![
            Analysis::Sector { fd_step: 1e-6 },
            Analysis::Certificate { c: beta + 1.0, c3: 2.0, r: 1.0, samples: 10_000 },
            fits(&[1e2, 1e4]),
            reference("sharp", sharp),
            reference("guaranteed", lower),
        ],
    );
    let graded = scenario(
        field,
        alpha,
        vec![x0],
        1e3,
        SolverConfig::new(MeshSpec::Graded { n: 6000, exponent: 2.0 }).with_corrector(Corrector::Newton),
        seed,
    );
    graded.validate()?;
    let (runs, super_run) = rayon::join(|| run_all(out, vec![("x0_0.5".into(), cfg)]), || {
        let p = graded.problem()?;
        Ok::<_, CliError>(solve_ivp(&p, &graded.solver)?)
    });
    let (runs, super_run) = (runs?, super_run?);
    let rep = &runs[0].report;
    let g = gamma_of(rep, 0);
    let pred = prediction_of(rep);

    let p = (beta + 1.0) / 2.0;
    let w = build_super_solution(x0 * x0, -2.0, p, alpha)?;
    let mesh = super_run.samples.mesh().clone();
    let ws = w.sample(&mesh);
    let v = super_run.samples.map(|x| x[0] * x[0]);
    let worst = v.values().iter().zip(ws.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    let chk = w.check(&mesh, 0.0, 1e3)?;
    Ok(vec![
        certificate_check(rep),
        Check::new(
            "predicted exponent",
            pred.is_some_and(|e| (e - lower).abs() <= 1e-14),
            format!("{pred:?}, expected {lower}"),
        ),
        Check::new(
            "decay exponent",
            g >= lower - 0.01 && g <= sharp + 0.05,
            format!("gamma {g:.4} in [{:.4}, {:.4}]", lower - 0.01, sharp + 0.05),
        ),
        Check::new(
            "super-solution",
            worst <= 0.0 && chk.passed && super_run.is_completed(),
            format!("max V - w = {worst:.3e}, t1 = {:.4}, inequality margin {:.3e}", w.t1, chk.min_margin),
        ),
        residual_check(&runs),
    ])
}

fn ex4(o: &Overrides, seed: u64, out: &Path) -> Result<Vec<Check>, CliError> {
    let alpha = alpha_param(o, 0.5)?;
    let field = FieldSpec::new("cubic_plus_g").param("c4", 0.5);
    // 2x (-x^3 + x^4 / 2) <= -x^4 on |x| <= 1
    let runs: Vec<(String, ScenarioConfig)> = [0.5, -0.5, 0.25]
        .into_iter()
        .map(|x0| {
            let cfg = with(
                scenario(field.clone(), alpha, vec![x0], 1e4, long_solver(4000), seed),
                vec![Analysis::Certificate { c: 4.0, c3: 1.0, r: 1.0, samples: 10_000 }, fits(&[1e2, 1e4])],
            );
            (format!("x0_{x0}"), cfg)
        })
        .collect();
    let outcomes = run_all(out, runs)?;
    let rep = &outcomes[0].report;
    let pred = prediction_of(rep).unwrap_or(f64::NAN);
    let gammas: Vec<f64> = outcomes.iter().map(|o| gamma_of(&o.report, 0)).collect();
    Ok(vec![
        certificate_check(rep),
        Check::new(
            "decay exponent",
            gammas.iter().all(|g| *g >= pred - 0.05),
            format!("gammas {gammas:.4?}, predicted {pred}"),
        ),
        residual_check(&outcomes),
    ])
}

fn ex5(o: &Overrides, seed: u64, out: &Path) -> Result<Vec<Check>, CliError> {
    let alpha = alpha_param(o, 0.5)?;
    let field = FieldSpec::new("twodim");
    let runs: Vec<(String, ScenarioConfig)> = [[0.3, 0.2], [-0.2, 0.3]]
        .into_iter()
        .enumerate()
        .map(|(k, x0)| {
            let cfg = with(
                scenario(field.clone(), alpha, x0.to_vec(), 1e4, long_solver(4000), seed),
                vec![
                    Analysis::Sector { fd_step: 1e-6 },
                    Analysis::Certificate { c: 4.0, c3: 1.0, r: 0.5, samples: 10_000 },
                    fits(&[1e2, 1e4]),
                ],
            );
            (format!("run_{k}"), cfg)
        })
        .collect();
    let outcomes = run_all(out, runs)?;
    let rep = &outcomes[0].report;
    let pred = prediction_of(rep).unwrap_or(f64::NAN);
    let gammas: Vec<f64> = outcomes.iter().map(|o| gamma_of(&o.report, 0)).collect();
    Ok(vec![
        Check::new("linearisation", rep.verdict == "zero_eigenvalue", format!("verdict {}", rep.verdict)),
        certificate_check(rep),
        Check::new(
            "decay exponent",
            gammas.iter().all(|g| *g >= pred - 0.05),
            format!("gammas {gammas:.4?}, predicted {pred}"),
        ),
        residual_check(&outcomes),
    ])
}

fn ex6(o: &Overrides, seed: u64, out: &Path) -> Result<Vec<Check>, CliError> {
    let alpha = alpha_param(o, 0.5)?;
    let beta = parameter(o.beta, 0.5, "beta", |b| b > 0.0 && b < 1.0, "(0, 1)")?;
    let rate = alpha / beta;
    let beta_test = if alpha < 0.7 && 0.7 < rate { 0.7 } else { 0.5 * (alpha + rate) };
    let field = FieldSpec::new("power_sign").param("beta", beta);
    let cfg = with(
        scenario(field, alpha, vec![1.0], 1e4, long_solver(8000), seed),
        vec![fits(&[1e2, 1e4]), Analysis::NoFastDecay { beta_test, window: (10.0, 1e4) }, reference("sharp", rate)],
    );
    let runs = run_all(out, vec![("x0_1".into(), cfg)])?;
    let rep = &runs[0].report;
    let tr = runs[0].trajectory.as_ref().expect("fits need a trajectory");
    let x = tr.samples.component(0);
    let monotone = x.windows(2).all(|w| w[1] <= w[0] && w[1] > 0.0);
    let g = gamma_of(rep, 0);
    let nfd = rep.no_fast_decay.as_ref().and_then(|r| r.passed);
    Ok(vec![
        Check::new("positive and non-increasing", monotone, format!("{} nodes", x.len())),
        Check::new("decay exponent", (g - rate).abs() <= 0.1, format!("gamma {g:.4}, expected {rate:.4} +- 0.1")),
        Check::new("fast decay detected", nfd == Some(false), format!("beta_test {beta_test}: {nfd:?}")),
        residual_check(&runs),
    ])
}

fn ex3(o: &Overrides, seed: u64, out: &Path) -> Result<Vec<Check>, CliError> {
    let alpha = alpha_param(o, 0.5)?;
    let cfg = with(
        scenario(FieldSpec::new("exp_reciprocal"), alpha, vec![0.5], 1e4, long_solver(8000), seed),
        vec![fits(&[10.0, 1e2, 1e3, 1e4])],
    );
    let runs = run_all(out, vec![("x0_0.5".into(), cfg)])?;
    let rep = &runs[0].report;
    let tr = runs[0].trajectory.as_ref().expect("fits need a trajectory");
    let x = tr.samples.component(0);
    let decreasing = x.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0);
    let gammas: Vec<f64> = rep.fits.iter().map(|f| f.gamma).collect();
    Ok(vec![
        Check::new("positive and strictly decreasing", decreasing, format!("{} nodes", x.len())),
        Check::new(
            "exponent shrinks across decades",
            gammas.windows(2).all(|g| g[1] < g[0]),
            format!("gammas {gammas:.4?} on [10, 1e2], [1e2, 1e3], [1e3, 1e4]"),
        ),
        residual_check(&runs),
    ])
}

fn separation(o: &Overrides, seed: u64, out: &Path) -> Result<Vec<Check>, CliError> {
    let alpha = alpha_param(o, 0.5)?;
    let cfg = with(
        scenario(FieldSpec::new("cubic_plus_g"), alpha, vec![0.1], 1e2, SolverConfig::geometric(2000, 1.05), seed),
        vec![Analysis::Separation { x1: 0.1, x2: 0.2 }],
    );
    let runs = run_all(out, vec![("pair".into(), cfg)])?;
    let Some(s) = runs[0].report.separation.as_ref() else {
        return Err(CliError::Numeric("separation report missing".into()));
    };
    let change = (s.refined_min_gap - s.min_gap).abs() / s.min_gap;
    Ok(vec![
        Check::new("gap stays positive", s.passed && s.min_gap > 0.0, format!("min gap {:.4e} at t = {}", s.min_gap, s.argmin_t)),
        Check::new("stable under mesh doubling", !s.unresolved && change <= 0.1, format!("relative change {change:.2e}")),
    ])
}

pub fn default_out(id: &str) -> PathBuf {
    PathBuf::from("fracdyn-out").join(id)
}
