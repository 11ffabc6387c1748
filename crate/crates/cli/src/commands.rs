use std::fs;
use std::io::BufWriter;
use std::path::Path;

use fracdyn::mlf::{ml_scalar, MlError, MlRequest, MlValue};
use fracdyn::solver::{residual_check, solve_ivp, ResidualReport, Status, Trajectory};
use fracdyn::stability::{
    admissible_radius, check_certificate, check_no_fast_decay, check_separation, estimate_c_alpha_a,
    fit_decay_windows, linearize, predicted_decay, sector_classify, LyapunovCertificate, Linearization, Metadata,
    Report, SectorVerdict, StabilityError, StabilityReport,
};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{Analysis, ScenarioConfig};
use crate::error::{exit, CliError};

/// `E_{alpha,beta}(z)`; a missed tolerance is reported as exit code 2.
pub fn ml(alpha: f64, beta: f64, z: Complex64, tol: Option<f64>) -> Result<MlValue, CliError> {
    let mut req = MlRequest::new(alpha, beta, z);
    if let Some(t) = tol {
        req = req.with_tol(t);
    }
    ml_scalar(&req).map_err(|e| match e {
        MlError::InvalidInput(m) => CliError::Usage(m),
        other => CliError::Numeric(other.to_string()),
    })
}

pub fn format_ml(v: &MlValue) -> String {
    if v.value.im == 0.0 {
        format!("{}", v.value.re)
    } else {
        format!("{}{:+}i", v.value.re, v.value.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub status: Status,
    pub nodes: usize,
    pub residual: Option<ResidualReport>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_csv(path: &Path, tr: &Trajectory) -> Result<(), CliError> {
    let f = fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    tr.write_csv(BufWriter::new(f))?;
    Ok(())
}

/// Seconds since the Unix epoch; only ever written to `metadata.json`.
pub fn write_metadata(out: &Path, seed: u64) -> Result<(), CliError> {
    let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).ok();
    write_json(&out.join("metadata.json"), &Metadata { timestamp: now.map(|s| s.to_string()), seed })
}

fn solve_and_check(cfg: &ScenarioConfig) -> Result<(Trajectory, SolveSummary), CliError> {
    let p = cfg.problem()?;
    let tr = solve_ivp(&p, &cfg.solver)?;
    let residual = if tr.is_completed() { Some(residual_check(&tr, &p)?) } else { None };
    let summary = SolveSummary { status: tr.status.clone(), nodes: tr.len(), residual };
    Ok((tr, summary))
}

/// Writes the trajectory CSV and the status/residual JSON; returns the exit code.
pub fn solve(cfg: &ScenarioConfig, out: &Path) -> Result<i32, CliError> {
    fs::create_dir_all(out)?;
    let (tr, summary) = solve_and_check(cfg)?;
    write_csv(&out.join(&cfg.output.trajectory), &tr)?;
    write_json(&out.join(&cfg.output.residual), &summary)?;
    write_metadata(out, cfg.seed)?;
    Ok(if tr.is_completed() { exit::OK } else { exit::INCOMPLETE })
}

pub struct AnalysisOutcome {
    pub report: StabilityReport,
    pub trajectory: Option<Trajectory>,
    pub summary: Option<SolveSummary>,
}

fn needs_trajectory(a: &Analysis) -> bool {
    matches!(a, Analysis::DecayFit { .. } | Analysis::NoFastDecay { .. })
}

fn verdict_name(v: SectorVerdict) -> &'static str {
    match v {
        SectorVerdict::StableSector => "stable_sector",
        SectorVerdict::NotInSector => "not_in_sector",
        SectorVerdict::ZeroEigenvalue => "zero_eigenvalue",
    }
}

/// Runs the requested analyses in pipeline order. The trajectory solve and
/// the separation check are independent and run concurrently.
pub fn analyze(cfg: &ScenarioConfig) -> Result<AnalysisOutcome, CliError> {
    let mut steps = cfg.analyses.clone();
    steps.sort_by_key(Analysis::stage);
    let mut rep = StabilityReport::new(cfg.alpha);
    let field = cfg.build_field()?;
    let d = cfg.x0.len();

    let separation = steps.iter().find_map(|a| match a {
        Analysis::Separation { x1, x2 } => Some((*x1, *x2)),
        _ => None,
    });
    let (solved, sep) = rayon::join(
        || steps.iter().any(needs_trajectory).then(|| solve_and_check(cfg)).transpose(),
        || separation.map(|(x1, x2)| check_separation(cfg.alpha, &field, x1, x2, cfg.horizon, &cfg.solver)).transpose(),
    );
    let solved = solved?;
    rep.separation = sep?;
    if let Some(s) = &rep.separation {
        rep.warnings.extend(s.warnings.iter().cloned());
    }

    let mut lin: Option<Linearization> = None;
    let mut linearization = |fd_step: f64| -> Result<Linearization, CliError> {
        if lin.is_none() {
            lin = Some(linearize(&field, &vec![0.0; d], fd_step)?);
        }
        Ok(lin.clone().expect("set above"))
    };

    for step in &steps {
        match step {
            Analysis::Sector { fd_step } => {
                let l = linearization(*fd_step)?;
                rep.sector = Some(sector_classify(cfg.alpha, &l.a)?);
            }
            Analysis::Constants { t_max, grid } => {
                let l = linearization(1e-6)?;
                let sector = sector_classify(cfg.alpha, &l.a)?;
                if sector.verdict != SectorVerdict::StableSector {
                    rep.warnings.push(format!("constants skipped: spectrum is {}", verdict_name(sector.verdict)));
                    continue;
                }
                let pc = estimate_c_alpha_a(cfg.alpha, &sector.eigenvalues, *t_max, *grid)?;
                rep.warnings.extend(pc.warnings.iter().cloned());
                rep.constants = Some(pc);
            }
            Analysis::Radius { r_min, r_max, pairs } => {
                let Some(pc) = rep.constants.clone() else {
                    rep.warnings.push("radius skipped: no constants".into());
                    continue;
                };
                let l = linearization(1e-6)?;
                match admissible_radius(&pc, &l.remainder, *r_min, *r_max, *pairs, cfg.seed) {
                    Ok(r) => rep.radius = Some(r),
                    Err(e @ StabilityError::NoCertificate { .. }) => rep.warnings.push(format!("radius: {e}")),
                    Err(e) => return Err(e.into()),
                }
            }
            Analysis::Certificate { c, c3, r, samples } => {
                let cert = LyapunovCertificate::squared_norm(d, *c, *c3, *r);
                let chk = check_certificate(&cert, &field, *samples, cfg.seed)?;
                if chk.passed {
                    rep.prediction = Some(predicted_decay(&cert, cfg.alpha)?);
                } else {
                    rep.warnings.push("certificate failed; no decay prediction".into());
                }
                rep.certificate = Some(chk);
            }
            Analysis::DecayFit { edges } => {
                if let Some((tr, _)) = solved.as_ref().filter(|(tr, _)| tr.is_completed()) {
                    rep.fits = fit_decay_windows(&tr.samples, edges)?;
                } else {
                    rep.warnings.push("decay fits skipped: trajectory incomplete".into());
                }
            }
            Analysis::NoFastDecay { beta_test, window } => {
                if let Some((tr, _)) = solved.as_ref().filter(|(tr, _)| tr.is_completed()) {
                    rep.no_fast_decay = Some(check_no_fast_decay(&tr.samples, cfg.alpha, *beta_test, *window)?);
                } else {
                    rep.warnings.push("no-fast-decay skipped: trajectory incomplete".into());
                }
            }
            Analysis::Separation { .. } => {}
            Analysis::ReferenceRate { label, value } => {
                rep.reference_rates.insert(label.clone(), *value);
            }
        }
    }

    if let Some((tr, summary)) = &solved {
        let mut r = Report::new("solve_ivp", status_name(&tr.status)).input("nodes", tr.len());
        if let Some(res) = &summary.residual {
            r = r.margin("max_residual", res.max);
        }
        rep.reports.push(r);
    }
    rep.verdict = match &rep.sector {
        Some(s) => verdict_name(s.verdict).to_string(),
        None => "completed".to_string(),
    };
    let (trajectory, summary) = match solved {
        Some((t, s)) => (Some(t), Some(s)),
        None => (None, None),
    };
    Ok(AnalysisOutcome { report: rep, trajectory, summary })
}

pub fn status_name(s: &Status) -> &'static str {
    match s {
        Status::Completed => "completed",
        Status::DomainExit { .. } => "domain_exit",
        Status::Blowup { .. } => "blowup",
    }
}

/// Writes the report, and the trajectory when one was computed.
pub fn write_analysis(cfg: &ScenarioConfig, out: &Path, outcome: &AnalysisOutcome) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    write_json(&out.join(&cfg.output.report), &outcome.report)?;
    if let (Some(tr), Some(s)) = (&outcome.trajectory, &outcome.summary) {
        write_csv(&out.join(&cfg.output.trajectory), tr)?;
        write_json(&out.join(&cfg.output.residual), s)?;
    }
    write_metadata(out, cfg.seed)
}

pub fn analyze_to(cfg: &ScenarioConfig, out: &Path) -> Result<i32, CliError> {
    let outcome = analyze(cfg)?;
    write_analysis(cfg, out, &outcome)?;
    let incomplete = outcome.trajectory.as_ref().is_some_and(|t| !t.is_completed());
    Ok(if incomplete { exit::INCOMPLETE } else { exit::OK })
}
