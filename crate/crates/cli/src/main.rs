use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracdyn_cli::commands;
use fracdyn_cli::config::ScenarioConfig;
use fracdyn_cli::error::{exit, CliError};
use fracdyn_cli::reproduce::{self, Overrides};
use num_complex::Complex64;

#[derive(Debug, Parser)]
#[command(name = "fracdyn", version, about = "Caputo fractional systems: Mittag-Leffler values, solutions and stability checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate E_{alpha,beta}(z).
    Ml {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
        /// Real part of z.
        #[arg(long, allow_hyphen_values = true)]
        z: f64,
        /// Imaginary part of z.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        zi: f64,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Integrate a scenario and write the trajectory and its residual.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "fracdyn-out")]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the analyses of a scenario and write a stability report.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "fracdyn-out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a canned example and print PASS/FAIL per check.
    Reproduce {
        /// One of ex1, ex2, ex4, ex5, ex6, ex3, separation.
        id: String,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to fracdyn-out/<id>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Sizes the global rayon pool from `FRACDYN_THREADS`; 0 or unset means automatic.
fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("FRACDYN_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| CliError::Usage(format!("FRACDYN_THREADS = `{v}` is not a count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    init_threads()?;
    match cli.command {
        Command::Ml { alpha, beta, z, zi, tol } => {
            let v = commands::ml(alpha, beta, Complex64::new(z, zi), tol)?;
            println!("{}", commands::format_ml(&v));
            Ok(exit::OK)
        }
        Command::Solve { config, out, seed } => {
            let cfg = load(&config, seed)?;
            commands::solve(&cfg, &out)
        }
        Command::Analyze { config, out, seed } => {
            let cfg = load(&config, seed)?;
            commands::analyze_to(&cfg, &out)
        }
        Command::Reproduce { id, alpha, beta, seed, out } => {
            if !reproduce::IDS.contains(&id.as_str()) {
                return Err(CliError::Usage(format!(
                    "unknown example `{id}`; expected one of {}",
                    reproduce::IDS.join(", ")
                )));
            }
            let out = out.unwrap_or_else(|| reproduce::default_out(&id));
            std::fs::create_dir_all(&out)?;
            let outcome = reproduce::reproduce(&id, &Overrides { alpha, beta, seed }, &out)?;
            for c in &outcome.checks {
                println!("{id} {}", c.line());
            }
            let ok = outcome.passed();
            println!("{id}: {}", if ok { "PASS" } else { "FAIL" });
            Ok(if ok { exit::OK } else { exit::CHECK_FAILED })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("fracdyn: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
