//! Command-line front end for the conformable stochastic toolkit.
//!
//! `cfrac <subcommand> --config run.toml [--seed N] [--threads N] [--out DIR]`
//! validates the config, runs the experiment on a dedicated thread pool and
//! writes CSV data, `summary.json` and `config.resolved.toml` into the output
//! directory.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 for
//! command-line or config errors, 3 for precondition and I/O failures.

pub mod config;
pub mod output;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{validate_with, ExperimentKind, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cfrac", version, about = "Experiments for conformable time-fractional stochastic equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Outputs do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write every simulated path.
    Simulate,
    /// Second-moment series with exact/sandwich checks.
    Moments,
    /// Growth-rate fit in t.
    GrowthT,
    /// Growth-rate fit in lambda.
    GrowthLambda,
    /// Blow-up times: closed form, moment ODE and Monte Carlo detector.
    Blowup,
    /// Picard contraction in the weighted norm.
    Contraction,
    /// Simulated moments against the Gronwall majorant.
    GronwallCheck,
}

impl Command {
    fn experiment(self) -> Option<ExperimentKind> {
        match self {
            Command::Simulate => None,
            Command::Moments => Some(ExperimentKind::Moments),
            Command::GrowthT => Some(ExperimentKind::GrowthT),
            Command::GrowthLambda => Some(ExperimentKind::GrowthLambda),
            Command::Blowup => Some(ExperimentKind::Blowup),
            Command::Contraction => Some(ExperimentKind::Contraction),
            Command::GronwallCheck => Some(ExperimentKind::GronwallCheck),
        }
    }
}

fn fail(code: i32, kind: &str, errors: &[String]) -> i32 {
    let record = json!({ "status": "error", "exit_code": code, "kind": kind, "errors": errors });
    eprintln!("{record}");
    code
}

/// Parse arguments, run, and return the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => return fail(EXIT_CONFIG, "usage", &[e.to_string().trim().to_string()]),
    };

    let Some(config_path) = &cli.config else {
        return fail(EXIT_CONFIG, "usage", &["--config <file> is required".into()]);
    };
    let raw = match std::fs::read_to_string(config_path) {
        Ok(raw) => raw,
        Err(e) => return fail(EXIT_CONFIG, "config", &[format!("cannot read {}: {e}", config_path.display())]),
    };
    let overrides = Overrides { seed: cli.seed, output_dir: cli.out.clone() };
    let validated = match validate_with(&raw, &overrides) {
        Ok(v) => v,
        Err(errors) => return fail(EXIT_CONFIG, "config", &errors),
    };
    let cfg = &validated.config;
    if let Some(expected) = cli.command.experiment() {
        if expected != cfg.experiment {
            let msg = format!("subcommand expects experiment = \"{expected}\" but the config has \"{}\"", cfg.experiment);
            return fail(EXIT_CONFIG, "config", &[msg]);
        }
    }
    if cli.threads == Some(0) {
        return fail(EXIT_CONFIG, "usage", &["--threads must be at least 1".into()]);
    }

    if let Err(e) = output::prepare_dir(&cfg.output_dir) {
        return fail(EXIT_PRECONDITION, "io", &[e]);
    }

    let job = || match cli.command {
        Command::Simulate => run::run_simulate(cfg),
        _ => run::run_experiment(cfg),
    };
    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(job),
            Err(e) => return fail(EXIT_PRECONDITION, "io", &[format!("cannot start thread pool: {e}")]),
        },
        None => job(),
    };
    let mut outcome = match outcome {
        Ok(o) => o,
        Err(e) => return fail(EXIT_PRECONDITION, "precondition", &[e]),
    };
    let mut warnings = validated.warnings.clone();
    warnings.append(&mut outcome.warnings);
    outcome.warnings = warnings;

    let command_name = match cli.command {
        Command::Simulate => "simulate",
        _ => cfg.experiment.as_str(),
    };
    if let Err(e) = output::write_outputs(cfg, command_name, &outcome) {
        return fail(EXIT_PRECONDITION, "io", &[e]);
    }
    for check in &outcome.checks {
        eprintln!("{} {}: {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.observed);
    }
    if outcome.passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}
