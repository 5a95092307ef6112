//! Command-line front end: configuration, experiment runs, theory suites and
//! plot-data reports.

pub mod config;
pub mod output;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use pmixfed_core::orchestrator::{self, ExperimentResult};
use pmixfed_core::theory;

pub use config::{load_config_file, parse_config, ConfigFile};
use output::{io_err, AccuracySummary, RunManifest, VerdictReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error at {key}: {message}")]
    Config { key: String, message: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("report error: {0}")]
    Report(String),

    #[error("{0} theory check(s) failed")]
    ChecksFailed(usize),

    #[error(transparent)]
    Core(#[from] pmixfed_core::Error),
}

impl CliError {
    /// Process exit code for each failure category.
    pub fn exit_code(&self) -> i32 {
        use pmixfed_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Config { .. } => 3,
            CliError::Io { .. } => 4,
            CliError::Report(_) => 5,
            CliError::ChecksFailed(_) => 7,
            CliError::Core(e) => match e.root() {
                E::Usage(_) => 2,
                E::Config(_) => 3,
                E::Io(_) => 4,
                E::Data(_) | E::Format(_) | E::Partition(_) => 5,
                _ => 6,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pmixfed", version, about = "Layer-wise mixup personalized federated learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a federated experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a theory-check suite and write verdicts.json.
    Theory {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive plot-data CSV files from a finished run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Runs the experiment in `config_path` and writes its artifacts to `out`.
pub fn run(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<ExperimentResult, CliError> {
    let mut file = load_config_file(config_path)?;
    if let Some(s) = seed {
        file.seed = s;
    }
    let cfg = file.to_experiment()?;
    ensure_dir(out)?;
    let echo = serde_json::to_value(&file).map_err(|e| CliError::Report(e.to_string()))?;
    let mut manifest = RunManifest::new("run", echo);
    let result = orchestrator::run_experiment(&cfg)?;

    output::write_rounds_csv(&out.join(output::ROUNDS_FILE), &result.records)?;
    output::write_params(&out.join(output::FINAL_GLOBAL_FILE), &result.final_global)?;
    let clients_dir = out.join(output::CLIENTS_DIR);
    ensure_dir(&clients_dir)?;
    for c in &result.clients {
        if let Some(p) = c.personalized.as_ref().or(c.local.as_ref()) {
            let name = format!("{}/client_{:04}.bin", output::CLIENTS_DIR, c.id);
            output::write_params(&out.join(&name), p)?;
            manifest.client_state_files.push(name);
        }
    }
    manifest.rounds = Some(result.records.len());
    manifest.rounds_file = Some(output::ROUNDS_FILE.into());
    manifest.final_global_file = Some(output::FINAL_GLOBAL_FILE.into());
    manifest.summary = Some(AccuracySummary {
        initial_global: result.initial_accuracy,
        final_global: result.final_global_accuracy(),
        final_personal: result.final_personal_accuracy(),
    });
    manifest.finish();
    manifest.write(out)?;
    log::info!("run finished in {:.3}s", manifest.elapsed_secs);
    Ok(result)
}

/// Runs a theory suite and writes `verdicts.json` and a manifest to `out`.
pub fn theory(suite: &str, seed: u64, out: &Path) -> Result<VerdictReport, CliError> {
    if suite != "all" && !theory::SUITES.contains(&suite) {
        return Err(CliError::Usage(format!(
            "unknown suite {suite:?}; expected one of {} or all",
            theory::SUITES.join(", ")
        )));
    }
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("theory", serde_json::json!({ "suite": suite, "seed": seed }));
    let verdicts = theory::run_suite(suite, seed)?;
    let report = VerdictReport {
        suite: suite.into(),
        seed,
        all_passed: verdicts.iter().all(|v| v.passed),
        verdicts,
    };
    output::write_verdicts(&out.join(output::VERDICTS_FILE), &report)?;
    manifest.theory_verdicts = report.verdicts.clone();
    manifest.finish();
    manifest.write(out)?;
    Ok(report)
}

/// Parses arguments, dispatches, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Run { config, out, seed } => run(&config, &out, seed).map(|_| ()),
        Command::Theory { suite, seed, out } => theory(&suite, seed, &out).and_then(|r| {
            for v in &r.verdicts {
                println!("{} {}/{}: {}", if v.passed { "PASS" } else { "FAIL" }, v.suite, v.check, v.detail);
            }
            let failed = r.verdicts.iter().filter(|v| !v.passed).count();
            if failed == 0 { Ok(()) } else { Err(CliError::ChecksFailed(failed)) }
        }),
        Command::Report { out } => report::report(&out).map(|paths| {
            for p in paths {
                println!("{}", p.display());
            }
        }),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
