//! `hyperwave`: run the laboratory pipeline and the lemma suite.
//!
//! Exit status is 0 on success, 1 when an enabled assertion fails and 2 on
//! configuration, artifact or compute errors.

mod artifacts;
mod config;
mod error;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::artifacts::OutDir;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::stages::Failures;

#[derive(Debug, Parser)]
#[command(name = "hyperwave", version, about = "Wave propagators and quantum variance on hyperbolic surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict the lemma suite to these checks (repeatable, comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    only: Vec<String>,
    /// Cover degrees, e.g. `1,2,4`; overrides `surface.degrees`.
    #[arg(long, global = true, value_delimiter = ',')]
    degrees: Option<Vec<usize>>,
    /// Worker threads for per-surface parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the lemma verification suite.
    VerifyLemmas,
    /// Write the cover files.
    BuildCover,
    /// Sample every cover.
    Sample,
    /// Assemble H0 and H_V and export the window eigenpairs.
    Eigensolve,
    /// Variance sums, identity checks and the degree trend.
    Qvar,
    /// Correlation decay of the geodesic flow against the mixing bound.
    Mixing,
    /// Merge per-degree results into summary.csv.
    Report,
    /// Every stage enabled by the config.
    Run,
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(d) = &common.degrees {
        cfg.surface.degrees = d.clone();
    }
    if !common.only.is_empty() {
        cfg.verification.only = common.only.clone();
    }
    let out = common.out.clone().or_else(|| cfg.out.clone()).ok_or_else(|| CliError::Config {
        field: "out".into(),
        message: "no output directory; pass --out or set `out`".into(),
    })?;
    cfg.validate()?;
    Ok((cfg, out))
}

fn execute(cli: &Cli) -> Result<Failures, CliError> {
    let (cfg, out_path) = load(&cli.common)?;
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(CliError::Config { field: "threads".into(), message: "need at least one thread".into() });
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool configured once");
    }
    let out = OutDir::open(&out_path)?;
    let result = match cli.command {
        Command::VerifyLemmas => stages::verify_lemmas(&cfg, &out),
        Command::BuildCover => stages::build_cover(&cfg, &out),
        Command::Sample => stages::sample(&cfg, &out),
        Command::Eigensolve => stages::eigensolve(&cfg, &out),
        Command::Qvar => stages::qvar(&cfg, &out),
        Command::Mixing => stages::mixing(&cfg, &out),
        Command::Report => stages::report(&cfg, &out),
        Command::Run => stages::run(&cfg, &out),
    };
    out.write_manifest(&cfg)?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(f) if f.0.is_empty() => ExitCode::SUCCESS,
        Ok(f) => {
            for msg in &f.0 {
                eprintln!("assertion failed: {msg}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
