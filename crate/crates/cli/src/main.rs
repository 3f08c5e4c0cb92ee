//! `infhit`: simulate return and hitting times, evaluate limit laws and
//! transforms, and run the verification checks from a TOML experiment file.

mod commands;
mod config;
mod output;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use output::{Artifacts, Report};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "infhit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sampling. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Sample first-entrance times and their empirical laws.
    Simulate,
    /// Apply, invert or find the fixed point of a transform.
    Transform,
    /// Tabulate a limit law.
    Laws,
    /// Run a verification check.
    Verify,
    /// Resolve or estimate the scaling function.
    Scaling,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Transform => "transform",
            Self::Laws => "laws",
            Self::Verify => "verify",
            Self::Scaling => "scaling",
        }
    }
}

const EXIT_TOLERANCE: u8 = 2;

fn run(cli: &Cli) -> Result<bool> {
    let path = cli.config.as_ref().context("--config is required")?;
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut cfg = ExperimentConfig::parse(&text)
        .with_context(|| format!("invalid config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    cfg.validate()
        .with_context(|| format!("invalid config {}", path.display()))?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("--threads")?;
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("infhit-out"));
    let mut out = Artifacts::new(&dir, &cfg.hash(), cfg.seed())?;
    let mut report = Report::default();
    let mut ctx = commands::Run {
        cfg: &cfg,
        out: &mut out,
        report: &mut report,
    };
    log::info!("{} with config {}", cli.command.name(), path.display());
    let passed = match cli.command {
        Command::Simulate => commands::simulate(&mut ctx)?,
        Command::Transform => commands::transform(&mut ctx)?,
        Command::Laws => commands::laws(&mut ctx)?,
        Command::Verify => commands::verify(&mut ctx)?,
        Command::Scaling => commands::scaling(&mut ctx)?,
    };
    out.report(cli.command.name(), &report, &text)?;
    for f in &report.failures {
        eprintln!("tolerance violated: {f}");
    }
    for f in &report.invalid {
        eprintln!("run invalid: {f}");
    }
    Ok(passed && report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_TOLERANCE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
