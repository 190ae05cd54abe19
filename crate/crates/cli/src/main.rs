//! `sqlrank` — command-line runner for the re-ranking harness.
//!
//! Every subcommand reads a TOML/JSON config (or an earlier run's
//! `config.snapshot`); flags override individual fields.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sqlrank_core::discriminator::Scoring;
use sqlrank_core::harness::{self, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(
    name = "sqlrank",
    version,
    about = "Text-to-SQL generator/discriminator re-ranking harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample candidate queries and write the candidate artifact.
    Generate(Overrides),
    /// Score pre-generated candidates against oracle labels.
    Intrinsic(Overrides),
    /// Generate, re-rank and execute end to end.
    E2e(Overrides),
    /// Intrinsic evaluation once per discriminator token budget.
    Sweep(Overrides),
    /// Reasoning-quality metrics over an earlier run's records.
    Quality(Overrides),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        matches!(self, Switch::On)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoringArg {
    Soft,
    Binary,
}

#[derive(Args)]
struct Overrides {
    /// Experiment config (.toml, .json or config.snapshot).
    #[arg(long)]
    config: PathBuf,
    /// Endpoint URL or `mock:<fixture path>`.
    #[arg(long)]
    backend: Option<String>,
    /// Comma-separated discriminator token budgets.
    #[arg(long, value_delimiter = ',')]
    budget: Option<Vec<u32>>,
    #[arg(long, value_enum)]
    schema_context: Option<Switch>,
    #[arg(long, value_enum)]
    scoring: Option<ScoringArg>,
    #[arg(long, value_enum)]
    exec_check: Option<Switch>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, mode: Mode) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        config.mode = mode;
        if let Some(b) = self.backend {
            config.backend = b;
        }
        if let Some(budgets) = self.budget {
            match mode {
                Mode::Sweep => config.budgets = budgets,
                _ => match budgets.as_slice() {
                    [one] => config.plan.discriminator.max_new_tokens = *one,
                    _ => bail!("--budget takes a list only for `sweep`"),
                },
            }
        }
        if let Some(s) = self.schema_context {
            config.plan.discriminator.schema_in_prompt = s.on();
        }
        if let Some(s) = self.scoring {
            config.plan.discriminator.scoring = match s {
                ScoringArg::Soft => Scoring::Soft,
                ScoringArg::Binary => Scoring::Binary,
            };
        }
        if let Some(s) = self.exec_check {
            config.plan.executability_check = s.on();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = self.out {
            config.output_dir = out;
        }
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (mode, overrides) = match cli.command {
        Command::Generate(o) => (Mode::Generate, o),
        Command::Intrinsic(o) => (Mode::Intrinsic, o),
        Command::E2e(o) => (Mode::E2e, o),
        Command::Sweep(o) => (Mode::Sweep, o),
        Command::Quality(o) => (Mode::Quality, o),
    };
    let config = overrides.apply(mode)?;
    let (dir, report) = harness::run(&config)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    log::info!("run written to {}", dir.display());
    Ok(())
}
