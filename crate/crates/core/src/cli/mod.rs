//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical validity error,
//! 4 resource guard.

pub mod commands;
pub mod config;
pub mod output;

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use config::{Format, ModelKind, Pairs, PartialConfig, RunConfig, Sweep};

pub const JOBS_ENV: &str = "GAUCOLL_JOBS";

#[derive(Debug, Parser)]
#[command(name = "gaucoll", version, about = "Gaussian collisional models: trajectories, memory kernels, divisibility and stability")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trajectory of the system and carried ancilla, one row per step.
    Evolve(CommonArgs),
    /// Kraus coefficients of the memory kernel, one row per step.
    Kernel {
        #[command(flatten)]
        common: CommonArgs,
        /// Emit only this step (for sweeps over the parameter plane).
        #[arg(long)]
        step: Option<usize>,
    },
    /// Non-divisibility of the intermediate maps.
    Divisibility {
        #[command(flatten)]
        common: CommonArgs,
        /// Which (n, m) pairs to evaluate.
        #[arg(long, value_enum)]
        pairs: Option<Pairs>,
        /// One row per sweep cell: divisible for every pair, max N, flagged count.
        #[arg(long)]
        consolidate: bool,
        /// Condition-number bound for inverting the cumulative maps.
        #[arg(long)]
        kappa_max: Option<f64>,
    },
    /// Spectrum, GAS classification and fixed point.
    Stability(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_s: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_e: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub nu_e: Option<f64>,
    /// Block matrices of a general model (JSON).
    #[arg(long)]
    pub blocks: Option<PathBuf>,
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Thermal occupation of the initial system state.
    #[arg(long)]
    pub theta0_thermal: Option<f64>,
    /// Fresh ancillas in the vacuum (the default).
    #[arg(long, conflicts_with = "epsilon_thermal")]
    pub epsilon_vacuum: bool,
    /// Thermal occupation of every fresh ancilla.
    #[arg(long)]
    pub epsilon_thermal: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// var=start:stop:steps; repeat for a second variable.
    #[arg(long, allow_hyphen_values = true)]
    pub sweep: Vec<String>,
    /// Worker threads (default: $GAUCOLL_JOBS, else 1).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Tolerance of the stability classification.
    #[arg(long)]
    pub tol: Option<f64>,
}

impl CommonArgs {
    fn partial(&self) -> Result<PartialConfig> {
        let sweeps = if self.sweep.is_empty() {
            None
        } else {
            Some(self.sweep.iter().map(|s| s.parse()).collect::<Result<Vec<Sweep>>>()?)
        };
        Ok(PartialConfig {
            model: self.model,
            lambda_s: self.lambda_s,
            lambda_e: self.lambda_e,
            nu_e: self.nu_e,
            blocks: self.blocks.clone(),
            theta0_thermal: self.theta0_thermal,
            epsilon_thermal: if self.epsilon_vacuum { Some(0.0) } else { self.epsilon_thermal },
            n_max: self.n_max,
            sweeps,
            format: self.format,
            out: self.out.clone(),
            jobs: self.jobs,
            tol: self.tol,
            ..Default::default()
        })
    }
}

impl Command {
    /// Resolves flags over the optional config file over defaults.
    pub fn resolve(&self, env_jobs: Option<&str>) -> Result<RunConfig> {
        let (name, common, extra) = match self {
            Command::Evolve(c) => ("evolve", c, PartialConfig::default()),
            Command::Kernel { common, step } => ("kernel", common, PartialConfig { step: *step, ..Default::default() }),
            Command::Divisibility { common, pairs, consolidate, kappa_max } => (
                "divisibility",
                common,
                PartialConfig {
                    pairs: *pairs,
                    consolidate: consolidate.then_some(true),
                    kappa_max: *kappa_max,
                    ..Default::default()
                },
            ),
            Command::Stability(c) => ("stability", c, PartialConfig::default()),
        };
        let file = match &common.config {
            Some(path) => PartialConfig::from_file(path)?,
            None => PartialConfig::default(),
        };
        extra.over(common.partial()?).over(file).resolve(name, env_jobs)
    }
}

fn write_output(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn execute(cli: &Cli, env_jobs: Option<&str>) -> Result<()> {
    let cfg = cli.command.resolve(env_jobs)?;
    let text = commands::run(&cfg)?;
    write_output(&cfg, &text)
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let env_jobs = std::env::var(JOBS_ENV).ok();
    match execute(&cli, env_jobs.as_deref()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
