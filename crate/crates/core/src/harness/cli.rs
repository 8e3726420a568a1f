//! Command-line front end: `simulate`, `fit`, `rate-study`, `bvm-study` and
//! `illposedness`, each driven by a JSON [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::ExperimentConfig;
use super::io::{load_csv, save_report, write_sample_csv};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "npiv-qb",
    version,
    about = "Quasi-Bayesian sieve NPIV estimation and simulation studies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic sample and check the design's assumptions.
    Simulate(CommonArgs),
    /// Fit the quasi-posterior to a CSV file or a synthetic sample.
    Fit(CommonArgs),
    /// Median L2 error and contraction mass over a grid of sample sizes.
    RateStudy(CommonArgs),
    /// Distance between the quasi-posterior and its Gaussian limit.
    BvmStudy(CommonArgs),
    /// Empirical versus population sieve measure of ill-posedness.
    Illposedness(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    /// Loads the configuration, applies overrides, and resolves a relative
    /// data path against the configuration file's directory.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(data) = &config.data {
            if data.is_relative() {
                let base = self.config.parent().unwrap_or(Path::new("."));
                config.data = Some(base.join(data));
            }
        }
        Ok(config)
    }
}

/// Runs one command and returns the files it wrote.
pub fn execute(command: &Command) -> Result<Vec<PathBuf>> {
    let (args, stem) = match command {
        Command::Simulate(a) => (a, "simulate"),
        Command::Fit(a) => (a, "fit"),
        Command::RateStudy(a) => (a, "rate_study"),
        Command::BvmStudy(a) => (a, "bvm_study"),
        Command::Illposedness(a) => (a, "illposedness"),
    };
    let config = args.resolve()?;
    let dir = config.output_dir.as_path();
    let (json, csv) = match command {
        Command::Simulate(_) => {
            let (report, sample) = super::run_simulate(&config)?;
            let written = save_report(&report, dir, stem)?;
            let sample_path = dir.join("sample.csv");
            write_sample_csv(&sample, &sample_path)?;
            return Ok(vec![written.0, written.1, sample_path]);
        }
        Command::Fit(_) => {
            let sample = match &config.data {
                Some(path) => load_csv(path)?,
                None => {
                    let design = config.build_design()?;
                    super::simulate_sample(&config, &design)?.0
                }
            };
            save_report(&super::run_fit(&config, &sample)?, dir, stem)?
        }
        Command::RateStudy(_) => save_report(&super::run_rate_study(&config)?, dir, stem)?,
        Command::BvmStudy(_) => save_report(&super::run_bvm_study(&config)?, dir, stem)?,
        Command::Illposedness(_) => save_report(&super::run_illposedness(&config)?, dir, stem)?,
    };
    Ok(vec![json, csv])
}

/// Parses `args`, runs the command, and returns the process exit code:
/// 0 on success, 2 on validation errors, 3 on numerical failures.
pub fn run<I, T>(args: I) -> i32
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
    match execute(&cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
