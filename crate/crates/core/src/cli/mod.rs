//! Command-line front end of the `laakso` binary.

mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::RunConfig;
pub use report::{Report, Verdict};

/// Exit code for a configuration that is well-formed but describes an
/// invalid or inadmissible graph.
pub const EXIT_INVALID: i32 = 2;
/// `verify-all` exits with `EXIT_CHECK_BASE + mask` when checks fail.
pub const EXIT_CHECK_BASE: i32 = 8;

#[derive(Debug, Parser)]
#[command(name = "laakso", version, about = "Laakso-type graphs: parameter fitting, random walks and heat-kernel checks")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Constant branching `b(k)` for `k >= 1`, replacing the configured graph.
    #[arg(long, global = true)]
    pub b: Option<u32>,
    /// Constant gluing `g(k)` for `k >= 1`, replacing the configured graph.
    #[arg(long, global = true)]
    pub g: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit `(b, g)` to the configured profiles and write `fit.json`.
    Fit,
    /// Check parameter ranges or profile admissibility and write `validate.json`.
    Validate,
    /// Ball sizes over the grid, written to `ball.csv`.
    Ball,
    /// Mean exit times over the grid, written to `exit_time.csv`.
    ExitTime {
        #[arg(long, value_enum, default_value = "exact")]
        method: MethodArg,
        /// Overrides the configured trial count.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Transition densities from one center, written to `heat_kernel.csv`.
    HeatKernel {
        /// Index into the grid centers.
        #[arg(long, default_value_t = 0)]
        center: usize,
        /// Targets are all vertices within this distance of the center.
        #[arg(long, default_value_t = 0)]
        radius: u32,
        /// Largest step count; defaults to the largest configured `n_values`.
        #[arg(long)]
        n_max: Option<u32>,
    },
    /// Green partial sums at one center, written to `green.csv`.
    Green {
        #[arg(long, default_value_t = 0)]
        center: usize,
        /// Largest step count; defaults to the largest configured `green_n`.
        #[arg(long)]
        n_max: Option<u32>,
    },
    /// Run every configured check and write `report.json`.
    VerifyAll,
    /// Export the subgraph induced by the ball of radius `2^level` around the base point.
    ExportGraph {
        #[arg(long)]
        level: u32,
    },
}

/// A failure that maps to [`EXIT_INVALID`]; the payload is printed as JSON.
#[derive(Debug)]
pub struct Invalid(pub serde_json::Value);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for Invalid {}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    if let Some(n) = cli.workers {
        anyhow::ensure!(n > 0, "--workers must be positive");
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.b.is_some() || cli.g.is_some() {
        config.profiles = None;
        config.params = Some(config::ExplicitParams {
            b: crate::params::BranchingFunction::constant(cli.b.unwrap_or(2), true),
            g: crate::params::GluingFunction::constant(cli.g.unwrap_or(1), true),
        });
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.workers = cli.workers;
    config.check()?;
    std::fs::create_dir_all(&cli.out)?;
    commands::dispatch(&cli, config)
}

/// Maps a result of [`run`] to an exit code, printing errors to stderr.
pub fn exit_code(result: anyhow::Result<i32>) -> i32 {
    match result {
        Ok(code) => code,
        Err(e) => match e.downcast_ref::<Invalid>() {
            Some(invalid) => {
                eprintln!("invalid: {invalid}");
                EXIT_INVALID
            }
            None => {
                eprintln!("error: {e:#}");
                1
            }
        },
    }
}
