//! `reachgrad` command-line front end: reads a scenario, dispatches to the
//! planner, the explorer benchmark or the gradient checker, and writes CSV
//! and JSON artifacts into an output directory.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use reachgrad_core::{ExplorerMethod, ScenarioError, ScenarioFile};
use thiserror::Error;

pub mod benchmark;
pub mod gradcheck;
pub mod plan;
pub mod seeds;

pub use seeds::SeedList;

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    /// I/O and other runtime errors.
    pub const FAILURE: u8 = 1;
    /// Bad command-line arguments (clap's own code).
    pub const USAGE: u8 = 2;
    pub const SCENARIO: u8 = 3;
    pub const PLAN: u8 = 4;
    pub const GRADCHECK: u8 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("plan failed: {0}")]
    Plan(String),
    #[error("gradient check failed: {failed} of {total} candidates above tolerance (worst error {worst:e})")]
    Gradcheck { failed: usize, total: usize, worst: f64 },
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Scenario(ScenarioError::Io { .. }) | Self::Other(_) => exit::FAILURE,
            Self::Scenario(_) => exit::SCENARIO,
            Self::Plan(_) => exit::PLAN,
            Self::Gradcheck { .. } => exit::GRADCHECK,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Other(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Other(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "reachgrad", version, about = "Gradient-aided reachable-map guidance about small bodies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan a receding-horizon mission and write trajectory, report and exploration logs.
    Plan {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's explorer.
        #[arg(long, value_parser = parse_method)]
        method: Option<ExplorerMethod>,
        /// Override the scenario's arc count.
        #[arg(long)]
        arcs: Option<usize>,
    },
    /// Run every (method, seed) pair and write per-run rows plus a summary table.
    Benchmark {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "hsb,pgd,nte,mc")]
        methods: Vec<ExplorerMethod>,
        /// `a..b` (half-open), `a..=b`, or a comma list.
        #[arg(long, default_value = "0..10")]
        seeds: SeedList,
        #[arg(long)]
        out: PathBuf,
        /// Skip the Monte Carlo reference when `mc` is not among the methods.
        #[arg(long)]
        no_gt: bool,
    },
    /// Compare analytic impulse gradients against central finite differences.
    Gradcheck {
        scenario: PathBuf,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<ExplorerMethod, String> {
    s.parse()
}

/// Installs the logger; verbosity comes from `REACHGRAD_LOG` (default `warn`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("REACHGRAD_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Plan { scenario, out, method, arcs } => {
            let sc = ScenarioFile::load(&scenario)?;
            plan::cmd_plan(&sc, method, arcs, &out).map(|_| ())
        }
        Command::Benchmark { scenario, mut methods, seeds, out, no_gt } => {
            let sc = ScenarioFile::load(&scenario)?;
            if !no_gt && !methods.contains(&ExplorerMethod::MonteCarlo) {
                methods.push(ExplorerMethod::MonteCarlo);
            }
            benchmark::cmd_benchmark(&sc, &methods, seeds.as_slice(), &out).map(|_| ())
        }
        Command::Gradcheck { scenario, n, out } => {
            let sc = ScenarioFile::load(&scenario)?;
            gradcheck::cmd_gradcheck(&sc, n, &out).map(|_| ())
        }
    }
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

pub(crate) fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| anyhow::anyhow!("cannot create {}: {e}", dir.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1e-300, -3.25e7, 18972.0, f64::MIN_POSITIVE, 1.0 / 3.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [exit::OK, exit::FAILURE, exit::USAGE, exit::SCENARIO, exit::PLAN, exit::GRADCHECK];
        let mut sorted = codes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), codes.len());
    }

    #[test]
    fn benchmark_arguments_parse() {
        let cli = Cli::try_parse_from(["reachgrad", "benchmark", "s.toml", "--methods", "nte,hsb", "--seeds", "3..5", "--out", "o"])
            .unwrap();
        match cli.command {
            Command::Benchmark { methods, seeds, .. } => {
                assert_eq!(methods, vec![ExplorerMethod::Nte, ExplorerMethod::Hsb]);
                assert_eq!(seeds.as_slice(), &[3, 4]);
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["reachgrad", "benchmark", "s.toml", "--methods", "cma", "--out", "o"]).is_err());
    }
}
