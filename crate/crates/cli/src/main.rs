//! `plexisim`: reproducible scenarios for the flexibility-aggregator simulator.
//!
//! Exit codes: 0 success, 1 error, 2 infeasible market or schedule.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use plexisim::simnet::CredentialMode;

#[derive(Parser, Debug)]
#[command(name = "plexisim", version, about = "Flexibility-aggregator simulator")]
pub struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the scenario's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Nft,
    Certificate,
}

impl From<ModeArg> for CredentialMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Nft => CredentialMode::Nft,
            ModeArg::Certificate => CredentialMode::Certificate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AttackArg {
    Fdi,
    Madiot,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Enroll simulated devices and write their token records.
    Enroll {
        /// Number of devices.
        n_devices: usize,
    },
    /// Run the four-step trading workflow for every request in the scenario.
    Trade,
    /// Inject an attack into telemetry and compare flexibility estimates.
    Attack {
        /// Attack to inject; defaults to the scenario's profiles, else FDI.
        #[arg(long, value_enum)]
        attack: Option<AttackArg>,
        /// Attack magnitude in percent of the true reading (default 2).
        #[arg(long)]
        fraction: Option<f64>,
        /// Generate this many days of synthetic telemetry instead of loading a dataset.
        #[arg(long)]
        synthetic: Option<usize>,
    },
    /// Sweep send rates and report throughput, latency and footprint.
    Bench {
        /// Comma-separated send rates in tps.
        #[arg(long, value_delimiter = ',', default_value = "20,40,60,80,100,120,140,160,180,200")]
        rates: Vec<f64>,
        /// Credential mode; both when omitted.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("PLEXISIM_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(commands::Status::Done) => ExitCode::SUCCESS,
        Ok(commands::Status::Infeasible) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
