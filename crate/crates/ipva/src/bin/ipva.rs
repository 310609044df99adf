//! Batch experiment runner. Every subcommand resolves to one named
//! experiment; a config file supplies defaults and `--set key=value`
//! flags override individual keys.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ipva::config::{self, Experiment, ExperimentSpec, Overrides};
use ipva::error::ExperimentError;
use ipva::experiment;

#[derive(Parser)]
#[command(
    name = "ipva",
    version,
    about = "IPVA suspension simulation and control experiments"
)]
struct Cli {
    /// Flat key = value config file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. --set duration=100 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Long passive simulation with cumulative-mean power (stationarity data).
    Simulate,
    /// Design-grid search and Pareto front vs the linear benchmark.
    Optimize,
    /// Statistical vs deterministic linearization accuracy.
    Linearize,
    /// Closed-loop MPC experiments.
    Mpc {
        /// energy | comfort | mixed
        #[arg(long, default_value = "energy")]
        objective: String,
    },
    /// High-gain-observer road estimation trace.
    Observe,
    /// Acceleration/power spectral densities vs the linear benchmark.
    Psd,
    /// Run whichever experiment the config names (includes `timing`).
    Report,
}

fn resolve_spec(cli: &Cli) -> Result<ExperimentSpec, ExperimentError> {
    let mut spec = match &cli.config {
        Some(path) => config::load_config(path)?,
        None => ExperimentSpec::default(),
    };
    let experiment = match &cli.command {
        Command::Simulate => Some(Experiment::Stationarity),
        Command::Optimize => Some(Experiment::Pareto),
        Command::Linearize => Some(Experiment::SlAccuracy),
        Command::Observe => Some(Experiment::Observer),
        Command::Psd => Some(Experiment::Psd),
        Command::Mpc { objective } => Some(match objective.as_str() {
            "energy" => Experiment::MpcEnergy,
            "comfort" => Experiment::MpcComfort,
            "mixed" => Experiment::MpcMixed,
            other => {
                return Err(ExperimentError::Config(
                    ipva::error::ConfigError::BadValue {
                        key: "objective".into(),
                        expected: "energy | comfort | mixed",
                        got: other.to_string(),
                    },
                ))
            }
        }),
        Command::Report => None,
    };
    if let Some(e) = experiment {
        spec.experiment = e;
    }
    let mut overrides = Overrides::default();
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            ExperimentError::Config(ipva::error::ConfigError::Malformed {
                line: 0,
                reason: format!("--set expects key=value, got `{kv}`"),
            })
        })?;
        overrides
            .pairs
            .insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut spec = overrides.apply(spec)?;
    if let Some(e) = experiment {
        spec.experiment = e; // the subcommand stays authoritative
    }
    if let Some(out) = &cli.out {
        spec.out_dir = out.clone();
    }
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let spec = match resolve_spec(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match experiment::run(&spec) {
        Ok(artifacts) => {
            for a in artifacts {
                println!("{}", a.display());
            }
            ExitCode::SUCCESS
        }
        Err(ExperimentError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("numerical failure: {e}");
            ExitCode::from(3)
        }
    }
}
