mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use resfed_core::data::SyntheticSpec;

use crate::error::{CliError, CliResult};

/// Federated anomaly detection with echo state network reservoirs.
#[derive(Parser)]
#[command(name = "resfed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set reservoir.seed=3` or `--set method=esn_sre`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Override `output_dir`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<config::RunConfig> {
        let mut c = config::load(&self.config, &self.overrides)?;
        if let Some(dir) = &self.output_dir {
            c.output_dir = dir.clone();
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Centralized training; writes the model file and its manifest.
    Train(ConfigArgs),
    /// Federated training simulation; also writes every client message.
    Fed(ConfigArgs),
    /// Writes per-timestep score CSVs for the configured test series or
    /// for `--input` files.
    Score {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory holding the model (defaults to `output_dir`).
        #[arg(long)]
        model_dir: Option<PathBuf>,
        /// CSV files to score instead of the configured test series.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Where score files go (defaults to `<model_dir>/scores`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Computes AUC-ROC and AUC-PR from score CSVs.
    Eval {
        /// Directory of score CSVs.
        #[arg(long)]
        scores: PathBuf,
        /// Directory of `<series>.csv` label files (last column 0/1).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Take labels from the configured dataset instead.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Report directory (defaults to the parent of `--scores`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes a synthetic dataset as CSV plus a config that trains on it.
    Synth {
        /// Use the `[synthetic]` section of this config; otherwise the
        /// built-in benchmark.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Benchmark seed when no config is given.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs a grid of configurations and writes tidy CSV results.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// `name=v1,v2,...`; names are `clients`, `subsample`, `seed` or any
        /// config key.
        #[arg(long = "sweep", value_name = "NAME=VALUES", required = true)]
        axes: Vec<String>,
        /// Result directory (defaults to `<output_dir>/sweep`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(args) => commands::train(args.load()?),
        Command::Fed(args) => commands::fed(args.load()?),
        Command::Score {
            config,
            model_dir,
            inputs,
            out,
        } => commands::score(config.load()?, model_dir, &inputs, out),
        Command::Eval {
            scores,
            labels,
            config,
            overrides,
            out,
        } => {
            let config = config.map(|p| config::load(&p, &overrides)).transpose()?;
            commands::eval(&scores, labels.as_deref(), config, out)
        }
        Command::Synth {
            config,
            overrides,
            seed,
            out,
        } => {
            let spec = match config {
                Some(p) => config::load(&p, &overrides)?
                    .synthetic_spec()?
                    .ok_or_else(|| CliError::Config(format!("{} has no [synthetic] section", p.display())))?,
                None => SyntheticSpec::benchmark(seed),
            };
            commands::synth(spec, &out)
        }
        Command::Sweep { config, axes, out } => {
            let axes = axes
                .iter()
                .map(|a| commands::parse_sweep(a))
                .collect::<CliResult<Vec<_>>>()?;
            let mut overrides = config.overrides.clone();
            if let Some(dir) = &config.output_dir {
                let dir = std::env::current_dir().map(|cwd| cwd.join(dir)).unwrap_or_else(|_| dir.clone());
                overrides.push(format!("output_dir={:?}", dir.display().to_string()));
            }
            commands::sweep(&config.config, &overrides, &axes, out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RESFED_LOG", "info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
