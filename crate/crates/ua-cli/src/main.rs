//! `ua-sim`: command-line front end for the ubiquitous-array simulator.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or config error.

mod config;
mod output;
mod verify;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;
use ua_core::simkit::{run_estimation_sweep, run_throughput_sweep};

#[derive(Parser)]
#[command(name = "ua-sim", version, about = "Continuous-aperture array simulator")]
struct Cli {
    /// override the RNG seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// override the Monte-Carlo trial count from the config
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the built-in identity and oracle verification suite
    Verify {
        /// run only checks whose name contains this pattern
        #[arg(long)]
        filter: Option<String>,
        /// override the Bessel envelope constant (fault-injection hook)
        #[arg(long, hide = true)]
        envelope_constant: Option<f64>,
    },
    /// Localization-error sweep; writes CSV plus a JSON run manifest
    Estimate {
        /// TOML config with [scenario] and [estimate] sections
        #[arg(short, long)]
        config: PathBuf,
        /// output CSV path
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Sum-throughput sweep; writes CSV plus a JSON run manifest
    Transmit {
        /// TOML config with [scenario] and [transmit] sections
        #[arg(short, long)]
        config: PathBuf,
        /// output CSV path
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<config::Config> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    config::Config::parse(&text)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Verify {
            filter,
            envelope_constant,
        } => {
            let opts = verify::VerifyOptions {
                filter,
                envelope_constant: envelope_constant.unwrap_or(verify::ENVELOPE_CONSTANT),
                seed: cli.seed.unwrap_or(1),
            };
            Ok(if verify::run(&opts) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Estimate { config, output } => {
            let cfg = load_config(&config)?;
            let plan = config::estimation_plan(&cfg, cli.seed, cli.trials)?;
            let started = Instant::now();
            let result = run_estimation_sweep(&plan.sweep)?;
            let csv = output::render_csv(&result, &plan.axis_display);
            let manifest = output::RunManifest::new(&config, cfg.echo()?, &result);
            output::write_outputs(&output, &csv, manifest, started.elapsed().as_millis())?;
            eprintln!(
                "estimate: {} rows -> {}",
                result.series.len() * result.axis.len(),
                output.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Transmit { config, output } => {
            let cfg = load_config(&config)?;
            let plan = config::throughput_plan(&cfg, cli.seed, cli.trials)?;
            let started = Instant::now();
            let result = run_throughput_sweep(&plan.sweep)?;
            let csv = output::render_csv(&result, &plan.axis_display);
            let manifest = output::RunManifest::new(&config, cfg.echo()?, &result);
            output::write_outputs(&output, &csv, manifest, started.elapsed().as_millis())?;
            eprintln!(
                "transmit: {} rows -> {}",
                result.series.len() * result.axis.len(),
                output.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
