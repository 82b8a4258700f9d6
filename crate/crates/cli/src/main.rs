//! `purcell`: design, simulate and analyze a double-heterostructure
//! photonic-crystal cavity and the emitter measurements around it.
//!
//! Exit codes: 0 success, 1 bad input or usage, 2 numerical failure.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Overrides the output directory of every command.
pub const OUTPUT_DIR_ENV: &str = "PURCELL_OUTPUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] purcell_core::Error),
    #[error("{0}")]
    Failed(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Failed(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "purcell", version, about = "Photonic-crystal cavity simulation and emitter data analysis")]
#[command(subcommand_required = true, arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where outputs go (beats PURCELL_OUTPUT_DIR and the config).
    #[arg(long, short = 'o', global = true)]
    pub output_dir: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the data-parallel kernels (1 = sequential).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the hole lattice and the permittivity grid.
    Design(commands::DesignArgs),
    /// FDTD ringdown of the configured cavity.
    Simulate(commands::SimulateArgs),
    /// Harmonic inversion of a probe time-series CSV.
    Resonances(commands::ResonancesArgs),
    /// Mode volume and spatial factor of a saved mode field.
    ModeMetrics(commands::ModeMetricsArgs),
    /// Purcell factor and ensemble enhancement.
    Purcell(commands::PurcellArgs),
    /// Fit a photon-arrival histogram.
    FitDecay(commands::FitDecayArgs),
    /// Monte Carlo photon-arrival histogram from the configured model.
    SimulateDecay(commands::SimulateDecayArgs),
    /// Lorentzian fit of a spectrum CSV.
    FitSpectrum(commands::FitSpectrumArgs),
    /// Envelope fit of a Fourier-transform interferogram CSV.
    FitInterferogram(commands::FitInterferogramArgs),
    /// Lasing threshold from an L-L CSV.
    Threshold(commands::ThresholdArgs),
    /// Run every acceptance check and compare against the reference numbers.
    ReproducePaper(commands::ReproduceArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("purcell: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = commands::Context::new(&cli.global)?;
    match cli.command {
        Command::Design(a) => commands::design(ctx, a),
        Command::Simulate(a) => commands::simulate(ctx, a),
        Command::Resonances(a) => commands::resonances(ctx, a),
        Command::ModeMetrics(a) => commands::mode_metrics(ctx, a),
        Command::Purcell(a) => commands::purcell(ctx, a),
        Command::FitDecay(a) => commands::fit_decay(ctx, a),
        Command::SimulateDecay(a) => commands::simulate_decay(ctx, a),
        Command::FitSpectrum(a) => commands::fit_spectrum(ctx, a),
        Command::FitInterferogram(a) => commands::fit_interferogram(ctx, a),
        Command::Threshold(a) => commands::threshold(ctx, a),
        Command::ReproducePaper(a) => commands::reproduce(ctx, a),
    }
}
