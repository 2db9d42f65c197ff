//! `ecsim`: experiment runner for the encoded-cluster simulator.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use encoded_cluster::Error;

/// Exit codes.
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_CONVERGENCE: u8 = 3;
pub const EXIT_RESOURCE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "ecsim", version, about = "Encoded cluster-state Hamiltonian simulator")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lowest levels of the lattice Hamiltonian.
    Spectrum(commands::SpectrumArgs),
    /// Projected moments of the bond operator and their stabilizer form.
    Moments(commands::MomentsArgs),
    /// Gap against λ with a power-law fit.
    Scaling(commands::ScalingArgs),
    /// Measurement-driven rotations on an encoded chain.
    Mbqc(commands::MbqcArgs),
    /// Logical error rates under bond or thermal noise.
    Noise(commands::NoiseArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    Square,
    Hex,
    Ring,
    Line,
    Cubic,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryArg {
    Periodic,
    Open,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LatticeArgs {
    #[arg(long, value_enum, default_value_t = LatticeKind::Ring)]
    pub lattice: LatticeKind,
    #[arg(long, default_value_t = 2)]
    pub rows: usize,
    #[arg(long, default_value_t = 2)]
    pub cols: usize,
    /// Sites of a ring or line.
    #[arg(long, default_value_t = 4)]
    pub sites: usize,
    #[arg(long, default_value_t = 2)]
    pub cells_a: usize,
    #[arg(long, default_value_t = 2)]
    pub cells_b: usize,
    #[arg(long, default_value_t = 2)]
    pub lx: usize,
    #[arg(long, default_value_t = 2)]
    pub ly: usize,
    #[arg(long, default_value_t = 2)]
    pub lz: usize,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Periodic)]
    pub boundary: BoundaryArg,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 1.0)]
    pub g: f64,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving every output file.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads for parallel kernels; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

fn exit_code(e: &commands::CliError) -> u8 {
    match e {
        commands::CliError::Core(err) => match err {
            Error::NoConvergence { .. } => EXIT_CONVERGENCE,
            Error::SizeGuard { .. } | Error::MemoryBudget { .. } | Error::EntryBudget { .. } => EXIT_RESOURCE,
            Error::Io(_) | Error::Json(_) => EXIT_CHECK_FAILED,
            _ => EXIT_USAGE,
        },
        commands::CliError::Config(_) => EXIT_USAGE,
        commands::CliError::DenseRefused { .. } => EXIT_RESOURCE,
        commands::CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
        commands::CliError::Io(_) => EXIT_CHECK_FAILED,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match config::expand_args(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Moments(a) => commands::moments(a),
        Command::Scaling(a) => commands::scaling(a),
        Command::Mbqc(a) => commands::mbqc(a),
        Command::Noise(a) => commands::noise(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
