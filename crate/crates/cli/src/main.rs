//! `qeflim`: simulate scans, reconstruct lifetime volumes, correlate photon
//! pairs and fit approach curves.
//!
//! Exit codes: 0 success, 1 usage, 2 input or format error, 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qeflim::calibrate::CalibrationError;
use qeflim::reconstruct::ReconstructError;
use qeflim::scene::SceneError;
use qeflim::tagstream::StreamError;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const USAGE: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const NUMERICAL: u8 = 3;

    pub fn usage(e: impl fmt::Display) -> Self {
        Self { code: Self::USAGE, message: e.to_string() }
    }

    pub fn input(e: impl fmt::Display) -> Self {
        Self { code: Self::INPUT, message: e.to_string() }
    }

    pub fn numerical(e: impl fmt::Display) -> Self {
        Self { code: Self::NUMERICAL, message: e.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        Self::input(e)
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Ldos(_) | SceneError::BelowTopography(_) => Self::numerical(e),
            _ => Self::input(e),
        }
    }
}

impl From<ReconstructError> for CliError {
    fn from(e: ReconstructError) -> Self {
        match e {
            ReconstructError::Argument(_) => Self::usage(e),
            _ => Self::input(e),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Curve(_) => Self::input(e),
            _ => Self::numerical(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qeflim", version, about = "Scanning single-emitter fluorescence-lifetime imaging")]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress the summary on standard output.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the scan ([plan]) and/or correlation run ([hbt]) of a config.
    Simulate(SimulateArgs),
    /// Fit height-resolved lifetimes from a scan stream.
    Reconstruct(ReconstructArgs),
    /// Correlate the two detector channels of a stream and fit g2.
    G2(G2Args),
    /// Fit emitter rates and orientation to an approach curve.
    FitApproach(FitApproachArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    /// Overrides the seeds in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    pub stream: PathBuf,
    /// Contact heights written by `simulate` (or measured); enables the
    /// absolute-height volume.
    #[arg(long)]
    pub heightmap: Option<PathBuf>,
    /// Equal-height bins over the oscillation.
    #[arg(long, default_value_t = 25)]
    pub bins: usize,
    /// Micro-times before this are left out of the fits.
    #[arg(long, default_value_t = 5.0)]
    pub cutoff_ns: f64,
    #[arg(long, default_value_t = 100)]
    pub min_counts: u64,
    /// Emitter height above the contact point, nm.
    #[arg(long, default_value_t = 5.0)]
    pub tip_offset: f64,
    /// Also write the closest- and most-distant-quarter images.
    #[arg(long)]
    pub quarters: bool,
    /// Also write decay-rate gradients of the absolute-height volume.
    #[arg(long, requires = "heightmap")]
    pub gradient: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct G2Args {
    pub stream: PathBuf,
    /// Largest lag on either side.
    #[arg(long, default_value_t = 500.0)]
    pub window_ns: f64,
    #[arg(long, default_value_t = 1.0)]
    pub bin_ns: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitApproachArgs {
    /// `height_nm,rate_per_us[,stderr]` rows.
    pub curve: PathBuf,
    /// Its [calibrate] table sets the forward model.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report file; standard output only when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(CliError::usage)?;
    }
    let report = match cli.command {
        Command::Simulate(a) => commands::simulate(&a)?,
        Command::Reconstruct(a) => commands::reconstruct(&a)?,
        Command::G2(a) => commands::g2(&a)?,
        Command::FitApproach(a) => commands::fit_approach(&a)?,
    };
    if !cli.quiet {
        print!("{report}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(CliError::USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
