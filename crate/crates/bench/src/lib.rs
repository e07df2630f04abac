//! Command-line front end for the mobconv kernels: oracle validation,
//! register-traffic measurement, wall-clock benchmarking and roofline
//! analysis over a JSON list of layers.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod strategy;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mobconv_core::RooflineParams;

pub use error::CliError;
pub use report::Format;

/// Exit status when every step ran but some validation row failed.
pub const EXIT_VALIDATION_FAILED: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "mobconv", version, about = "Depthwise/pointwise convolution kernel toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Layer configuration file (JSON array of layers).
    #[arg(long)]
    pub config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare every optimized kernel against its scalar oracle.
    Validate {
        #[command(flatten)]
        io: Output,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        workers: Vec<usize>,
    },
    /// Measure register/cache traffic and compare with the closed-form intensity.
    Traffic {
        #[command(flatten)]
        io: Output,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Time every kernel at each worker count (median of repeats).
    Bench {
        #[command(flatten)]
        io: Output,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        workers: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Operational intensity, analytical intensity and roofline bound per layer.
    Analyze {
        #[command(flatten)]
        io: Output,
        #[arg(long)]
        peak_gflops: f64,
        #[arg(long)]
        bandwidth_gbps: f64,
    },
}

/// Runs one command and returns the process exit status.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Validate {
            io,
            seed,
            tolerance,
            workers,
        } => {
            let layers = config::load_layers(&io.config)?;
            let rows = commands::cmd_validate(&layers, seed, tolerance, &workers)?;
            report::write_rows(&rows, io.format, io.out.as_deref())?;
            let failed = commands::failed_rows(&rows);
            eprintln!("validate: {} of {} rows passed", rows.len() - failed, rows.len());
            Ok(if failed == 0 { 0 } else { EXIT_VALIDATION_FAILED })
        }
        Command::Traffic { io, seed } => {
            let layers = config::load_layers(&io.config)?;
            let rows = commands::cmd_traffic(&layers, seed)?;
            report::write_rows(&rows, io.format, io.out.as_deref())?;
            Ok(0)
        }
        Command::Bench {
            io,
            seed,
            workers,
            repeats,
        } => {
            let layers = config::load_layers(&io.config)?;
            let rows = commands::cmd_bench(&layers, seed, &workers, repeats)?;
            report::write_rows(&rows, io.format, io.out.as_deref())?;
            Ok(0)
        }
        Command::Analyze {
            io,
            peak_gflops,
            bandwidth_gbps,
        } => {
            let params = RooflineParams::new(peak_gflops * 1e9, bandwidth_gbps * 1e9)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let layers = config::load_layers(&io.config)?;
            let rows = commands::cmd_analyze(&layers, &params);
            report::write_rows(&rows, io.format, io.out.as_deref())?;
            Ok(0)
        }
    }
}
