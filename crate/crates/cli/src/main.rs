//! `franson`: command-line front end for the two-interferometer simulator.

mod commands;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use franson_core::analysis::{Grid, Pipeline, ScanAxis, SweepVariable};
use franson_core::{Detector, Mode};
use serde::{Deserialize, Serialize};

const FULL_PERIOD: &str = "0:6.283185307179586:24";

#[derive(Debug, Parser)]
#[command(name = "franson", version, about = "Simulate two-UMZI energy-time correlation experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GlobalArgs {
    /// TOML experiment config; defaults are used for missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory. All files are written here.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores. Results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Alice's PZT phase, rad.
    #[arg(long, global = true, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi: f64,
    /// Bob's PZT phase, rad.
    #[arg(long, global = true, default_value_t = 0.0, allow_negative_numbers = true)]
    pub psi: f64,
    /// Overrides the config coincidence window, s.
    #[arg(long, global = true)]
    pub window: Option<f64>,
    /// Detection delay between the two sides, s.
    #[arg(long, global = true, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau: f64,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate an emission stream and detector clicks; write tag files.
    Simulate {
        /// Overrides the config duration, s.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Count coincidences in tag files (binary or CSV, one merged file or one per side).
    Coincide {
        #[arg(required = true)]
        tags: Vec<PathBuf>,
        /// Expected t_B - t_A, s.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        offset: f64,
        #[arg(long, default_value_t = 50)]
        bin_ps: u64,
    },
    /// Phase scans.
    #[command(subcommand)]
    Scan(ScanKind),
    /// Fringe visibility against delay, singles rate or window.
    Visibility(VisibilityArgs),
    /// Run the independent reference computations and write a report.
    Oracle,
    /// Re-run the command recorded in a manifest into --out.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    /// Coincidence fringe of one detector pair, with a cosine fit.
    Fringe(FringeArgs),
    /// Singles of all four detectors and a flatness test.
    Local(LocalArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FringeArgs {
    #[arg(long, default_value = "analytic")]
    pub pipeline: Pipeline,
    /// Phase grid `start:stop:n`, stop excluded.
    #[arg(long, default_value = FULL_PERIOD)]
    pub grid: Grid,
    #[arg(long, default_value = "joint")]
    pub axis: ScanAxis,
    #[arg(long, default_value = "D1", value_parser = parse_detector)]
    pub det_a: Detector,
    #[arg(long, default_value = "D3", value_parser = parse_detector)]
    pub det_b: Detector,
    /// Monte Carlo draws or pairs per grid point.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LocalArgs {
    #[arg(long, default_value = FULL_PERIOD)]
    pub grid: Grid,
    #[arg(long, default_value = "phi")]
    pub axis: ScanAxis,
    /// Photons per side per grid point.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VisibilityArgs {
    #[arg(long)]
    pub variable: SweepVariable,
    /// Sweep grid `start:stop:n`, both ends included.
    #[arg(long)]
    pub grid: Grid,
    #[arg(long, default_value = "analytic")]
    pub pipeline: Pipeline,
    /// Joint-phase grid used for each fringe fit.
    #[arg(long, default_value = FULL_PERIOD)]
    pub phase_grid: Grid,
    #[arg(long, default_value = "D1", value_parser = parse_detector)]
    pub det_a: Detector,
    #[arg(long, default_value = "D3", value_parser = parse_detector)]
    pub det_b: Detector,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s.to_ascii_lowercase().as_str() {
        "bs" => Ok(Mode::Bs),
        "pbs" => Ok(Mode::Pbs),
        _ => Err(format!("expected bs or pbs, got `{s}`")),
    }
}

fn parse_detector(s: &str) -> Result<Detector, String> {
    let digits = s.trim_start_matches(['D', 'd']);
    digits.parse::<u8>().ok().and_then(Detector::from_channel).ok_or_else(|| format!("expected D1..D4, got `{s}`"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(cli.global, cli.command) {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
