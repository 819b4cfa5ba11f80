use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use franson_core::{ExperimentConfig, PhaseSettings};
use serde::{Deserialize, Serialize};

use crate::{Command, GlobalArgs};

pub const MANIFEST_NAME: &str = "manifest.json";

/// JSON sidecar describing one run. Replaying it reproduces every output
/// except `duration_s`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: u64,
    /// Effective config after command-line overrides.
    pub config: ExperimentConfig,
    pub settings: PhaseSettings,
    pub tau_ab: f64,
    pub global: GlobalArgs,
    pub command: Command,
    /// File names relative to the output directory, this manifest included.
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub duration_s: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        serde_json::from_reader(file).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_NAME), self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}
