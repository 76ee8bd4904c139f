//! On-disk layout of a finished inversion run.
//!
//! ```text
//! <dir>/manifest.json      RunManifest
//! <dir>/latent.json        Latent
//! <dir>/losses.csv         one IterRecord per row
//! <dir>/tuned.misockpt     fine-tuned generator
//! <dir>/anchored.misockpt  anchored generator at the end of the run
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::InversionConfig;
use super::engine::{InversionResult, Latent};
use crate::error::Result;
use crate::generator::{load_checkpoint, save_checkpoint, GeneratorParams};

pub const MANIFEST_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LATENT_FILE: &str = "latent.json";
pub const LOSSES_FILE: &str = "losses.csv";
pub const TUNED_FILE: &str = "tuned.misockpt";
pub const ANCHORED_FILE: &str = "anchored.misockpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub crate_version: String,
    pub arch_hash: String,
    pub extractor: String,
    pub config: InversionConfig,
    /// Iterations after which the anchored model was blended.
    pub ema_iterations: Vec<usize>,
    pub iterations_run: usize,
    pub wall_time_secs: f64,
    pub initial_mse: f64,
    pub final_mse: f64,
}

impl RunManifest {
    pub fn from_result(result: &InversionResult, extractor_id: &str) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            arch_hash: result.tuned.arch_hash().to_string(),
            extractor: extractor_id.to_string(),
            config: result.config.clone(),
            ema_iterations: result.ema_iterations.clone(),
            iterations_run: result.iterations_run,
            wall_time_secs: result.wall_time.as_secs_f64(),
            initial_mse: result.initial_mse,
            final_mse: result.final_mse,
        }
    }
}

/// Write every artifact of `result` into `dir` (created if missing).
pub fn write_run_dir(result: &InversionResult, extractor_id: &str, dir: impl AsRef<Path>) -> Result<RunManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let manifest = RunManifest::from_result(result, extractor_id);
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    std::fs::write(dir.join(LATENT_FILE), serde_json::to_string_pretty(&result.latent)?)?;
    let mut w = csv::Writer::from_path(dir.join(LOSSES_FILE))?;
    for rec in &result.trace {
        w.serialize(rec)?;
    }
    w.flush()?;
    save_checkpoint(&result.tuned, dir.join(TUNED_FILE))?;
    save_checkpoint(&result.anchored, dir.join(ANCHORED_FILE))?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<RunManifest> {
    let text = std::fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Latent and tuned generator of a stored run.
pub fn read_run_outputs(dir: impl AsRef<Path>) -> Result<(Latent, GeneratorParams)> {
    let dir = dir.as_ref();
    let latent = serde_json::from_str(&std::fs::read_to_string(dir.join(LATENT_FILE))?)?;
    Ok((latent, load_checkpoint(dir.join(TUNED_FILE))?))
}
