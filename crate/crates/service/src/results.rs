//! Result directories: everything an inversion leaves behind and everything
//! an edit needs, so a result can be served again after a restart.
//!
//! On top of the engine's run directory a result holds `target.png`,
//! `reconstruction.png`, `bank.json` (the bank edits are served from) and
//! `source.json` (dimensions of the uploaded image).

use std::path::Path;

use makeitso::editing::{apply_edit, load_bank, save_bank, EditBank};
use makeitso::generator::{synthesize, GeneratorParams, ImageTensor};
use makeitso::inversion::{read_manifest, read_run_outputs, write_run_dir, InversionConfig, InversionRun, Latent, RunManifest};
use makeitso::objectives::FeatureExtractor;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::images::{encode_png, Ingested};

pub const TARGET_PNG: &str = "target.png";
pub const RECONSTRUCTION_PNG: &str = "reconstruction.png";
pub const BANK_FILE: &str = "bank.json";
pub const SOURCE_FILE: &str = "source.json";

/// User-facing inversion options; unset fields keep the preset's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertOptions {
    /// 500 and 1000 select the named presets.
    pub iters: Option<usize>,
    pub beta: Option<f64>,
    pub ema_interval: Option<usize>,
    pub replay_n: Option<usize>,
    pub seed: Option<u64>,
}

impl InvertOptions {
    pub fn config(&self) -> Result<InversionConfig> {
        let mut cfg = InversionConfig::for_iters(self.iters.unwrap_or(500));
        if let Some(b) = self.beta {
            cfg.ema_beta = b;
        }
        if let Some(k) = self.ema_interval {
            cfg.ema_interval = k;
        }
        if let Some(n) = self.replay_n {
            cfg.replay_n = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub original_width: u32,
    pub original_height: u32,
    pub resolution: usize,
}

/// Run a full inversion of `target` and write its result directory.
/// `on_step(done, total)` is called after every iteration.
pub fn run_invert(
    generator: &GeneratorParams,
    bank: &EditBank,
    target: &Ingested,
    config: &InversionConfig,
    out: &Path,
    mut on_step: impl FnMut(usize, usize),
) -> Result<RunManifest> {
    let extractor = FeatureExtractor::seeded(config.extractor_seed, generator.resolution());
    let mut run = InversionRun::new(generator, &target.image, bank, config, &extractor)?;
    while !run.is_done() {
        run.step()?;
        on_step(run.iteration(), config.total_iters);
    }
    let result = run.finish()?;
    let manifest = write_run_dir(&result, extractor.id(), out)?;
    save_bank(bank, out.join(BANK_FILE))?;
    std::fs::write(out.join(TARGET_PNG), encode_png(&target.image)?)?;
    std::fs::write(out.join(RECONSTRUCTION_PNG), encode_png(&result.reconstruction()?)?)?;
    let source = SourceInfo {
        original_width: target.original_width,
        original_height: target.original_height,
        resolution: generator.resolution(),
    };
    std::fs::write(out.join(SOURCE_FILE), serde_json::to_string_pretty(&source).map_err(io_json)?)?;
    Ok(manifest)
}

fn io_json(e: serde_json::Error) -> ServiceError {
    ServiceError::Io(e.into())
}

/// Immutable view of a finished result, enough to render edits.
#[derive(Debug, Clone)]
pub struct ResultSnapshot {
    pub latent: Latent,
    pub tuned: GeneratorParams,
    pub bank: EditBank,
}

impl ResultSnapshot {
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.join(makeitso::inversion::TUNED_FILE).is_file() {
            return Err(ServiceError::NotFound(format!("{} holds no inversion result", dir.display())));
        }
        let (latent, tuned) = read_run_outputs(dir)?;
        let bank = load_bank(dir.join(BANK_FILE))?;
        bank.check_for(&tuned)?;
        Ok(Self { latent, tuned, bank })
    }

    /// The reconstruction with `direction` applied at `strength`.
    pub fn render_edit(&self, direction: &str, strength: f64) -> Result<ImageTensor> {
        let dir = self.bank.get(direction).ok_or_else(|| {
            ServiceError::flag(
                "direction",
                format!("unknown direction `{direction}`; available: {}", self.bank.names().join(", ")),
            )
        })?;
        let [lo, hi] = dir.strength_range;
        if !(strength.is_finite() && (lo..=hi).contains(&strength)) {
            return Err(ServiceError::flag(
                "strength",
                format!("strength {strength} outside [{lo}, {hi}] for `{direction}`"),
            ));
        }
        let styles = self.latent.styles(&self.tuned)?;
        Ok(synthesize(&self.tuned, &apply_edit(&styles, dir, strength)?)?)
    }

    pub fn render_edit_png(&self, direction: &str, strength: f64) -> Result<Vec<u8>> {
        encode_png(&self.render_edit(direction, strength)?)
    }
}

/// Run manifest plus ingestion details.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultManifest {
    pub run: RunManifest,
    pub source: Option<SourceInfo>,
}

pub fn read_result_manifest(dir: &Path) -> Result<ResultManifest> {
    let run = read_manifest(dir)?;
    let source = match std::fs::read_to_string(dir.join(SOURCE_FILE)) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(io_json)?),
        Err(_) => None,
    };
    Ok(ResultManifest { run, source })
}
