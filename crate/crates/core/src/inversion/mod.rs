//! Joint latent + generator fine-tuning with experience replay against an
//! exponentially-averaged anchored copy of the generator.

mod config;
mod ema;
mod engine;
mod manifest;
mod replay;

pub use config::{InversionConfig, LatentSpace};
pub use ema::ema_blend;
pub use engine::{make_it_so, make_it_so_with, InversionResult, InversionRun, IterRecord, Latent};
pub use manifest::{
    read_manifest, read_run_outputs, write_run_dir, RunManifest, ANCHORED_FILE, LATENT_FILE, LOSSES_FILE, MANIFEST_FILE,
    MANIFEST_VERSION, TUNED_FILE,
};
pub use replay::{
    replay_loss, replay_loss_with, sample_replay_batch, GeneratorPair, ReplayBatch, ReplayLoss, ReplayTerms,
    ReplayTermsMask,
};
