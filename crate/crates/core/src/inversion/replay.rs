//! Experience replay against the anchored model: support samples and
//! anchor-edited support samples must render the same under both models.

use rand::Rng;

use crate::editing::{apply_edit, random_direction, EditBank, EditDirection};
use crate::error::{Error, Result};
use crate::generator::{
    broadcast_w, map_with_tape, map_z_to_w, sample_noise, synthesize_batch, synthesize_with_tape, GeneratorParams,
    NoiseVector, ParamGrads, ParamGroup, StyleStack,
};
use crate::objectives::{recon_loss_grad, FeatureExtractor};

/// The anchored (reference) model and the model being fine-tuned.
#[derive(Debug, Clone)]
pub struct GeneratorPair {
    pub anchored: GeneratorParams,
    pub tuned: GeneratorParams,
}

impl GeneratorPair {
    pub fn new(anchored: GeneratorParams, tuned: GeneratorParams) -> Result<Self> {
        anchored.check_compatible(&tuned)?;
        Ok(Self { anchored, tuned })
    }

    /// Both members start as copies of `init`.
    pub fn from_init(init: &GeneratorParams) -> Self {
        Self {
            anchored: init.clone(),
            tuned: init.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBatch {
    pub z_s: Vec<NoiseVector>,
    /// Style stacks of the supports under the anchored mapping network.
    pub w_plus_s: Vec<StyleStack>,
    pub anchors: Vec<EditDirection>,
}

impl ReplayBatch {
    pub fn len(&self) -> usize {
        self.z_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_s.is_empty()
    }
}

/// Draw `n` standard-normal supports and `n` anchors (uniform with
/// replacement from the bank; random directions of per-layer norm
/// `fallback_norm` when the bank is empty).
pub fn sample_replay_batch<R: Rng>(
    anchored: &GeneratorParams,
    bank: &EditBank,
    n: usize,
    fallback_norm: f64,
    rng: &mut R,
) -> Result<ReplayBatch> {
    if n == 0 {
        return Err(Error::Config("replay batch size must be at least 1".into()));
    }
    let cfg = anchored.config();
    let slots = anchored.num_style_slots();
    let mut z_s = Vec::with_capacity(n);
    let mut w_plus_s = Vec::with_capacity(n);
    for _ in 0..n {
        let z = sample_noise(rng, cfg.z_dim);
        w_plus_s.push(broadcast_w(&map_z_to_w(anchored, &z)?, slots)?);
        z_s.push(z);
    }
    let anchors = (0..n)
        .map(|_| {
            if bank.is_empty() {
                random_direction(rng, slots, cfg.w_dim, fallback_norm)
            } else {
                Ok(bank.directions[rng.random_range(0..bank.len())].clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplayBatch { z_s, w_plus_s, anchors })
}

/// Which replay terms contribute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayTermsMask {
    pub support: bool,
    pub anchor: bool,
}

impl Default for ReplayTermsMask {
    fn default() -> Self {
        Self {
            support: true,
            anchor: true,
        }
    }
}

/// Batch-averaged replay loss split into its four terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReplayTerms {
    pub support_recon: f64,
    pub support_perceptual: f64,
    pub anchor_recon: f64,
    pub anchor_perceptual: f64,
}

impl ReplayTerms {
    pub fn total(&self) -> f64 {
        self.support_recon + self.support_perceptual + self.anchor_recon + self.anchor_perceptual
    }
}

pub struct ReplayLoss {
    pub terms: ReplayTerms,
    /// Gradient of the total w.r.t. the tuned synthesis parameters (and the
    /// mapping parameters when requested).
    pub grads: ParamGrads,
}

/// Full four-term replay loss with gradients into the tuned synthesis network.
pub fn replay_loss(pair: &GeneratorPair, batch: &ReplayBatch, extractor: &FeatureExtractor) -> Result<ReplayLoss> {
    replay_loss_with(pair, batch, extractor, ReplayTermsMask::default(), false)
}

/// Replay loss restricted to `mask`. When `tune_mapping` is set, the support
/// terms also backpropagate into the tuned mapping network.
pub fn replay_loss_with(
    pair: &GeneratorPair,
    batch: &ReplayBatch,
    extractor: &FeatureExtractor,
    mask: ReplayTermsMask,
    tune_mapping: bool,
) -> Result<ReplayLoss> {
    let tuned = &pair.tuned;
    let anchored = &pair.anchored;
    tuned.check_compatible(anchored)?;
    let n = batch.len();
    if n == 0 || batch.w_plus_s.len() != n || batch.anchors.len() != n {
        return Err(Error::Contract("replay batch lists must be non-empty and equal length".into()));
    }
    let slots = tuned.num_style_slots();
    let mut grads = ParamGrads::zeros_for(tuned, ParamGroup::Synthesis);
    if tune_mapping {
        grads.merge(ParamGrads::zeros_for(tuned, ParamGroup::Mapping));
    }
    let mut terms = ReplayTerms::default();

    // G_F inputs: [supports under the tuned mapping] ++ [anchor-edited supports]
    let mut f_styles = Vec::with_capacity(2 * n);
    let mut o_styles = Vec::with_capacity(2 * n);
    let mut map_passes = Vec::new();
    if mask.support {
        for (z, ws) in batch.z_s.iter().zip(&batch.w_plus_s) {
            let (w, pass) = map_with_tape(tuned, z)?;
            f_styles.push(broadcast_w(&w, slots)?);
            map_passes.push(pass);
            o_styles.push(ws.clone());
        }
    }
    if mask.anchor {
        for (ws, a) in batch.w_plus_s.iter().zip(&batch.anchors) {
            let edited = apply_edit(ws, a, a.default_strength)?;
            f_styles.push(edited.clone());
            o_styles.push(edited);
        }
    }
    if f_styles.is_empty() {
        return Ok(ReplayLoss { terms, grads });
    }
    let o_images = synthesize_batch(anchored, &o_styles)?;
    let (f_images, pass) = synthesize_with_tape(tuned, &f_styles)?;
    let img_len = f_images[0].len();
    let mut dimg = Vec::with_capacity(f_images.len() * img_len);
    let inv_n = 1.0 / n as f64;
    for (k, (f, o)) in f_images.iter().zip(&o_images).enumerate() {
        let (r, rg) = recon_loss_grad(f, o)?;
        let (p, pg) = crate::objectives::perceptual_loss_grad(extractor, f, o)?;
        let is_support = mask.support && k < n;
        if is_support {
            terms.support_recon += r * inv_n;
            terms.support_perceptual += p * inv_n;
        } else {
            terms.anchor_recon += r * inv_n;
            terms.anchor_perceptual += p * inv_n;
        }
        dimg.extend(rg.iter().zip(&pg).map(|(a, b)| (a + b) * inv_n));
    }
    let dstyles = pass.backward(tuned, &dimg, Some(&mut grads));
    if tune_mapping && mask.support {
        for (pass, ds) in map_passes.iter().zip(&dstyles) {
            let dw = ds.layer_sum();
            pass.backward(tuned, &dw, Some(&mut grads));
        }
    }
    Ok(ReplayLoss { terms, grads })
}
