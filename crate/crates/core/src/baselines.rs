//! Reference inversions: latent optimization against a frozen generator in
//! Z, W or W+, and two-phase pivotal tuning (find a W pivot, then fine-tune
//! the synthesis network around it).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::generator::{
    broadcast_w, map_with_tape, mean_style, sample_noise, synthesize, synthesize_with_tape, GeneratorParams,
    ImageTensor, ParamGrads, ParamGroup, StyleStack, StyleVector,
};
use crate::inversion::{LatentSpace, Latent};
use crate::objectives::{eval_mse, weighted_loss_to, FeatureExtractor, LossWeights};
use crate::optim::{Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub space: LatentSpace,
    /// Steps of frozen-generator latent optimization.
    pub iters: usize,
    pub lr: f64,
    /// Pivotal tuning: latent steps to find the pivot.
    pub pivot_iters: usize,
    /// Pivotal tuning: generator steps around the fixed pivot.
    pub tune_iters: usize,
    pub lr_g: f64,
    pub weights: LossWeights,
    pub seed: u64,
    pub extractor_seed: u64,
    /// Samples averaged for the mean style that seeds W and W+ searches.
    pub mean_style_samples: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            space: LatentSpace::WPlus,
            iters: 500,
            lr: 1e-2,
            pivot_iters: 900,
            tune_iters: 1100,
            lr_g: 3e-4,
            weights: LossWeights::default(),
            seed: 0,
            extractor_seed: 0,
            mean_style_samples: 10_000,
        }
    }
}

impl BaselineConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Pivotal tuning with `steps` total gradient steps split 900:1100
    /// between the pivot search and the fine-tuning phase.
    pub fn pti_with_budget(steps: usize) -> Self {
        let pivot = (steps * 9 + 10) / 20;
        Self {
            space: LatentSpace::W,
            pivot_iters: pivot,
            tune_iters: steps - pivot,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0 && self.lr_g.is_finite() && self.lr_g >= 0.0) {
            return Err(Error::Config("learning rates must be finite and nonnegative".into()));
        }
        if self.mean_style_samples == 0 {
            return Err(Error::Config("mean_style_samples must be at least 1".into()));
        }
        self.weights.validate()
    }
}

/// Loss before a step and the clamped MSE of the image it was measured on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub iter: usize,
    pub loss: f64,
    pub eval_mse: f64,
}

/// Running minimum of the loss column.
pub fn best_so_far(trace: &[BaselineRecord]) -> Vec<f64> {
    trace
        .iter()
        .scan(f64::INFINITY, |best, r| {
            *best = best.min(r.loss);
            Some(*best)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LatentFit {
    pub latent: Latent,
    pub styles: StyleStack,
    pub trace: Vec<BaselineRecord>,
    pub final_mse: f64,
}

/// Starting latent for `space`: a seeded normal `z`, or the mean style.
pub fn initial_latent(params: &GeneratorParams, config: &BaselineConfig) -> Result<Latent> {
    Ok(match config.space {
        LatentSpace::Z => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            Latent::Z(sample_noise(&mut rng, params.config().z_dim))
        }
        LatentSpace::W => Latent::W(mean_style(params, config.mean_style_samples, config.seed)?),
        LatentSpace::WPlus => Latent::WPlus(broadcast_w(
            &mean_style(params, config.mean_style_samples, config.seed)?,
            params.num_style_slots(),
        )?),
    })
}

fn check_target(params: &GeneratorParams, target: &ImageTensor) -> Result<()> {
    let r = params.resolution();
    if target.height != r || target.width != r {
        return Err(contract(format!("target is {}x{}, generator renders {r}x{r}", target.height, target.width)));
    }
    Ok(())
}

/// Optimize a latent in `config.space` for `config.iters` steps; the
/// generator is never written.
pub fn optimize_latent(params: &GeneratorParams, target: &ImageTensor, config: &BaselineConfig) -> Result<LatentFit> {
    let init = initial_latent(params, config)?;
    optimize_latent_from(params, target, config, init)
}

pub fn optimize_latent_from(
    params: &GeneratorParams,
    target: &ImageTensor,
    config: &BaselineConfig,
    init: Latent,
) -> Result<LatentFit> {
    config.validate()?;
    check_target(params, target)?;
    let extractor = FeatureExtractor::seeded(config.extractor_seed, params.resolution());
    let tf = extractor.features(target)?;
    let slots = params.num_style_slots();
    let mut latent = init;
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut trace = Vec::with_capacity(config.iters);
    for iter in 0..config.iters {
        let (styles, map_pass) = match &latent {
            Latent::Z(z) => {
                let (w, pass) = map_with_tape(params, z)?;
                (broadcast_w(&w, slots)?, Some(pass))
            }
            other => (other.styles(params)?, None),
        };
        let (images, pass) = synthesize_with_tape(params, std::slice::from_ref(&styles))?;
        let lv = weighted_loss_to(&config.weights, &extractor, &images[0], target, &tf)?;
        if !lv.total.is_finite() {
            return Err(Error::NonFinite {
                iteration: iter,
                stage: "latent loss",
                recent: trace.iter().rev().take(5).map(|r: &BaselineRecord| (r.loss, 0.0)).collect(),
            });
        }
        trace.push(BaselineRecord {
            iter,
            loss: lv.total,
            eval_mse: eval_mse(&images[0], target)?,
        });
        let ds = pass.backward(params, &lv.grad, None).remove(0);
        match &mut latent {
            Latent::Z(z) => {
                let dw = ds.layer_sum();
                let dz = map_pass.expect("z latent records a mapping pass").backward(params, &dw, None);
                opt.update("latent", &mut z.0, &dz);
            }
            Latent::W(w) => opt.update("latent", &mut w.0, &ds.layer_sum()),
            Latent::WPlus(s) => {
                let mut flat = s.to_flat();
                opt.update("latent", &mut flat, &ds.to_flat());
                *s = StyleStack::from_flat(&flat, s.num_layers(), s.w_dim());
            }
        }
    }
    let styles = latent.styles(params)?;
    let final_mse = eval_mse(&synthesize(params, &styles)?, target)?;
    Ok(LatentFit {
        latent,
        styles,
        trace,
        final_mse,
    })
}

#[derive(Debug, Clone)]
pub struct PtiResult {
    pub pivot: StyleVector,
    pub tuned: GeneratorParams,
    /// Pivot-search records followed by fine-tuning records.
    pub trace: Vec<BaselineRecord>,
    pub final_mse: f64,
}

impl PtiResult {
    pub fn styles(&self) -> Result<StyleStack> {
        broadcast_w(&self.pivot, self.tuned.num_style_slots())
    }
}

/// Phase 1: W search against the frozen generator for `pivot_iters`.
/// Phase 2: fine-tune the synthesis network for `tune_iters` with the pivot
/// fixed. The mapping network is never touched.
pub fn pivotal_tune(params: &GeneratorParams, target: &ImageTensor, config: &BaselineConfig) -> Result<PtiResult> {
    let phase1 = BaselineConfig {
        space: LatentSpace::W,
        iters: config.pivot_iters,
        ..config.clone()
    };
    let fit = optimize_latent(params, target, &phase1)?;
    let Latent::W(pivot) = fit.latent else {
        unreachable!("phase 1 runs in W")
    };
    let styles = broadcast_w(&pivot, params.num_style_slots())?;
    let extractor = FeatureExtractor::seeded(config.extractor_seed, params.resolution());
    let tf = extractor.features(target)?;
    let mut tuned = params.clone();
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr_g));
    let mut trace = fit.trace;
    for k in 0..config.tune_iters {
        let iter = config.pivot_iters + k;
        let (images, pass) = synthesize_with_tape(&tuned, std::slice::from_ref(&styles))?;
        let lv = weighted_loss_to(&config.weights, &extractor, &images[0], target, &tf)?;
        let mut grads = ParamGrads::zeros_for(&tuned, ParamGroup::Synthesis);
        pass.backward(&tuned, &lv.grad, Some(&mut grads));
        if !lv.total.is_finite() || !grads.is_finite() {
            return Err(Error::NonFinite {
                iteration: iter,
                stage: "pivotal tuning",
                recent: trace.iter().rev().take(5).map(|r| (r.loss, 0.0)).collect(),
            });
        }
        trace.push(BaselineRecord {
            iter,
            loss: lv.total,
            eval_mse: eval_mse(&images[0], target)?,
        });
        opt.step_params(&mut tuned, &grads);
    }
    let final_mse = eval_mse(&synthesize(&tuned, &styles)?, target)?;
    Ok(PtiResult {
        pivot,
        tuned,
        trace,
        final_mse,
    })
}
