use web_time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{InversionConfig, LatentSpace};
use super::ema::ema_blend;
use super::replay::{replay_loss_with, sample_replay_batch, GeneratorPair, ReplayBatch, ReplayTermsMask};
use crate::editing::EditBank;
use crate::error::{contract, Error, Result};
use crate::generator::{
    broadcast_w, map_with_tape, map_z_to_w, sample_noise, synthesize, synthesize_with_tape, GeneratorParams,
    ImageTensor, NoiseVector, ParamGrads, ParamGroup, StyleStack, StyleVector,
};
use crate::objectives::{eval_mse, weighted_loss_to, FeatureExtractor, Features};
use crate::optim::{Adam, AdamConfig};

/// The optimized code, in whichever space the run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", content = "value", rename_all = "snake_case")]
pub enum Latent {
    Z(NoiseVector),
    W(StyleVector),
    WPlus(StyleStack),
}

impl Latent {
    pub fn space(&self) -> LatentSpace {
        match self {
            Latent::Z(_) => LatentSpace::Z,
            Latent::W(_) => LatentSpace::W,
            Latent::WPlus(_) => LatentSpace::WPlus,
        }
    }

    /// Style stack this latent produces under `params`' mapping network.
    pub fn styles(&self, params: &GeneratorParams) -> Result<StyleStack> {
        let slots = params.num_style_slots();
        match self {
            Latent::Z(z) => broadcast_w(&map_z_to_w(params, z)?, slots),
            Latent::W(w) => broadcast_w(w, slots),
            Latent::WPlus(s) => {
                s.check_shape(slots, params.config().w_dim)?;
                Ok(s.clone())
            }
        }
    }

    pub fn as_z(&self) -> Option<&NoiseVector> {
        match self {
            Latent::Z(z) => Some(z),
            _ => None,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Latent::Z(z) => z.is_finite(),
            Latent::W(w) => w.is_finite(),
            Latent::WPlus(s) => s.layers.iter().all(|l| l.is_finite()),
        }
    }
}

/// One row of the loss trace. Losses are measured before that iteration's
/// updates; `eval_mse` is the clamped MSE of the image being fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub loss: f64,
    pub recon: f64,
    pub perceptual: f64,
    pub replay: f64,
    pub eval_mse: f64,
    pub ema: bool,
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    pub latent: Latent,
    /// Style stack of the final latent under the tuned model.
    pub styles: StyleStack,
    pub tuned: GeneratorParams,
    pub anchored: GeneratorParams,
    pub trace: Vec<IterRecord>,
    pub ema_iterations: Vec<usize>,
    pub iterations_run: usize,
    pub wall_time: Duration,
    pub config: InversionConfig,
    pub initial_mse: f64,
    pub final_mse: f64,
}

impl InversionResult {
    /// Snapshot of the anchored model at the end of the run.
    pub fn final_anchored_sync(&self) -> GeneratorParams {
        self.anchored.clone()
    }

    pub fn z_star(&self) -> Option<&NoiseVector> {
        self.latent.as_z()
    }

    /// Render the result under the tuned model.
    pub fn reconstruction(&self) -> Result<ImageTensor> {
        synthesize(&self.tuned, &self.styles)
    }
}

/// A steppable inversion. Each iteration:
/// 1. at scheduled iterations, blend the anchored model toward the tuned one;
/// 2. draw fresh support samples and anchors from the anchored model;
/// 3. one Adam step on the latent and the tuned synthesis network against the
///    target loss;
/// 4. one Adam step of the tuned synthesis network against the replay loss.
///
/// The blend for iteration `k * ema_interval` is applied at the end of the
/// preceding step so that a stopped run already carries it.
pub struct InversionRun {
    config: InversionConfig,
    extractor: FeatureExtractor,
    target: ImageTensor,
    target_features: Features,
    bank: EditBank,
    pair: GeneratorPair,
    latent: Latent,
    opt_latent: Adam,
    opt_target: Adam,
    opt_replay: Adam,
    rng: ChaCha8Rng,
    iter: usize,
    trace: Vec<IterRecord>,
    ema_iterations: Vec<usize>,
    initial_mse: f64,
    stopped: bool,
    started: Instant,
}

const RECENT: usize = 5;

impl InversionRun {
    pub fn new(
        init: &GeneratorParams,
        target: &ImageTensor,
        bank: &EditBank,
        config: &InversionConfig,
        extractor: &FeatureExtractor,
    ) -> Result<Self> {
        Self::from_pair(GeneratorPair::from_init(init), target, bank, config, extractor)
    }

    /// Start from an explicit anchored/tuned pair. The initial latent is drawn
    /// from `config.seed` and mapped through the tuned model for style-space
    /// runs.
    pub fn from_pair(
        pair: GeneratorPair,
        target: &ImageTensor,
        bank: &EditBank,
        config: &InversionConfig,
        extractor: &FeatureExtractor,
    ) -> Result<Self> {
        config.validate()?;
        pair.anchored.check_compatible(&pair.tuned)?;
        let params = &pair.tuned;
        let res = params.resolution();
        if target.height != res || target.width != res {
            return Err(contract(format!(
                "target is {}x{}, generator renders {res}x{res}",
                target.height, target.width
            )));
        }
        if !target.pixels.iter().all(|v| v.is_finite()) {
            return Err(contract("target has non-finite pixels"));
        }
        if !bank.is_empty() {
            bank.check_for(params)?;
        }
        let target_features = extractor.features(target)?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let z0 = sample_noise(&mut rng, params.config().z_dim);
        let latent = match config.latent_space {
            LatentSpace::Z => Latent::Z(z0),
            LatentSpace::W => Latent::W(map_z_to_w(params, &z0)?),
            LatentSpace::WPlus => Latent::WPlus(broadcast_w(&map_z_to_w(params, &z0)?, params.num_style_slots())?),
        };
        let initial_mse = eval_mse(&synthesize(params, &latent.styles(params)?)?, target)?;
        rng.set_stream(1);

        Ok(Self {
            config: config.clone(),
            extractor: extractor.clone(),
            target: target.clone(),
            target_features,
            bank: bank.clone(),
            pair,
            latent,
            opt_latent: Adam::new(AdamConfig::with_lr(config.lr_z)),
            opt_target: Adam::new(AdamConfig::with_lr(config.lr_g)),
            opt_replay: Adam::new(AdamConfig::with_lr(config.lr_g)),
            rng,
            iter: 0,
            trace: Vec::with_capacity(config.total_iters),
            ema_iterations: Vec::new(),
            initial_mse,
            stopped: false,
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &InversionConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn is_done(&self) -> bool {
        self.stopped || self.iter >= self.config.total_iters
    }

    pub fn trace(&self) -> &[IterRecord] {
        &self.trace
    }

    pub fn pair(&self) -> &GeneratorPair {
        &self.pair
    }

    pub fn latent(&self) -> &Latent {
        &self.latent
    }

    pub fn ema_iterations(&self) -> &[usize] {
        &self.ema_iterations
    }

    /// Current reconstruction under the tuned model.
    pub fn current_image(&self) -> Result<ImageTensor> {
        synthesize(&self.pair.tuned, &self.latent.styles(&self.pair.tuned)?)
    }

    fn recent(&self) -> Vec<(f64, f64)> {
        let start = self.trace.len().saturating_sub(RECENT);
        self.trace[start..].iter().map(|r| (r.loss, r.replay)).collect()
    }

    fn non_finite(&self, stage: &'static str) -> Error {
        Error::NonFinite {
            iteration: self.iter,
            stage,
            recent: self.recent(),
        }
    }

    /// Target loss and its gradients w.r.t. the latent and the tuned model.
    fn target_pass(&self) -> Result<(f64, f64, f64, f64, Vec<f64>, ParamGrads)> {
        let g = &self.pair.tuned;
        let slots = g.num_style_slots();
        let mut grads = ParamGrads::zeros_for(g, ParamGroup::Synthesis);
        let tune_mapping = self.config.tune_mapping && self.latent.space() == LatentSpace::Z;
        if tune_mapping {
            grads.merge(ParamGrads::zeros_for(g, ParamGroup::Mapping));
        }
        let (styles, map_pass) = match &self.latent {
            Latent::Z(z) => {
                let (w, pass) = map_with_tape(g, z)?;
                (broadcast_w(&w, slots)?, Some(pass))
            }
            other => (other.styles(g)?, None),
        };
        let (images, pass) = synthesize_with_tape(g, std::slice::from_ref(&styles))?;
        let img = &images[0];
        let mse = eval_mse(img, &self.target)?;
        let lv = weighted_loss_to(&self.config.weights, &self.extractor, img, &self.target, &self.target_features)?;
        let dstyles = pass.backward(g, &lv.grad, Some(&mut grads)).remove(0);
        let dlatent = match (&self.latent, map_pass) {
            (Latent::Z(_), Some(mp)) => {
                let dw = dstyles.layer_sum();
                mp.backward(g, &dw, if tune_mapping { Some(&mut grads) } else { None })
            }
            (Latent::W(_), _) => dstyles.layer_sum(),
            _ => dstyles.to_flat(),
        };
        Ok((lv.total, lv.recon, lv.perceptual, mse, dlatent, grads))
    }

    fn step_latent(&mut self, grad: &[f64]) {
        let opt = &mut self.opt_latent;
        match &mut self.latent {
            Latent::Z(z) => opt.update("latent", &mut z.0, grad),
            Latent::W(w) => opt.update("latent", &mut w.0, grad),
            Latent::WPlus(s) => {
                let mut flat = s.to_flat();
                opt.update("latent", &mut flat, grad);
                *s = StyleStack::from_flat(&flat, s.num_layers(), s.w_dim());
            }
        }
    }

    fn sample_batch(&mut self) -> Result<ReplayBatch> {
        sample_replay_batch(
            &self.pair.anchored,
            &self.bank,
            self.config.replay_n,
            self.config.fallback_anchor_norm,
            &mut self.rng,
        )
    }

    fn replay_pass(&self, batch: &ReplayBatch) -> Result<(f64, ParamGrads)> {
        let mask = ReplayTermsMask {
            support: self.config.replay_support,
            anchor: self.config.replay_anchor,
        };
        let tune_mapping = self.config.tune_mapping && self.latent.space() == LatentSpace::Z;
        let mut out = replay_loss_with(&self.pair, batch, &self.extractor, mask, tune_mapping)?;
        out.grads.scale(self.config.replay_weight);
        let value = self.config.replay_weight * out.terms.total();
        if !value.is_finite() || !out.grads.is_finite() {
            return Err(self.non_finite("replay loss"));
        }
        Ok((value, out.grads))
    }

    /// Run one iteration. Returns the record appended to the trace.
    pub fn step(&mut self) -> Result<IterRecord> {
        if self.is_done() {
            return Err(contract("inversion run already finished"));
        }
        let batch = if self.config.replay_enabled() {
            Some(self.sample_batch()?)
        } else {
            None
        };
        let (loss, recon, perceptual, mse, dlatent, mut grads) = self.target_pass()?;
        if !loss.is_finite() {
            return Err(self.non_finite("target loss"));
        }
        if !grads.is_finite() || dlatent.iter().any(|g| !g.is_finite()) {
            return Err(self.non_finite("target gradient"));
        }

        let mut replay = 0.0;
        if self.config.summed_step {
            if let Some(batch) = &batch {
                let (v, rg) = self.replay_pass(batch)?;
                grads.add_scaled(&rg, 1.0);
                replay = v;
            }
            self.step_latent(&dlatent);
            self.opt_target.step_params(&mut self.pair.tuned, &grads);
        } else {
            self.step_latent(&dlatent);
            self.opt_target.step_params(&mut self.pair.tuned, &grads);
            if let Some(batch) = &batch {
                let (v, rg) = self.replay_pass(batch)?;
                self.opt_replay.step_params(&mut self.pair.tuned, &rg);
                replay = v;
            }
        }
        if !self.latent.is_finite() {
            return Err(self.non_finite("latent update"));
        }

        self.iter += 1;
        let ema = self.iter.is_multiple_of(self.config.ema_interval) && self.iter < self.config.total_iters;
        if ema {
            self.pair.anchored = ema_blend(&self.pair.anchored, &self.pair.tuned, self.config.ema_beta)?;
            self.ema_iterations.push(self.iter);
        }
        let rec = IterRecord {
            iter: self.iter,
            loss,
            recon,
            perceptual,
            replay,
            eval_mse: mse,
            ema,
        };
        self.trace.push(rec);
        if let Some(th) = self.config.early_stop_mse {
            if mse <= th {
                self.stopped = true;
            }
        }
        Ok(rec)
    }

    /// Step until the budget is spent (or early stopping triggers).
    pub fn run(mut self) -> Result<InversionResult> {
        while !self.is_done() {
            self.step()?;
        }
        self.finish()
    }

    /// Stop here and package the current state.
    pub fn finish(self) -> Result<InversionResult> {
        let styles = self.latent.styles(&self.pair.tuned)?;
        let final_mse = eval_mse(&synthesize(&self.pair.tuned, &styles)?, &self.target)?;
        Ok(InversionResult {
            latent: self.latent,
            styles,
            tuned: self.pair.tuned,
            anchored: self.pair.anchored,
            trace: self.trace,
            ema_iterations: self.ema_iterations,
            iterations_run: self.iter,
            wall_time: self.started.elapsed(),
            config: self.config,
            initial_mse: self.initial_mse,
            final_mse,
        })
    }
}

/// Invert `target` with the default perceptual extractor for its resolution.
pub fn make_it_so(
    init: &GeneratorParams,
    target: &ImageTensor,
    bank: &EditBank,
    config: &InversionConfig,
) -> Result<InversionResult> {
    let extractor = FeatureExtractor::seeded(config.extractor_seed, init.resolution());
    make_it_so_with(init, target, bank, config, &extractor)
}

pub fn make_it_so_with(
    init: &GeneratorParams,
    target: &ImageTensor,
    bank: &EditBank,
    config: &InversionConfig,
    extractor: &FeatureExtractor,
) -> Result<InversionResult> {
    InversionRun::new(init, target, bank, config, extractor)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, init_toy_generator, GeneratorConfig};

    fn setup() -> (GeneratorParams, ImageTensor, FeatureExtractor) {
        let p = init_toy_generator(4, &GeneratorConfig::micro()).unwrap();
        let t = generate(&p, &NoiseVector(vec![0.3; 8])).unwrap();
        (p, t, FeatureExtractor::seeded(0, 8))
    }

    fn short(iters: usize) -> InversionConfig {
        InversionConfig {
            replay_n: 2,
            ..InversionConfig::for_iters(iters)
        }
    }

    #[test]
    fn records_schedule_and_keeps_mapping() {
        let (p, t, ex) = setup();
        let r = make_it_so_with(&p, &t, &EditBank::empty(p.arch_hash()), &short(25), &ex).unwrap();
        assert_eq!(r.ema_iterations, vec![5, 10, 15, 20]);
        assert_eq!(r.trace.len(), 25);
        assert!(r.tuned.group_bit_equal(&p, ParamGroup::Mapping));
        assert!(r.anchored.group_bit_equal(&p, ParamGroup::Mapping));
        assert!(!r.tuned.group_bit_equal(&p, ParamGroup::Synthesis));
        assert!(r.final_mse < r.initial_mse);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (p, t, ex) = setup();
        let bank = EditBank::empty(p.arch_hash());
        let a = make_it_so_with(&p, &t, &bank, &short(6), &ex).unwrap();
        let b = make_it_so_with(&p, &t, &bank, &short(6), &ex).unwrap();
        assert_eq!(a.latent, b.latent);
        assert!(a.tuned.bit_equal(&b.tuned));
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn style_space_runs_and_early_stop() {
        let (p, t, ex) = setup();
        let bank = EditBank::empty(p.arch_hash());
        for space in [LatentSpace::W, LatentSpace::WPlus] {
            let cfg = InversionConfig {
                latent_space: space,
                ..short(5)
            };
            let r = make_it_so_with(&p, &t, &bank, &cfg, &ex).unwrap();
            assert_eq!(r.latent.space(), space);
        }
        let cfg = InversionConfig {
            early_stop_mse: Some(f64::INFINITY),
            ..short(5)
        };
        let r = make_it_so_with(&p, &t, &bank, &cfg, &ex).unwrap();
        assert_eq!(r.iterations_run, 1);
    }

    #[test]
    fn non_finite_target_is_rejected_and_step_after_done_fails() {
        let (p, t, ex) = setup();
        let bank = EditBank::empty(p.arch_hash());
        let mut bad = t.clone();
        bad.pixels[0] = f64::NAN;
        assert!(InversionRun::new(&p, &bad, &bank, &short(2), &ex).is_err());
        let mut run = InversionRun::new(&p, &t, &bank, &short(1), &ex).unwrap();
        run.step().unwrap();
        assert!(run.step().is_err());
    }

    #[test]
    fn exploding_learning_rate_reports_iteration() {
        let (p, t, ex) = setup();
        let cfg = InversionConfig {
            lr_g: 1e300,
            ..short(10)
        };
        match make_it_so_with(&p, &t, &EditBank::empty(p.arch_hash()), &cfg, &ex) {
            Err(Error::NonFinite { iteration, .. }) => assert!(iteration < 10),
            other => panic!("expected NonFinite, got {:?}", other.map(|r| r.final_mse)),
        }
    }
}
