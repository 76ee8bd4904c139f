//! Toy-generator studio behind a static web page.
//!
//! [`Studio`] is plain Rust and owns all state; [`web::Demo`] is the thin
//! wasm-bindgen face of it. Images cross the boundary as RGBA bytes,
//! row-major, ready for `ImageData`.

mod web;

pub use web::Demo;

use makeitso::editing::{apply_edit, EditBank, EditDirection};
use makeitso::generator::{broadcast_w, generate, map_z_to_w, sample_noise, synthesize, GeneratorParams, ImageTensor};
use makeitso::harness::{checkerboard_gradient, shifted_generator, toy_bank, toy_generator};
use makeitso::inversion::{InversionConfig, InversionRun};
use makeitso::objectives::FeatureExtractor;
use makeitso::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DIRECTIONS: usize = 4;

/// Images the inversion panel can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetChoice {
    /// A sample of a perturbed copy of the generator.
    Shifted,
    /// Checkerboard over a color gradient.
    Checkerboard,
}

impl std::str::FromStr for TargetChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifted" => Ok(Self::Shifted),
            "checkerboard" => Ok(Self::Checkerboard),
            other => Err(Error::Config(format!("unknown target `{other}`"))),
        }
    }
}

pub struct Studio {
    generator: GeneratorParams,
    bank: EditBank,
    run: Option<InversionRun>,
}

impl Studio {
    pub fn new() -> Result<Self> {
        let generator = toy_generator()?;
        let bank = toy_bank(&generator, DIRECTIONS)?;
        Ok(Self { generator, bank, run: None })
    }

    pub fn resolution(&self) -> usize {
        self.generator.resolution()
    }

    pub fn direction_names(&self) -> Vec<String> {
        self.bank.names().into_iter().map(String::from).collect()
    }

    fn direction(&self, index: usize) -> Result<&EditDirection> {
        self.bank
            .directions
            .get(index)
            .ok_or_else(|| Error::Config(format!("direction index {index} out of range")))
    }

    /// Sample `seed` of the generator, edited along direction `index`.
    pub fn sample(&self, seed: u64, index: usize, strength: f64) -> Result<ImageTensor> {
        let z = sample_noise(&mut ChaCha8Rng::seed_from_u64(seed), self.generator.config().z_dim);
        let w = map_z_to_w(&self.generator, &z)?;
        let styles = broadcast_w(&w, self.generator.num_style_slots())?;
        synthesize(&self.generator, &apply_edit(&styles, self.direction(index)?, strength)?)
    }

    /// Start a fresh inversion of `iters` iterations. Returns the target.
    pub fn begin(&mut self, choice: TargetChoice, seed: u64, iters: usize) -> Result<ImageTensor> {
        let r = self.resolution();
        let target = match choice {
            TargetChoice::Shifted => {
                let shifted = shifted_generator(&self.generator, 0.1, 5)?;
                let z = sample_noise(&mut ChaCha8Rng::seed_from_u64(seed), self.generator.config().z_dim);
                generate(&shifted, &z)?
            }
            TargetChoice::Checkerboard => {
                let cell = [2, 4, 8][(seed % 3) as usize];
                checkerboard_gradient(r, cell, seed as usize % cell, 0.4, [0.5, 0.0, -0.5])
            }
        };
        let config = InversionConfig::for_iters(iters).with_seed(seed);
        config.validate()?;
        let extractor = FeatureExtractor::seeded(config.extractor_seed, r);
        self.run = Some(InversionRun::new(&self.generator, &target, &self.bank, &config, &extractor)?);
        Ok(target)
    }

    fn run(&self) -> Result<&InversionRun> {
        self.run.as_ref().ok_or_else(|| Error::Config("no inversion started".into()))
    }

    /// Advance up to `n` iterations. Returns the latest pixel MSE, if any
    /// step has been taken.
    pub fn step(&mut self, n: usize) -> Result<Option<f64>> {
        let run = self.run.as_mut().ok_or_else(|| Error::Config("no inversion started".into()))?;
        for _ in 0..n {
            if run.is_done() {
                break;
            }
            run.step()?;
        }
        Ok(run.trace().last().map(|r| r.eval_mse))
    }

    pub fn iteration(&self) -> usize {
        self.run.as_ref().map_or(0, InversionRun::iteration)
    }

    pub fn is_done(&self) -> bool {
        self.run.as_ref().is_some_and(InversionRun::is_done)
    }

    pub fn blends(&self) -> Vec<usize> {
        self.run.as_ref().map_or_else(Vec::new, |r| r.ema_iterations().to_vec())
    }

    /// Current reconstruction edited along direction `index` through the
    /// tuned generator. Strength 0 is the reconstruction itself.
    pub fn edit_inverted(&self, index: usize, strength: f64) -> Result<ImageTensor> {
        let run = self.run()?;
        let tuned = &run.pair().tuned;
        let styles = run.latent().styles(tuned)?;
        synthesize(tuned, &apply_edit(&styles, self.direction(index)?, strength)?)
    }
}

