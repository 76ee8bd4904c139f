use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::generator::{generate, sample_noise, GeneratorParams, ImageTensor, ParamGroup};

/// Where benchmark targets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    /// Samples of the benchmark generator itself.
    InRange,
    /// Samples of a copy whose synthesis weights carry seeded Gaussian noise
    /// of scale `sigma`: close to, but outside, the generator's range.
    Shifted { sigma: f64, domain_seed: u64 },
    /// Checkerboard plus linear gradient images with seeded cell size,
    /// phase and colors.
    Synthetic,
    /// Caller-supplied images, reused for every seed.
    Provided { images: Vec<ImageTensor> },
}

impl TargetKind {
    /// `n` targets for one benchmark seed.
    pub fn targets(&self, params: &GeneratorParams, n: usize, seed: u64) -> Result<Vec<ImageTensor>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        let z_dim = params.config().z_dim;
        match self {
            TargetKind::InRange => (0..n).map(|_| generate(params, &sample_noise(&mut rng, z_dim))).collect(),
            TargetKind::Shifted { sigma, domain_seed } => {
                let shifted = shifted_generator(params, *sigma, *domain_seed)?;
                (0..n).map(|_| generate(&shifted, &sample_noise(&mut rng, z_dim))).collect()
            }
            TargetKind::Synthetic => {
                let r = params.resolution();
                Ok((0..n)
                    .map(|_| {
                        let cell = 1usize << rng.random_range(1..=(r.trailing_zeros().max(2) - 1));
                        let phase = rng.random_range(0..cell);
                        let amp = rng.random_range(0.2..0.5);
                        let tilt = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
                        checkerboard_gradient(r, cell, phase, amp, tilt)
                    })
                    .collect())
            }
            TargetKind::Provided { images } => {
                if images.is_empty() {
                    return Err(contract("no provided target images"));
                }
                Ok(images.iter().cycle().take(n).cloned().collect())
            }
        }
    }
}

/// Copy of `params` with `N(0, sigma^2)` noise added to every synthesis
/// element.
pub fn shifted_generator(params: &GeneratorParams, sigma: f64, seed: u64) -> Result<GeneratorParams> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(contract(format!("shift sigma must be nonnegative, got {sigma}")));
    }
    let mut out = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, arr) in out.iter_mut() {
        if ParamGroup::Synthesis.contains(name) {
            for v in arr.data.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += sigma * e;
            }
        }
    }
    Ok(out)
}

/// `amp * checker(cell, phase) + tilt[c] * (2x / (R - 1) - 1)` per channel.
pub fn checkerboard_gradient(resolution: usize, cell: usize, phase: usize, amp: f64, tilt: [f64; 3]) -> ImageTensor {
    let r = resolution;
    let cell = cell.max(1);
    let mut px = vec![0.0; 3 * r * r];
    for (c, t) in tilt.iter().enumerate() {
        for y in 0..r {
            for x in 0..r {
                let even = ((x + phase) / cell + (y + phase) / cell).is_multiple_of(2);
                let ramp = if r > 1 { 2.0 * x as f64 / (r - 1) as f64 - 1.0 } else { 0.0 };
                let v = if even { amp } else { -amp } + t * ramp;
                px[(c * r + y) * r + x] = v.clamp(-1.0, 1.0);
            }
        }
    }
    ImageTensor {
        height: r,
        width: r,
        pixels: px,
    }
}
