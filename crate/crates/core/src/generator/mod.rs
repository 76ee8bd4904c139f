//! Style-based toy generator: mapping network Z -> W, style broadcast to W+,
//! and style-modulated synthesis W+ -> image, all in `f64` with exact
//! reverse-mode gradients.

mod checkpoint;
mod config;
mod mapping;
mod params;
mod synthesis;
mod types;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_EXTENSION, CHECKPOINT_MAGIC};
pub use config::GeneratorConfig;
pub use params::{
    clone_params, param_distance, GeneratorMeta, GeneratorParams, ParamArray, ParamGrads, ParamGroup,
};
pub use types::{ImageTensor, NoiseVector, StyleStack, StyleVector};

use crate::error::{contract, Result};

/// Seeded toy generator. Weights are standard normal (runtime gains give
/// equalized learning rates), biases zero, affine biases one. Values are
/// rounded to `f32` so fresh checkpoints store compactly.
pub fn init_toy_generator(seed: u64, config: &GeneratorConfig) -> Result<GeneratorParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = params::declared_shapes(config);
    let mut arrays = std::collections::BTreeMap::new();
    for (name, shape) in shapes {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = if name.ends_with(".affine.bias") {
            vec![1.0; n]
        } else if name.ends_with(".bias") {
            vec![0.0; n]
        } else {
            (0..n)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    v as f32 as f64
                })
                .collect()
        };
        arrays.insert(name, ParamArray { shape, data });
    }
    GeneratorParams::from_arrays(config.clone(), arrays)
}

fn check_z(params: &GeneratorParams, z: &NoiseVector) -> Result<()> {
    let z_dim = params.config().z_dim;
    if z.len() != z_dim {
        return Err(contract(format!("noise vector has length {}, generator expects {z_dim}", z.len())));
    }
    if !z.is_finite() {
        return Err(contract("noise vector has non-finite entries"));
    }
    Ok(())
}

pub fn map_z_to_w(params: &GeneratorParams, z: &NoiseVector) -> Result<StyleVector> {
    Ok(map_with_tape(params, z)?.0)
}

pub fn broadcast_w(w: &StyleVector, num_layers: usize) -> Result<StyleStack> {
    if num_layers == 0 {
        return Err(contract("cannot broadcast to zero style layers"));
    }
    Ok(StyleStack::new(vec![w.clone(); num_layers]))
}

pub fn synthesize(params: &GeneratorParams, styles: &StyleStack) -> Result<ImageTensor> {
    Ok(synthesize_batch(params, std::slice::from_ref(styles))?.remove(0))
}

/// Batched synthesis; each image is identical to what [`synthesize`] returns
/// for the same stack.
pub fn synthesize_batch(params: &GeneratorParams, styles: &[StyleStack]) -> Result<Vec<ImageTensor>> {
    Ok(synthesize_with_tape(params, styles)?.0)
}

pub fn generate(params: &GeneratorParams, z: &NoiseVector) -> Result<ImageTensor> {
    let w = map_z_to_w(params, z)?;
    synthesize(params, &broadcast_w(&w, params.num_style_slots())?)
}

/// Sample a standard-normal noise vector.
pub fn sample_noise<R: rand::Rng>(rng: &mut R, z_dim: usize) -> NoiseVector {
    NoiseVector((0..z_dim).map(|_| StandardNormal.sample(rng)).collect())
}

/// Mean of `n` mapped standard-normal samples.
pub fn mean_style(params: &GeneratorParams, n: usize, seed: u64) -> Result<StyleVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_dim = params.config().w_dim;
    let mut acc = vec![0.0; w_dim];
    for _ in 0..n.max(1) {
        let z = sample_noise(&mut rng, params.config().z_dim);
        let w = map_z_to_w(params, &z)?;
        acc.iter_mut().zip(&w.0).for_each(|(a, v)| *a += v);
    }
    acc.iter_mut().for_each(|a| *a /= n.max(1) as f64);
    Ok(StyleVector(acc))
}

/// Recorded mapping evaluation; call [`MappingPass::backward`] for gradients.
pub struct MappingPass {
    tape: mapping::MappingTape,
}

pub fn map_with_tape(params: &GeneratorParams, z: &NoiseVector) -> Result<(StyleVector, MappingPass)> {
    check_z(params, z)?;
    let (w, tape) = mapping::forward(params, &z.0);
    Ok((StyleVector(w), MappingPass { tape }))
}

impl MappingPass {
    /// Gradient w.r.t. z given the gradient w.r.t. w. Mapping parameter
    /// gradients are accumulated into `grads` when provided; it must hold
    /// buffers for the mapping group.
    pub fn backward(&self, params: &GeneratorParams, dw: &[f64], grads: Option<&mut ParamGrads>) -> Vec<f64> {
        mapping::backward(params, &self.tape, dw, grads)
    }
}

/// Recorded synthesis evaluation of a batch.
pub struct SynthesisPass {
    tape: synthesis::SynthesisTape,
    num_layers: usize,
    w_dim: usize,
}

pub fn synthesize_with_tape(
    params: &GeneratorParams,
    styles: &[StyleStack],
) -> Result<(Vec<ImageTensor>, SynthesisPass)> {
    let (slots, w_dim, res) = (params.num_style_slots(), params.config().w_dim, params.resolution());
    if styles.is_empty() {
        return Err(contract("empty style batch"));
    }
    let mut flat = Vec::with_capacity(styles.len() * slots * w_dim);
    for s in styles {
        s.check_shape(slots, w_dim)?;
        flat.extend(s.layers.iter().flat_map(|l| l.0.iter().copied()));
    }
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(contract("style stack has non-finite entries"));
    }
    let (out, tape) = synthesis::forward(params, &flat, styles.len());
    let n = 3 * res * res;
    let images = out
        .chunks(n)
        .map(|c| ImageTensor {
            height: res,
            width: res,
            pixels: c.to_vec(),
        })
        .collect();
    Ok((
        images,
        SynthesisPass {
            tape,
            num_layers: slots,
            w_dim,
        },
    ))
}

impl SynthesisPass {
    /// `dimages` is the concatenated `(B, 3, R, R)` gradient. Returns one
    /// style-stack gradient per batch item; synthesis parameter gradients are
    /// accumulated into `grads` when provided.
    pub fn backward(&self, params: &GeneratorParams, dimages: &[f64], grads: Option<&mut ParamGrads>) -> Vec<StyleStack> {
        let flat = synthesis::backward(params, &self.tape, dimages, grads);
        flat.chunks(self.num_layers * self.w_dim)
            .map(|c| StyleStack::from_flat(c, self.num_layers, self.w_dim))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> GeneratorParams {
        init_toy_generator(3, &GeneratorConfig::micro()).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let cfg = GeneratorConfig::micro();
        let a = init_toy_generator(1, &cfg).unwrap();
        let b = init_toy_generator(1, &cfg).unwrap();
        let c = init_toy_generator(2, &cfg).unwrap();
        assert!(a.bit_equal(&b));
        assert_eq!(a.arch_hash(), c.arch_hash());
        assert!(!a.bit_equal(&c));
        for ((na, pa), (nc, pc)) in a.iter().zip(c.iter()) {
            assert_eq!(na, nc);
            assert_eq!(pa.shape, pc.shape);
        }
    }

    #[test]
    fn default_toy_is_under_two_million_params() {
        let p = init_toy_generator(0, &GeneratorConfig::default()).unwrap();
        assert!(p.num_params() < 2_000_000, "{}", p.num_params());
        assert_eq!(p.num_style_slots(), 8);
        assert_eq!(p.resolution(), 32);
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let p = micro();
        let z = NoiseVector::zeros(5);
        assert!(matches!(map_z_to_w(&p, &z), Err(crate::Error::Contract(_))));
        let styles = StyleStack::zeros(3, 8);
        assert!(matches!(synthesize(&p, &styles), Err(crate::Error::Contract(_))));
        let bad = NoiseVector(vec![f64::NAN; 8]);
        assert!(map_z_to_w(&p, &bad).is_err());
    }

    #[test]
    fn broadcast_replicates() {
        let w = StyleVector(vec![1.0, -2.0]);
        assert_eq!(broadcast_w(&w, 1).unwrap().layers, vec![w.clone()]);
        let s = broadcast_w(&w, 8).unwrap();
        assert_eq!(s.num_layers(), 8);
        assert!(s.layers.iter().all(|l| *l == w));
        assert!(broadcast_w(&w, 0).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let p = micro();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let stacks: Vec<StyleStack> = (0..3)
            .map(|_| {
                let z = sample_noise(&mut rng, 8);
                broadcast_w(&map_z_to_w(&p, &z).unwrap(), 4).unwrap()
            })
            .collect();
        let batch = synthesize_batch(&p, &stacks).unwrap();
        for (s, img) in stacks.iter().zip(&batch) {
            assert_eq!(&synthesize(&p, s).unwrap(), img);
        }
    }
}
