//! Reconstruction and perceptual objectives, plus the evaluation metrics
//! reported by the harness.

mod extractor;

use serde::{Deserialize, Serialize};

pub use extractor::{FeatureExtractor, Features, DEFAULT_STAGE_CHANNELS};

use crate::error::{contract, Error, Result};
use crate::generator::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_recon: f64,
    pub lambda_lpips: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_recon: 1.0,
            lambda_lpips: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_recon: f64, lambda_lpips: f64) -> Result<Self> {
        let w = Self {
            lambda_recon,
            lambda_lpips,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.lambda_recon) || !ok(self.lambda_lpips) {
            return Err(Error::Config(format!(
                "loss weights must be finite and nonnegative, got ({}, {})",
                self.lambda_recon, self.lambda_lpips
            )));
        }
        if self.lambda_recon == 0.0 && self.lambda_lpips == 0.0 {
            return Err(Error::Config("loss weights cannot both be zero".into()));
        }
        Ok(())
    }
}

fn check_pair(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if !a.same_shape(b) || a.len() != b.len() {
        return Err(contract(format!(
            "image shapes differ: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

/// Mean squared error over all pixels.
pub fn recon_loss(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_pair(a, b)?;
    Ok(mse(&a.pixels, &b.pixels))
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64
}

/// Reconstruction loss and its gradient w.r.t. `a`.
pub fn recon_loss_grad(a: &ImageTensor, b: &ImageTensor) -> Result<(f64, Vec<f64>)> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let grad = a.pixels.iter().zip(&b.pixels).map(|(p, q)| 2.0 * (p - q) / n).collect();
    Ok((mse(&a.pixels, &b.pixels), grad))
}

/// Mean over pyramid stages of the mean (over locations) squared distance
/// between unit-normalized feature vectors.
pub fn perceptual_loss(extractor: &FeatureExtractor, a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_pair(a, b)?;
    Ok(extractor.distance(&extractor.features(a)?, &extractor.features(b)?))
}

pub fn perceptual_loss_grad(
    extractor: &FeatureExtractor,
    a: &ImageTensor,
    b: &ImageTensor,
) -> Result<(f64, Vec<f64>)> {
    check_pair(a, b)?;
    let fb = extractor.features(b)?;
    perceptual_loss_grad_to(extractor, a, &fb)
}

/// Like [`perceptual_loss_grad`] against precomputed target features.
pub fn perceptual_loss_grad_to(
    extractor: &FeatureExtractor,
    a: &ImageTensor,
    target: &Features,
) -> Result<(f64, Vec<f64>)> {
    let fa = extractor.features(a)?;
    Ok(extractor.distance_grad(&fa, target))
}

/// A weighted loss value with its parts and gradient w.r.t. the generated image.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub total: f64,
    pub recon: f64,
    pub perceptual: f64,
    pub grad: Vec<f64>,
}

/// `lambda_recon * recon + lambda_lpips * perceptual`, with gradient.
pub fn total_inversion_loss(
    weights: &LossWeights,
    extractor: &FeatureExtractor,
    generated: &ImageTensor,
    target: &ImageTensor,
) -> Result<LossValue> {
    weights.validate()?;
    check_pair(generated, target)?;
    let tf = extractor.features(target)?;
    weighted_loss_to(weights, extractor, generated, target, &tf)
}

pub(crate) fn weighted_loss_to(
    weights: &LossWeights,
    extractor: &FeatureExtractor,
    generated: &ImageTensor,
    target: &ImageTensor,
    target_features: &Features,
) -> Result<LossValue> {
    let (recon, rg) = recon_loss_grad(generated, target)?;
    let (perceptual, pg) = perceptual_loss_grad_to(extractor, generated, target_features)?;
    let grad = rg
        .iter()
        .zip(&pg)
        .map(|(r, p)| weights.lambda_recon * r + weights.lambda_lpips * p)
        .collect();
    Ok(LossValue {
        total: weights.lambda_recon * recon + weights.lambda_lpips * perceptual,
        recon,
        perceptual,
        grad,
    })
}

/// Batch mean of a per-pair loss.
pub fn batch_mean<F>(a: &[ImageTensor], b: &[ImageTensor], mut per_pair: F) -> Result<f64>
where
    F: FnMut(&ImageTensor, &ImageTensor) -> Result<f64>,
{
    if a.len() != b.len() || a.is_empty() {
        return Err(contract("batches must be non-empty and of equal length"));
    }
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        sum += per_pair(x, y)?;
    }
    Ok(sum / a.len() as f64)
}

/// MSE metric on images clamped to `[-1, 1]`.
pub fn eval_mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_pair(a, b)?;
    recon_loss(&a.clamped(), &b.clamped())
}

/// Perceptual metric on images clamped to `[-1, 1]`.
pub fn eval_perceptual(extractor: &FeatureExtractor, a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_pair(a, b)?;
    perceptual_loss(extractor, &a.clamped(), &b.clamped())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(seed: u64, res: usize) -> ImageTensor {
        let n = 3 * res * res;
        let px = (0..n)
            .map(|i| (((i as u64 + 1) * (seed * 2 + 7) * 2654435761 % 1000) as f64 / 500.0 - 1.0) * 0.9)
            .collect();
        ImageTensor::new(res, res, px).unwrap()
    }

    #[test]
    fn recon_identity_and_offset() {
        let a = img(1, 8);
        assert_eq!(recon_loss(&a, &a).unwrap(), 0.0);
        let b = ImageTensor::new(8, 8, a.pixels.iter().map(|v| v + 0.5).collect()).unwrap();
        assert!((recon_loss(&a, &b).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(recon_loss(&img(1, 8), &img(1, 4)).is_err());
        let ex = FeatureExtractor::seeded(0, 8);
        assert!(perceptual_loss(&ex, &img(1, 4), &img(2, 4)).is_err());
    }

    #[test]
    fn perceptual_identity_and_symmetry() {
        let ex = FeatureExtractor::seeded(0, 8);
        let (a, b) = (img(1, 8), img(2, 8));
        assert_eq!(perceptual_loss(&ex, &a, &a).unwrap(), 0.0);
        let ab = perceptual_loss(&ex, &a, &b).unwrap();
        assert!(ab > 0.0);
        assert_eq!(ab, perceptual_loss(&ex, &b, &a).unwrap());
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::new(0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0).is_err());
        assert!(LossWeights::new(f64::NAN, 1.0).is_err());
        assert!(LossWeights::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn total_loss_is_linear() {
        let ex = FeatureExtractor::seeded(0, 8);
        let (a, b) = (img(3, 8), img(4, 8));
        let r = recon_loss(&a, &b).unwrap();
        let p = perceptual_loss(&ex, &a, &b).unwrap();
        let t10 = total_inversion_loss(&LossWeights::new(1.0, 0.0).unwrap(), &ex, &a, &b).unwrap();
        assert_eq!(t10.total, r);
        let t01 = total_inversion_loss(&LossWeights::new(0.0, 1.0).unwrap(), &ex, &a, &b).unwrap();
        assert_eq!(t01.total, p);
        let t23 = total_inversion_loss(&LossWeights::new(2.0, 3.0).unwrap(), &ex, &a, &b).unwrap();
        assert!((t23.total - (2.0 * r + 3.0 * p)).abs() < 1e-12);
    }

    #[test]
    fn eval_mse_matches_recon_and_grows() {
        let a = img(5, 8);
        let b = img(6, 8);
        assert_eq!(eval_mse(&a, &a).unwrap(), 0.0);
        assert_eq!(eval_mse(&a, &b).unwrap(), recon_loss(&a, &b).unwrap());
        let shift = |e: f64| ImageTensor::new(8, 8, a.pixels.iter().map(|v| v * 0.5 + e).collect()).unwrap();
        let base = shift(0.0);
        assert!(eval_mse(&base, &shift(0.1)).unwrap() < eval_mse(&base, &shift(0.2)).unwrap());
    }
}
