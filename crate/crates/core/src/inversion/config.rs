use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::LossWeights;

/// Where the optimized latent lives. `Z` is the default; the style-space
/// variants keep replay and EMA but optimize a W or W+ code instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentSpace {
    Z,
    W,
    WPlus,
}

impl std::fmt::Display for LatentSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LatentSpace::Z => "z",
            LatentSpace::W => "w",
            LatentSpace::WPlus => "w_plus",
        })
    }
}

impl std::str::FromStr for LatentSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "z" => Ok(LatentSpace::Z),
            "w" => Ok(LatentSpace::W),
            "w_plus" | "w+" | "wplus" => Ok(LatentSpace::WPlus),
            other => Err(Error::Config(format!("unknown latent space `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    pub total_iters: usize,
    /// Anchored model is blended toward the tuned one at every positive
    /// multiple of this below `total_iters`. A value above `total_iters`
    /// disables blending.
    pub ema_interval: usize,
    pub ema_beta: f64,
    /// Support images per replay batch.
    pub replay_n: usize,
    pub lr_z: f64,
    pub lr_g: f64,
    pub weights: LossWeights,
    pub seed: u64,
    pub tune_mapping: bool,
    /// Global multiplier on the replay objective; 0 disables the replay step.
    pub replay_weight: f64,
    pub replay_support: bool,
    pub replay_anchor: bool,
    /// Take one optimizer step on the summed objective instead of two
    /// sequential sub-steps per iteration.
    pub summed_step: bool,
    /// Stop once the reconstruction MSE drops below this value.
    pub early_stop_mse: Option<f64>,
    pub latent_space: LatentSpace,
    /// Per-layer norm of random anchors used when the edit bank is empty.
    pub fallback_anchor_norm: f64,
    pub extractor_seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self::base()
    }
}

impl InversionConfig {
    /// 500 iterations, blending every 100 (4 updates).
    pub fn base() -> Self {
        Self {
            total_iters: 500,
            ema_interval: 100,
            ema_beta: 0.9999,
            replay_n: 4,
            lr_z: 1e-2,
            lr_g: 3e-4,
            weights: LossWeights::default(),
            seed: 0,
            tune_mapping: false,
            replay_weight: 1.0,
            replay_support: true,
            replay_anchor: true,
            summed_step: false,
            early_stop_mse: None,
            latent_space: LatentSpace::Z,
            fallback_anchor_norm: 1.0,
            extractor_seed: 0,
        }
    }

    /// 1000 iterations, blending every 200 (4 updates).
    pub fn extended() -> Self {
        Self {
            total_iters: 1000,
            ema_interval: 200,
            ..Self::base()
        }
    }

    /// Preset for a named iteration count: 500 and 1000 select the base and
    /// extended schedules; any other count keeps four evenly spaced blends.
    pub fn for_iters(iters: usize) -> Self {
        match iters {
            500 => Self::base(),
            1000 => Self::extended(),
            n => Self {
                total_iters: n,
                ema_interval: (n / 5).max(1),
                ..Self::base()
            },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.total_iters == 0 {
            return bad("total_iters must be at least 1".into());
        }
        if self.ema_interval == 0 {
            return bad("ema_interval must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.ema_beta) {
            return bad(format!("ema_beta must lie in [0, 1], got {}", self.ema_beta));
        }
        if self.replay_n == 0 {
            return bad("replay_n must be at least 1".into());
        }
        for (name, lr) in [("lr_z", self.lr_z), ("lr_g", self.lr_g)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative, got {lr}"));
            }
        }
        if !(self.replay_weight.is_finite() && self.replay_weight >= 0.0) {
            return bad(format!("replay_weight must be finite and nonnegative, got {}", self.replay_weight));
        }
        if !(self.fallback_anchor_norm.is_finite() && self.fallback_anchor_norm > 0.0) {
            return bad("fallback_anchor_norm must be positive".into());
        }
        self.weights.validate()
    }

    /// Iterations at which the anchored model is blended.
    pub fn ema_schedule(&self) -> Vec<usize> {
        (1..)
            .map(|k| k * self.ema_interval)
            .take_while(|&t| t < self.total_iters)
            .collect()
    }

    pub fn replay_enabled(&self) -> bool {
        self.replay_weight > 0.0 && (self.replay_support || self.replay_anchor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_schedule_four_updates() {
        assert_eq!(InversionConfig::base().ema_schedule(), vec![100, 200, 300, 400]);
        assert_eq!(InversionConfig::extended().ema_schedule(), vec![200, 400, 600, 800]);
        assert_eq!(InversionConfig::for_iters(100).ema_schedule(), vec![20, 40, 60, 80]);
    }

    #[test]
    fn interval_beyond_budget_disables_blending() {
        let c = InversionConfig {
            ema_interval: 501,
            ..InversionConfig::base()
        };
        c.validate().unwrap();
        assert!(c.ema_schedule().is_empty());
    }

    #[test]
    fn rejects_bad_values() {
        let b = InversionConfig::base();
        assert!(InversionConfig { replay_n: 0, ..b.clone() }.validate().is_err());
        assert!(InversionConfig { ema_beta: 1.5, ..b.clone() }.validate().is_err());
        assert!(InversionConfig { lr_z: f64::NAN, ..b.clone() }.validate().is_err());
        assert!(InversionConfig { ema_interval: 0, ..b }.validate().is_err());
    }

    #[test]
    fn latent_space_parses() {
        assert_eq!("w+".parse::<LatentSpace>().unwrap(), LatentSpace::WPlus);
        assert_eq!("Z".parse::<LatentSpace>().unwrap(), LatentSpace::Z);
        assert!("q".parse::<LatentSpace>().is_err());
    }
}
