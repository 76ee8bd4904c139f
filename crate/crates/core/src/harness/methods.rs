use serde::{Deserialize, Serialize};

use crate::baselines::{optimize_latent, pivotal_tune, BaselineConfig};
use crate::editing::EditBank;
use crate::error::{Error, Result};
use crate::generator::{synthesize, GeneratorParams, ImageTensor};
use crate::inversion::{make_it_so_with, InversionConfig, LatentSpace};
use crate::objectives::FeatureExtractor;

/// Inversion methods the harness can run. Every ablation is a pure config
/// transformation of the full method, see [`Method::inversion_config`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MakeItSo,
    WithoutSupport,
    WithoutAnchor,
    WithoutEma,
    WithoutExtended,
    WithoutReplay,
    MakeItSoW,
    MakeItSoWPlus,
    Pti,
    LatentZ,
    LatentW,
    LatentWPlus,
    /// Returns the initial generator untouched; edit deviation is zero.
    Identity,
}

pub const ALL_METHODS: [Method; 13] = [
    Method::MakeItSo,
    Method::WithoutSupport,
    Method::WithoutAnchor,
    Method::WithoutEma,
    Method::WithoutExtended,
    Method::WithoutReplay,
    Method::MakeItSoW,
    Method::MakeItSoWPlus,
    Method::Pti,
    Method::LatentZ,
    Method::LatentW,
    Method::LatentWPlus,
    Method::Identity,
];

impl Method {
    pub fn id(self) -> &'static str {
        match self {
            Method::MakeItSo => "make_it_so",
            Method::WithoutSupport => "wo_support",
            Method::WithoutAnchor => "wo_anchor",
            Method::WithoutEma => "wo_ema",
            Method::WithoutExtended => "wo_extended",
            Method::WithoutReplay => "wo_replay",
            Method::MakeItSoW => "make_it_so_w",
            Method::MakeItSoWPlus => "make_it_so_w_plus",
            Method::Pti => "pti",
            Method::LatentZ => "latent_z",
            Method::LatentW => "latent_w",
            Method::LatentWPlus => "latent_w_plus",
            Method::Identity => "identity",
        }
    }

    /// Row label used in markdown tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::MakeItSo => "Ours (full)",
            Method::WithoutSupport => "Ours w/o support loss",
            Method::WithoutAnchor => "Ours w/o anchor loss",
            Method::WithoutEma => "Ours w/o EMA",
            Method::WithoutExtended => "Ours w/o extended iterations",
            Method::WithoutReplay => "Ours w/o replay",
            Method::MakeItSoW => "Ours in W",
            Method::MakeItSoWPlus => "Ours in W+",
            Method::Pti => "PTI",
            Method::LatentZ => "Frozen G, Z",
            Method::LatentW => "Frozen G, W",
            Method::LatentWPlus => "Frozen G, W+",
            Method::Identity => "Identity",
        }
    }

    pub fn all() -> &'static [Method] {
        &ALL_METHODS
    }

    /// Inversion config for the Make It So family at an iteration budget of
    /// `iters`; `None` for methods outside it.
    pub fn inversion_config(self, iters: usize, seed: u64) -> Option<InversionConfig> {
        let full = InversionConfig::for_iters(iters).with_seed(seed);
        let cfg = match self {
            Method::MakeItSo => full,
            Method::WithoutSupport => InversionConfig {
                replay_support: false,
                ..full
            },
            Method::WithoutAnchor => InversionConfig {
                replay_anchor: false,
                ..full
            },
            Method::WithoutEma => InversionConfig {
                ema_interval: full.total_iters + 1,
                ..full
            },
            Method::WithoutExtended => InversionConfig::for_iters((iters / 2).max(1)).with_seed(seed),
            Method::WithoutReplay => InversionConfig {
                replay_weight: 0.0,
                ..full
            },
            Method::MakeItSoW => InversionConfig {
                latent_space: LatentSpace::W,
                ..full
            },
            Method::MakeItSoWPlus => InversionConfig {
                latent_space: LatentSpace::WPlus,
                ..full
            },
            _ => return None,
        };
        Some(cfg)
    }

    /// Baseline config with the gradient-step budget of a Make It So run of
    /// `iters` iterations (two optimizer steps per iteration).
    pub fn baseline_config(self, iters: usize, seed: u64) -> Option<BaselineConfig> {
        let steps = 2 * iters;
        let latent = |space| BaselineConfig {
            space,
            iters: steps,
            seed,
            ..BaselineConfig::default()
        };
        match self {
            Method::Pti => Some(BaselineConfig::pti_with_budget(steps).with_seed(seed)),
            Method::LatentZ => Some(latent(LatentSpace::Z)),
            Method::LatentW => Some(latent(LatentSpace::W)),
            Method::LatentWPlus => Some(latent(LatentSpace::WPlus)),
            _ => None,
        }
    }

    /// Invert `target` starting from `init`.
    pub fn run(
        self,
        init: &GeneratorParams,
        target: &ImageTensor,
        bank: &EditBank,
        iters: usize,
        seed: u64,
        extractor: &FeatureExtractor,
    ) -> Result<MethodOutput> {
        if let Some(cfg) = self.inversion_config(iters, seed) {
            let cfg = InversionConfig {
                extractor_seed: extractor.seed(),
                ..cfg
            };
            let r = make_it_so_with(init, target, bank, &cfg, extractor)?;
            return Ok(MethodOutput {
                reconstruction: r.reconstruction()?,
                tuned: r.tuned,
            });
        }
        if let Some(cfg) = self.baseline_config(iters, seed) {
            let cfg = BaselineConfig {
                extractor_seed: extractor.seed(),
                ..cfg
            };
            if self == Method::Pti {
                let r = pivotal_tune(init, target, &cfg)?;
                return Ok(MethodOutput {
                    reconstruction: synthesize(&r.tuned, &r.styles()?)?,
                    tuned: r.tuned,
                });
            }
            let fit = optimize_latent(init, target, &cfg)?;
            return Ok(MethodOutput {
                reconstruction: synthesize(init, &fit.styles)?,
                tuned: init.clone(),
            });
        }
        debug_assert_eq!(self, Method::Identity);
        let styles = crate::generator::broadcast_w(
            &crate::generator::mean_style(init, 1, seed)?,
            init.num_style_slots(),
        )?;
        Ok(MethodOutput {
            reconstruction: synthesize(init, &styles)?,
            tuned: init.clone(),
        })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_METHODS
            .iter()
            .copied()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// What a method hands to the metrics.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub reconstruction: ImageTensor,
    /// The generator the method would edit with afterwards.
    pub tuned: GeneratorParams,
}

/// The leave-one-out rows and the config each one runs, at budget `iters`.
pub fn ablation_flag_map(iters: usize, seed: u64) -> Vec<(Method, InversionConfig)> {
    [
        Method::MakeItSo,
        Method::WithoutSupport,
        Method::WithoutAnchor,
        Method::WithoutEma,
        Method::WithoutExtended,
        Method::WithoutReplay,
    ]
    .into_iter()
    .map(|m| (m, m.inversion_config(iters, seed).expect("Make It So family")))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for m in Method::all() {
            assert_eq!(m.id().parse::<Method>().unwrap(), *m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn every_ablation_row_is_a_config_flag() {
        let full = Method::MakeItSo.inversion_config(1000, 3).unwrap();
        assert_eq!(full.ema_schedule(), vec![200, 400, 600, 800]);
        for (m, cfg) in ablation_flag_map(1000, 3) {
            cfg.validate().unwrap();
            match m {
                Method::MakeItSo => assert_eq!(cfg, full),
                Method::WithoutSupport => {
                    assert!(!cfg.replay_support && cfg.replay_anchor);
                    assert_eq!(InversionConfig { replay_support: true, ..cfg }, full);
                }
                Method::WithoutAnchor => {
                    assert!(cfg.replay_support && !cfg.replay_anchor);
                    assert_eq!(InversionConfig { replay_anchor: true, ..cfg }, full);
                }
                Method::WithoutEma => {
                    assert!(cfg.ema_schedule().is_empty());
                    assert_eq!(InversionConfig { ema_interval: 200, ..cfg }, full);
                }
                Method::WithoutExtended => {
                    assert_eq!(cfg.total_iters, 500);
                    assert_eq!(cfg.ema_schedule(), vec![100, 200, 300, 400]);
                }
                Method::WithoutReplay => {
                    assert!(!cfg.replay_enabled());
                    assert_eq!(InversionConfig { replay_weight: 1.0, ..cfg }, full);
                }
                other => panic!("unexpected row {other}"),
            }
        }
    }

    #[test]
    fn baseline_budgets_match() {
        let pti = Method::Pti.baseline_config(100, 0).unwrap();
        assert_eq!(pti.pivot_iters + pti.tune_iters, 200);
        assert_eq!(Method::LatentW.baseline_config(100, 0).unwrap().iters, 200);
        assert!(Method::MakeItSo.baseline_config(100, 0).is_none());
        assert!(Method::Pti.inversion_config(100, 0).is_none());
    }
}
