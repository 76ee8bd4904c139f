//! Additive W+ edit directions and the bank file that carries them.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, format_err, Result};
use crate::generator::{broadcast_w, map_z_to_w, synthesize, GeneratorParams, ImageTensor, NoiseVector, StyleStack, StyleVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditDirection {
    pub name: String,
    #[serde(default = "default_strength")]
    pub default_strength: f64,
    #[serde(default = "default_range")]
    pub strength_range: [f64; 2],
    /// One offset row of `w_dim` values per style slot. All-zero rows leave
    /// that slot untouched.
    #[serde(with = "offsets_serde")]
    pub offsets: StyleStack,
    /// Reserved for per-channel edits; carried through but not applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_mask: Option<Vec<Vec<bool>>>,
}

fn default_strength() -> f64 {
    1.0
}

fn default_range() -> [f64; 2] {
    [-3.0, 3.0]
}

mod offsets_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &StyleStack, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&Vec<f64>> = s.layers.iter().map(|l| &l.0).collect();
        rows.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<StyleStack, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(de)?;
        Ok(StyleStack::new(rows.into_iter().map(StyleVector).collect()))
    }
}

impl EditDirection {
    pub fn new(name: impl Into<String>, offsets: StyleStack) -> Self {
        Self {
            name: name.into(),
            default_strength: default_strength(),
            strength_range: default_range(),
            offsets,
            channel_mask: None,
        }
    }

    /// Direction whose offsets are all zero.
    pub fn zero(name: impl Into<String>, num_layers: usize, w_dim: usize) -> Self {
        Self::new(name, StyleStack::zeros(num_layers, w_dim))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditBank {
    pub arch_hash: String,
    pub directions: Vec<EditDirection>,
}

impl EditBank {
    pub fn new(arch_hash: impl Into<String>, directions: Vec<EditDirection>) -> Result<Self> {
        let bank = Self {
            arch_hash: arch_hash.into(),
            directions,
        };
        bank.validate_internal()?;
        Ok(bank)
    }

    pub fn empty(arch_hash: impl Into<String>) -> Self {
        Self {
            arch_hash: arch_hash.into(),
            directions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&EditDirection> {
        self.directions.iter().find(|d| d.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.directions.iter().map(|d| d.name.as_str()).collect()
    }

    /// `bank` holding `n` random directions named `random-0..n`.
    pub fn random<R: Rng>(rng: &mut R, params: &GeneratorParams, n: usize, norm: f64) -> Result<Self> {
        let (l, w) = (params.num_style_slots(), params.config().w_dim);
        let dirs = (0..n)
            .map(|i| {
                let mut d = random_direction(rng, l, w, norm)?;
                d.name = format!("random-{i}");
                Ok(d)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(params.arch_hash(), dirs)
    }

    fn validate_internal(&self) -> Result<()> {
        let Some(first) = self.directions.first() else {
            return Ok(());
        };
        self.validate_shape(first.offsets.num_layers(), first.offsets.w_dim())
    }

    /// Check unique names, finite values and offset shapes; errors name the
    /// offending field.
    pub fn validate_shape(&self, num_layers: usize, w_dim: usize) -> Result<()> {
        for (i, d) in self.directions.iter().enumerate() {
            let at = |f: &str| format!("directions[{i}].{f}");
            if self.directions[..i].iter().any(|o| o.name == d.name) {
                return Err(format_err(at("name"), format!("duplicate direction name `{}`", d.name)));
            }
            if d.offsets.num_layers() != num_layers {
                return Err(format_err(
                    at("offsets"),
                    format!("has {} rows, expected {num_layers}", d.offsets.num_layers()),
                ));
            }
            for (l, row) in d.offsets.layers.iter().enumerate() {
                if row.len() != w_dim {
                    return Err(format_err(
                        at(&format!("offsets[{l}]")),
                        format!("has {} values, expected {w_dim}", row.len()),
                    ));
                }
                if !row.is_finite() {
                    return Err(format_err(at(&format!("offsets[{l}]")), "non-finite value"));
                }
            }
            if !d.default_strength.is_finite() {
                return Err(format_err(at("default_strength"), "non-finite"));
            }
            let [lo, hi] = d.strength_range;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(format_err(at("strength_range"), format!("invalid range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Validate against a generator's style shape and architecture hash.
    pub fn check_for(&self, params: &GeneratorParams) -> Result<()> {
        if self.arch_hash != params.arch_hash() {
            return Err(format_err(
                "arch_hash",
                format!("bank built for {}, generator is {}", self.arch_hash, params.arch_hash()),
            ));
        }
        self.validate_shape(params.num_style_slots(), params.config().w_dim)
    }
}

pub fn save_bank(bank: &EditBank, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(bank)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Parse and internally validate a bank file.
pub fn load_bank(path: impl AsRef<Path>) -> Result<EditBank> {
    let text = std::fs::read_to_string(path)?;
    parse_bank(&text)
}

pub fn parse_bank(text: &str) -> Result<EditBank> {
    let bank: EditBank = serde_json::from_str(text).map_err(|e| {
        format_err(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    bank.validate_internal()?;
    Ok(bank)
}

/// Load a bank and check it against `params`.
pub fn load_bank_for(path: impl AsRef<Path>, params: &GeneratorParams) -> Result<EditBank> {
    let bank = load_bank(path)?;
    bank.check_for(params)?;
    Ok(bank)
}

/// `styles + strength * offsets`, layer by layer.
pub fn apply_edit(styles: &StyleStack, dir: &EditDirection, strength: f64) -> Result<StyleStack> {
    styles.check_shape(dir.offsets.num_layers(), dir.offsets.w_dim())?;
    if !strength.is_finite() {
        return Err(contract("edit strength must be finite"));
    }
    Ok(StyleStack::new(
        styles
            .layers
            .iter()
            .zip(&dir.offsets.layers)
            .map(|(s, o)| StyleVector(s.0.iter().zip(&o.0).map(|(a, b)| a + strength * b).collect()))
            .collect(),
    ))
}

pub fn edited_generate(
    params: &GeneratorParams,
    z: &NoiseVector,
    dir: &EditDirection,
    strength: f64,
) -> Result<ImageTensor> {
    let w = map_z_to_w(params, z)?;
    let styles = broadcast_w(&w, params.num_style_slots())?;
    synthesize(params, &apply_edit(&styles, dir, strength)?)
}

/// Gaussian offsets rescaled so every layer has Euclidean norm `norm`.
pub fn random_direction<R: Rng>(rng: &mut R, num_layers: usize, w_dim: usize, norm: f64) -> Result<EditDirection> {
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(contract(format!("direction norm must be positive, got {norm}")));
    }
    let layers = (0..num_layers)
        .map(|_| {
            let v: Vec<f64> = (0..w_dim).map(|_| StandardNormal.sample(rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            StyleVector(v.into_iter().map(|x| x * norm / n).collect())
        })
        .collect();
    Ok(EditDirection::new("random", StyleStack::new(layers)))
}
