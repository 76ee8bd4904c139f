use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::GeneratorConfig;
use crate::error::{Error, Result};

pub const MAPPING_PREFIX: &str = "mapping.";
pub const SYNTHESIS_PREFIX: &str = "synthesis.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Mapping,
    Synthesis,
}

impl ParamGroup {
    pub fn prefix(self) -> &'static str {
        match self {
            ParamGroup::Mapping => MAPPING_PREFIX,
            ParamGroup::Synthesis => SYNTHESIS_PREFIX,
        }
    }

    pub fn contains(self, name: &str) -> bool {
        name.starts_with(self.prefix())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamArray {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub config: GeneratorConfig,
    pub num_style_slots: usize,
    pub arch_hash: String,
}

/// All learnable generator parameters, keyed by a stable path such as
/// `synthesis.b8.conv0.weight`. Values are immutable snapshots; optimizers
/// mutate a uniquely owned copy.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    meta: GeneratorMeta,
    arrays: BTreeMap<String, ParamArray>,
}

/// Declared parameter shapes for a config, in canonical order.
pub(crate) fn declared_shapes(config: &GeneratorConfig) -> BTreeMap<String, Vec<usize>> {
    let mut shapes = BTreeMap::new();
    let mut fan_in = config.z_dim;
    for i in 0..=config.mapping_hidden_layers {
        let out = if i == config.mapping_hidden_layers {
            config.w_dim
        } else {
            config.mapping_hidden
        };
        shapes.insert(format!("mapping.fc{i}.weight"), vec![out, fan_in]);
        shapes.insert(format!("mapping.fc{i}.bias"), vec![out]);
        fan_in = out;
    }
    let c4 = config.channels_at(4);
    shapes.insert("synthesis.const".into(), vec![c4, 4, 4]);
    for l in config.conv_layers() {
        shapes.insert(format!("{}.weight", l.name), vec![l.cout, l.cin, 3, 3]);
        shapes.insert(format!("{}.bias", l.name), vec![l.cout]);
        shapes.insert(format!("{}.affine.weight", l.name), vec![l.cin, config.w_dim]);
        shapes.insert(format!("{}.affine.bias", l.name), vec![l.cin]);
    }
    let c_last = config.channels_at(config.resolution);
    shapes.insert("synthesis.torgb.weight".into(), vec![3, c_last]);
    shapes.insert("synthesis.torgb.bias".into(), vec![3]);
    shapes.insert("synthesis.torgb.affine.weight".into(), vec![c_last, config.w_dim]);
    shapes.insert("synthesis.torgb.affine.bias".into(), vec![c_last]);
    shapes
}

pub(crate) fn architecture_hash(config: &GeneratorConfig) -> String {
    let shapes = declared_shapes(config);
    let canonical = serde_json::to_string(&(config, &shapes)).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

impl GeneratorParams {
    /// Assemble from named arrays, checking names and shapes against `config`.
    pub fn from_arrays(config: GeneratorConfig, arrays: BTreeMap<String, ParamArray>) -> Result<Self> {
        config.validate()?;
        let shapes = declared_shapes(&config);
        for (name, shape) in &shapes {
            let arr = arrays
                .get(name)
                .ok_or_else(|| crate::error::format_err(name.clone(), "missing parameter array"))?;
            if &arr.shape != shape || arr.data.len() != shape.iter().product::<usize>() {
                return Err(crate::error::format_err(
                    name.clone(),
                    format!("shape {:?} does not match declared {:?}", arr.shape, shape),
                ));
            }
        }
        if let Some(extra) = arrays.keys().find(|k| !shapes.contains_key(*k)) {
            return Err(crate::error::format_err(extra.clone(), "unexpected parameter array"));
        }
        let meta = GeneratorMeta {
            num_style_slots: config.num_style_slots(),
            arch_hash: architecture_hash(&config),
            config,
        };
        Ok(Self { meta, arrays })
    }

    pub fn meta(&self) -> &GeneratorMeta {
        &self.meta
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.meta.config
    }

    pub fn arch_hash(&self) -> &str {
        &self.meta.arch_hash
    }

    pub fn num_style_slots(&self) -> usize {
        self.meta.num_style_slots
    }

    pub fn resolution(&self) -> usize {
        self.meta.config.resolution
    }

    pub fn get(&self, name: &str) -> Option<&ParamArray> {
        self.arrays.get(name)
    }

    /// Panics on an unknown name; internal callers only use declared names.
    pub(crate) fn data(&self, name: &str) -> &[f64] {
        match self.arrays.get(name) {
            Some(a) => &a.data,
            None => panic!("unknown parameter `{name}`"),
        }
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamArray> {
        self.arrays.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamArray)> {
        self.arrays.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ParamArray)> {
        self.arrays.iter_mut()
    }

    pub fn group(&self, group: ParamGroup) -> impl Iterator<Item = (&String, &ParamArray)> {
        self.arrays.iter().filter(move |(k, _)| group.contains(k))
    }

    pub fn num_params(&self) -> usize {
        self.arrays.values().map(ParamArray::len).sum()
    }

    pub fn check_compatible(&self, other: &GeneratorParams) -> Result<()> {
        if self.arch_hash() != other.arch_hash() {
            return Err(Error::IncompatibleArchitecture {
                expected: self.arch_hash().to_string(),
                found: other.arch_hash().to_string(),
            });
        }
        Ok(())
    }

    /// True when every array of `group` is bit-identical in both snapshots.
    pub fn group_bit_equal(&self, other: &GeneratorParams, group: ParamGroup) -> bool {
        self.arch_hash() == other.arch_hash()
            && self
                .group(group)
                .zip(other.group(group))
                .all(|((_, a), (_, b))| {
                    a.data.len() == b.data.len()
                        && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
                })
    }

    pub fn bit_equal(&self, other: &GeneratorParams) -> bool {
        self.group_bit_equal(other, ParamGroup::Mapping) && self.group_bit_equal(other, ParamGroup::Synthesis)
    }
}

/// Gradient buffers keyed like [`GeneratorParams`]; only requested arrays
/// are present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGrads(pub BTreeMap<String, Vec<f64>>);

impl ParamGrads {
    pub fn zeros_for(params: &GeneratorParams, group: ParamGroup) -> Self {
        Self(
            params
                .group(group)
                .map(|(k, v)| (k.clone(), vec![0.0; v.len()]))
                .collect(),
        )
    }

    pub fn get(&self, name: &str) -> Option<&Vec<f64>> {
        self.0.get(name)
    }

    pub(crate) fn slot(&mut self, name: &str) -> &mut Vec<f64> {
        match self.0.get_mut(name) {
            Some(v) => v,
            None => panic!("no gradient buffer for `{name}`"),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.0.values_mut() {
            v.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// `self += factor * other` over the names both contain.
    pub fn add_scaled(&mut self, other: &ParamGrads, factor: f64) {
        for (k, v) in self.0.iter_mut() {
            if let Some(o) = other.0.get(k) {
                v.iter_mut().zip(o).for_each(|(a, b)| *a += factor * b);
            }
        }
    }

    pub fn merge(&mut self, other: ParamGrads) {
        for (k, v) in other.0 {
            match self.0.get_mut(&k) {
                Some(mine) => mine.iter_mut().zip(&v).for_each(|(a, b)| *a += b),
                None => {
                    self.0.insert(k, v);
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.values().all(|v| v.iter().all(|g| g.is_finite()))
    }
}

/// RMS difference over every synthesis element.
pub fn param_distance(a: &GeneratorParams, b: &GeneratorParams) -> Result<f64> {
    a.check_compatible(b)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((_, x), (_, y)) in a.group(ParamGroup::Synthesis).zip(b.group(ParamGroup::Synthesis)) {
        sum += x.data.iter().zip(&y.data).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        n += x.len();
    }
    Ok((sum / n as f64).sqrt())
}

/// Deep copy; mutating the copy never affects the original.
pub fn clone_params(params: &GeneratorParams) -> GeneratorParams {
    params.clone()
}
