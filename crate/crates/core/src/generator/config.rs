use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the style-based toy generator.
///
/// Synthesis starts from a learned 4x4 constant. The 4x4 block has one
/// style-modulated convolution; every later block upsamples 2x and applies
/// two. A final modulated 1x1 projection to RGB consumes the last style slot,
/// so a `2^k` resolution has `2k - 2` slots (8 at 32x32).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub z_dim: usize,
    pub w_dim: usize,
    pub mapping_hidden: usize,
    pub mapping_hidden_layers: usize,
    pub resolution: usize,
    /// Channels at resolution `r` are `min(channel_max, channel_base / r)`.
    pub channel_base: usize,
    pub channel_max: usize,
    pub lrelu_slope: f64,
    /// Runtime multiplier on the style affines. Values below 1 keep
    /// modulations mild, which makes the image a smoother function of the
    /// latent.
    pub style_gain: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            z_dim: 64,
            w_dim: 64,
            mapping_hidden: 64,
            mapping_hidden_layers: 2,
            resolution: 32,
            channel_base: 256,
            channel_max: 64,
            lrelu_slope: 0.2,
            style_gain: 0.25,
        }
    }
}

impl GeneratorConfig {
    /// 8x8 output, 8-dimensional latents. Small enough for exhaustive
    /// finite-difference checks.
    pub fn micro() -> Self {
        Self {
            z_dim: 8,
            w_dim: 8,
            mapping_hidden: 8,
            mapping_hidden_layers: 2,
            resolution: 8,
            channel_base: 32,
            channel_max: 8,
            lrelu_slope: 0.2,
            style_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.resolution < 4 || !self.resolution.is_power_of_two() {
            return bad(format!(
                "resolution must be a power of two >= 4, got {}",
                self.resolution
            ));
        }
        if self.z_dim == 0 || self.w_dim == 0 || self.mapping_hidden == 0 {
            return bad("latent and mapping widths must be positive".into());
        }
        if self.channel_max == 0 || self.channel_base < self.resolution {
            return bad(format!(
                "channel_base {} leaves no channels at resolution {}",
                self.channel_base, self.resolution
            ));
        }
        if !self.lrelu_slope.is_finite() {
            return bad("lrelu_slope must be finite".into());
        }
        if !(self.style_gain.is_finite() && self.style_gain > 0.0) {
            return bad(format!("style_gain must be positive, got {}", self.style_gain));
        }
        Ok(())
    }

    pub fn channels_at(&self, res: usize) -> usize {
        (self.channel_base / res).clamp(1, self.channel_max)
    }

    pub fn num_style_slots(&self) -> usize {
        2 * self.resolution.trailing_zeros() as usize - 2
    }

    /// Synthesis convolutions in execution order.
    pub(crate) fn conv_layers(&self) -> Vec<ConvSpec> {
        let mut layers = vec![ConvSpec {
            name: "synthesis.b4.conv0".into(),
            res: 4,
            cin: self.channels_at(4),
            cout: self.channels_at(4),
            upsample: false,
        }];
        let mut res = 8;
        while res <= self.resolution {
            let cin = self.channels_at(res / 2);
            let cout = self.channels_at(res);
            layers.push(ConvSpec {
                name: format!("synthesis.b{res}.conv0"),
                res,
                cin,
                cout,
                upsample: true,
            });
            layers.push(ConvSpec {
                name: format!("synthesis.b{res}.conv1"),
                res,
                cin: cout,
                cout,
                upsample: false,
            });
            res *= 2;
        }
        layers
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConvSpec {
    pub name: String,
    /// Output resolution.
    pub res: usize,
    pub cin: usize,
    pub cout: usize,
    pub upsample: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_eight_slots_at_32() {
        let c = GeneratorConfig::default();
        c.validate().unwrap();
        assert_eq!(c.resolution, 32);
        assert_eq!(c.num_style_slots(), 8);
        // one conv per slot except the last, which drives the RGB projection
        assert_eq!(c.conv_layers().len(), 7);
        assert_eq!(c.channels_at(4), 64);
        assert_eq!(c.channels_at(32), 8);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let c = GeneratorConfig {
            resolution: 24,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = GeneratorConfig {
            resolution: 2,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn micro_slots() {
        assert_eq!(GeneratorConfig::micro().num_style_slots(), 4);
    }
}
