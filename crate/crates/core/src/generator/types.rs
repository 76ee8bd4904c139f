use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// A point in the standard-normal input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseVector(pub Vec<f64>);

/// A style code produced by the mapping network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleVector(pub Vec<f64>);

/// One style vector per style slot of the synthesis network (W+).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleStack {
    pub layers: Vec<StyleVector>,
}

macro_rules! dense_vector {
    ($ty:ident) => {
        impl $ty {
            pub fn new(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }
    };
}

dense_vector!(NoiseVector);
dense_vector!(StyleVector);

impl StyleStack {
    pub fn new(layers: Vec<StyleVector>) -> Self {
        Self { layers }
    }

    pub fn zeros(num_layers: usize, w_dim: usize) -> Self {
        Self {
            layers: (0..num_layers).map(|_| StyleVector::zeros(w_dim)).collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn w_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.len())
    }

    pub fn check_shape(&self, num_layers: usize, w_dim: usize) -> Result<()> {
        if self.layers.len() != num_layers {
            return Err(contract(format!(
                "style stack has {} layers, generator expects {num_layers}",
                self.layers.len()
            )));
        }
        if let Some((i, l)) = self.layers.iter().enumerate().find(|(_, l)| l.len() != w_dim) {
            return Err(contract(format!(
                "style layer {i} has length {}, expected {w_dim}",
                l.len()
            )));
        }
        Ok(())
    }

    /// Flat `(L, w_dim)` row-major copy.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.0.iter().copied()).collect()
    }

    /// Element-wise sum over layers: the gradient of a broadcast `w` given the
    /// gradient of its stack.
    pub fn layer_sum(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.w_dim()];
        for l in &self.layers {
            acc.iter_mut().zip(&l.0).for_each(|(a, v)| *a += v);
        }
        acc
    }

    pub fn from_flat(flat: &[f64], num_layers: usize, w_dim: usize) -> Self {
        assert_eq!(flat.len(), num_layers * w_dim);
        Self {
            layers: flat.chunks(w_dim).map(|c| StyleVector(c.to_vec())).collect(),
        }
    }
}

/// An RGB image with values nominally in `[-1, 1]`, stored `(3, H, W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != Self::CHANNELS * height * width {
            return Err(contract(format!(
                "image buffer has {} values, expected 3x{height}x{width}",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; Self::CHANNELS * height * width],
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn clamped(&self) -> ImageTensor {
        ImageTensor {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
        }
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.pixels[(c * self.height + y) * self.width + x]
    }

    /// Interleaved 8-bit RGB. `[-1, 1]` maps onto `[0, 255]`, ties round to even.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let plane = self.height * self.width;
        let mut out = Vec::with_capacity(3 * plane);
        for p in 0..plane {
            for c in 0..3 {
                out.push(to_u8(self.pixels[c * plane + p]));
            }
        }
        out
    }

    /// Like [`ImageTensor::to_rgb8`] with an opaque alpha channel.
    pub fn to_rgba8(&self) -> Vec<u8> {
        self.to_rgb8()
            .chunks(3)
            .flat_map(|px| [px[0], px[1], px[2], 255])
            .collect()
    }

    /// Inverse of the 8-bit mapping: `v / 255 * 2 - 1`.
    pub fn from_rgb8(height: usize, width: usize, rgb: &[u8]) -> Result<Self> {
        let plane = height * width;
        if rgb.len() != 3 * plane {
            return Err(contract(format!(
                "rgb buffer has {} bytes, expected {}",
                rgb.len(),
                3 * plane
            )));
        }
        let mut pixels = vec![0.0; 3 * plane];
        for p in 0..plane {
            for c in 0..3 {
                pixels[c * plane + p] = rgb[3 * p + c] as f64 / 255.0 * 2.0 - 1.0;
            }
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }
}

fn to_u8(v: f64) -> u8 {
    let scaled = (v.clamp(-1.0, 1.0) + 1.0) * 0.5 * 255.0;
    scaled.round_ties_even().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb8_mapping_endpoints_and_ties() {
        let img = ImageTensor::new(1, 3, vec![-1.0, 1.0, 0.0, -1.0, 1.0, 0.0, 2.0, -3.0, 0.0]).unwrap();
        let rgb = img.to_rgb8();
        // pixel 0: (-1, -1, 2) ; pixel 2: (0, 0, 0) -> 127.5 rounds to even 128
        assert_eq!(&rgb[0..3], &[0, 0, 255]);
        assert_eq!(&rgb[3..6], &[255, 255, 0]);
        assert_eq!(&rgb[6..9], &[128, 128, 128]);
    }

    #[test]
    fn stack_shape_errors_name_the_layer() {
        let mut s = StyleStack::zeros(3, 4);
        assert!(s.check_shape(3, 4).is_ok());
        assert!(s.check_shape(2, 4).is_err());
        s.layers[1] = StyleVector::zeros(5);
        let err = s.check_shape(3, 4).unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
    }
}
