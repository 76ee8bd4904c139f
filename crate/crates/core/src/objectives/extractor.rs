use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{contract, Result};
use crate::generator::ImageTensor;
use crate::kernels::{col2im, gemm, im2col, lrelu, lrelu_grad, ConvGeom};

const SLOPE: f64 = 0.2;
const NORM_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stage {
    cin: usize,
    cout: usize,
    weight: Vec<f64>,
}

/// Frozen multi-scale feature pyramid used by the perceptual distance.
///
/// Each stage is a stride-2 3x3 convolution followed by leaky ReLU. Distances
/// are taken between channel-unit-normalized features at every location.
/// Nothing in this crate ever writes to the weights after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    id: String,
    seed: u64,
    resolution: usize,
    stages: Vec<Stage>,
}

/// Per-stage activations of one image, kept for the reverse pass.
pub struct Features {
    /// Pre-activations per stage, `(c, h, w)`.
    pre: Vec<Vec<f64>>,
    /// Unit-normalized activations and the per-location norms.
    normed: Vec<Vec<f64>>,
    norms: Vec<Vec<f64>>,
}

pub const DEFAULT_STAGE_CHANNELS: [usize; 3] = [16, 32, 64];

impl FeatureExtractor {
    /// Seeded random pyramid with the default three stages.
    pub fn seeded(seed: u64, resolution: usize) -> Self {
        Self::with_channels(seed, resolution, &DEFAULT_STAGE_CHANNELS)
    }

    pub fn with_channels(seed: u64, resolution: usize, channels: &[usize]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_fea7);
        let mut cin = 3;
        let stages = channels
            .iter()
            .map(|&cout| {
                let gain = 1.0 / ((cin * 9) as f64).sqrt();
                let weight = (0..cout * cin * 9)
                    .map(|_| {
                        let v: f64 = StandardNormal.sample(&mut rng);
                        v * gain
                    })
                    .collect();
                let st = Stage { cin, cout, weight };
                cin = cout;
                st
            })
            .collect();
        Self {
            id: format!("seeded-pyramid-v1:{}", channels.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("-")),
            seed,
            resolution,
            stages,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Hash of all frozen weights; equal fingerprints mean bit-identical weights.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.stages {
            for v in &s.weight {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn check_input(&self, img: &ImageTensor) -> Result<()> {
        if img.height != self.resolution || img.width != self.resolution {
            return Err(contract(format!(
                "image is {}x{}, extractor expects {}x{}",
                img.height, img.width, self.resolution, self.resolution
            )));
        }
        Ok(())
    }

    pub fn features(&self, img: &ImageTensor) -> Result<Features> {
        self.check_input(img)?;
        let mut x = img.pixels.clone();
        let (mut h, mut w) = (img.height, img.width);
        let mut f = Features {
            pre: vec![],
            normed: vec![],
            norms: vec![],
        };
        for st in &self.stages {
            let g = ConvGeom { cin: st.cin, h, w, stride: 2 };
            let n = g.out_h() * g.out_w();
            let mut col = vec![0.0; g.col_rows() * n];
            im2col(&x, g, &mut col);
            let mut pre = vec![0.0; st.cout * n];
            gemm(st.cout, st.cin * 9, n, 1.0, &st.weight, false, &col, false, 0.0, &mut pre);
            let act: Vec<f64> = pre.iter().map(|v| lrelu(*v, SLOPE)).collect();
            let mut norms = vec![0.0; n];
            for c in 0..st.cout {
                for p in 0..n {
                    norms[p] += act[c * n + p] * act[c * n + p];
                }
            }
            norms.iter_mut().for_each(|v| *v = (*v + NORM_EPS).sqrt());
            let mut normed = act.clone();
            for c in 0..st.cout {
                for p in 0..n {
                    normed[c * n + p] /= norms[p];
                }
            }
            h = g.out_h();
            w = g.out_w();
            x = act;
            f.pre.push(pre);
            f.normed.push(normed);
            f.norms.push(norms);
        }
        Ok(f)
    }

    /// Perceptual distance between precomputed features.
    pub fn distance(&self, a: &Features, b: &Features) -> f64 {
        let s = self.stages.len() as f64;
        (0..self.stages.len())
            .map(|k| {
                let n = a.norms[k].len();
                let sq: f64 = a.normed[k].iter().zip(&b.normed[k]).map(|(p, q)| (p - q) * (p - q)).sum();
                sq / n as f64
            })
            .sum::<f64>()
            / s
    }

    /// Distance and its gradient w.r.t. the image that produced `a`.
    pub fn distance_grad(&self, a: &Features, b: &Features) -> (f64, Vec<f64>) {
        let value = self.distance(a, b);
        let s = self.stages.len() as f64;
        let mut dx_next: Option<Vec<f64>> = None;
        let mut h_w = Vec::new();
        {
            let (mut h, mut w) = (self.resolution, self.resolution);
            for _ in &self.stages {
                h_w.push((h, w));
                h = (h - 1) / 2 + 1;
                w = (w - 1) / 2 + 1;
            }
        }
        for (k, st) in self.stages.iter().enumerate().rev() {
            let n = a.norms[k].len();
            let scale = 2.0 / (s * n as f64);
            // d distance / d normed
            let mut dnorm: Vec<f64> = a.normed[k]
                .iter()
                .zip(&b.normed[k])
                .map(|(p, q)| scale * (p - q))
                .collect();
            // n = f / r  =>  df = (dn - n (n . dn)) / r
            let mut dot = vec![0.0; n];
            for c in 0..st.cout {
                let span = c * n..(c + 1) * n;
                for ((d, x), y) in dot.iter_mut().zip(&a.normed[k][span.clone()]).zip(&dnorm[span]) {
                    *d += x * y;
                }
            }
            for c in 0..st.cout {
                for (p, (&d, &r)) in dot.iter().zip(&a.norms[k]).enumerate() {
                    let i = c * n + p;
                    dnorm[i] = (dnorm[i] - a.normed[k][i] * d) / r;
                }
            }
            let mut dact = dnorm;
            if let Some(next) = dx_next.take() {
                dact.iter_mut().zip(&next).for_each(|(d, v)| *d += v);
            }
            let dpre: Vec<f64> = dact
                .iter()
                .zip(&a.pre[k])
                .map(|(d, p)| d * lrelu_grad(*p, SLOPE))
                .collect();
            let (h, w) = h_w[k];
            let g = ConvGeom { cin: st.cin, h, w, stride: 2 };
            let mut dcol = vec![0.0; g.col_rows() * n];
            gemm(st.cin * 9, st.cout, n, 1.0, &st.weight, true, &dpre, false, 0.0, &mut dcol);
            let mut dx = vec![0.0; st.cin * h * w];
            col2im(&dcol, g, &mut dx);
            dx_next = Some(dx);
        }
        (value, dx_next.unwrap_or_default())
    }
}
