//! Mapping MLP: normalized z -> hidden leaky-ReLU layers -> linear w.

use super::params::{GeneratorParams, ParamGrads};
use crate::kernels::{lrelu, lrelu_grad, LRELU_GAIN};

const NORM_EPS: f64 = 1e-8;

pub(crate) struct MappingTape {
    z: Vec<f64>,
    inv_rms: f64,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

fn layer_names(i: usize) -> (String, String) {
    (format!("mapping.fc{i}.weight"), format!("mapping.fc{i}.bias"))
}

pub(crate) fn forward(params: &GeneratorParams, z: &[f64]) -> (Vec<f64>, MappingTape) {
    let cfg = params.config();
    let slope = cfg.lrelu_slope;
    let mean_sq = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
    let inv_rms = 1.0 / (mean_sq + NORM_EPS).sqrt();
    let mut h: Vec<f64> = z.iter().map(|v| v * inv_rms).collect();
    let mut inputs = Vec::new();
    let mut pre_all = Vec::new();
    let n_layers = cfg.mapping_hidden_layers + 1;
    for i in 0..n_layers {
        let (wn, bn) = layer_names(i);
        let wt = params.data(&wn);
        let b = params.data(&bn);
        let fan_in = h.len();
        let gain = 1.0 / (fan_in as f64).sqrt();
        let pre: Vec<f64> = b
            .iter()
            .enumerate()
            .map(|(o, bo)| {
                let row = &wt[o * fan_in..(o + 1) * fan_in];
                gain * row.iter().zip(&h).map(|(a, x)| a * x).sum::<f64>() + bo
            })
            .collect();
        let out = if i + 1 < n_layers {
            pre.iter().map(|v| lrelu(*v, slope) * LRELU_GAIN).collect()
        } else {
            pre.clone()
        };
        inputs.push(std::mem::replace(&mut h, out));
        pre_all.push(pre);
    }
    let tape = MappingTape {
        z: z.to_vec(),
        inv_rms,
        inputs,
        pre: pre_all,
    };
    (h, tape)
}

/// Backpropagate `dw` to z. When `grads` is given, mapping parameter
/// gradients are accumulated into it.
pub(crate) fn backward(
    params: &GeneratorParams,
    tape: &MappingTape,
    dw: &[f64],
    mut grads: Option<&mut ParamGrads>,
) -> Vec<f64> {
    let slope = params.config().lrelu_slope;
    let n_layers = tape.pre.len();
    let mut dout = dw.to_vec();
    for i in (0..n_layers).rev() {
        let pre = &tape.pre[i];
        let input = &tape.inputs[i];
        let dpre: Vec<f64> = if i + 1 < n_layers {
            dout.iter()
                .zip(pre)
                .map(|(d, p)| d * LRELU_GAIN * lrelu_grad(*p, slope))
                .collect()
        } else {
            dout
        };
        let (wn, bn) = layer_names(i);
        let wt = params.data(&wn);
        let fan_in = input.len();
        let gain = 1.0 / (fan_in as f64).sqrt();
        if let Some(g) = grads.as_deref_mut() {
            let gw = g.slot(&wn);
            for (o, d) in dpre.iter().enumerate() {
                for (j, x) in input.iter().enumerate() {
                    gw[o * fan_in + j] += gain * d * x;
                }
            }
            let gb = g.slot(&bn);
            gb.iter_mut().zip(&dpre).for_each(|(a, d)| *a += d);
        }
        let mut din = vec![0.0; fan_in];
        for (o, d) in dpre.iter().enumerate() {
            let row = &wt[o * fan_in..(o + 1) * fan_in];
            for (j, a) in row.iter().enumerate() {
                din[j] += gain * a * d;
            }
        }
        dout = din;
    }
    // normalization: zn = z * r, r = (mean z^2 + eps)^-1/2
    let n = tape.z.len() as f64;
    let r = tape.inv_rms;
    let dot: f64 = dout.iter().zip(&tape.z).map(|(d, z)| d * z).sum();
    dout.iter()
        .zip(&tape.z)
        .map(|(d, z)| r * d - r * r * r * z * dot / n)
        .collect()
}
