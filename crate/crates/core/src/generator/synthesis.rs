//! Style-modulated synthesis network with hand-written reverse pass.
//!
//! Each convolution scales its input channels by `s = A(w) + b` (the affine
//! bias starts at 1, and `A` carries the runtime gain `style_gain / sqrt(w_dim)`), convolves with a shared weight, and demodulates every
//! output channel by `(sum_i s_i^2 |W_oi|^2 + eps)^-1/2`. This is the
//! non-fused form of weight demodulation; it lets a batch share one GEMM.

use super::config::ConvSpec;
use super::params::{GeneratorParams, ParamGrads};
use crate::kernels::{col2im, gemm, im2col, lrelu, lrelu_grad, upsample2, upsample2_backward, ConvGeom, LRELU_GAIN};

const DEMOD_EPS: f64 = 1e-8;

struct ConvCache {
    /// Input after upsampling, before modulation. `(B, cin, h, w)`.
    x: Vec<f64>,
    /// Modulation scales, `(B, cin)`.
    s: Vec<f64>,
    col: Vec<f64>,
    y0: Vec<f64>,
    /// Demodulation factors, `(B, cout)`.
    d: Vec<f64>,
    pre: Vec<f64>,
}

struct RgbCache {
    x: Vec<f64>,
    s: Vec<f64>,
    out: Vec<f64>,
}

pub(crate) struct SynthesisTape {
    batch: usize,
    styles: Vec<f64>,
    convs: Vec<ConvCache>,
    rgb: RgbCache,
}

/// `s[b, i] = gain * A[i, :] . w[b, slot, :] + bias[i]`.
fn affine(params: &GeneratorParams, prefix: &str, styles: &[f64], batch: usize, slot: usize) -> Vec<f64> {
    let cfg = params.config();
    let (w_dim, slots) = (cfg.w_dim, cfg.num_style_slots());
    let a = params.data(&format!("{prefix}.affine.weight"));
    let bias = params.data(&format!("{prefix}.affine.bias"));
    let cin = bias.len();
    let gain = cfg.style_gain / (w_dim as f64).sqrt();
    let mut s = vec![0.0; batch * cin];
    for b in 0..batch {
        let w = &styles[(b * slots + slot) * w_dim..(b * slots + slot + 1) * w_dim];
        for i in 0..cin {
            let row = &a[i * w_dim..(i + 1) * w_dim];
            s[b * cin + i] = gain * row.iter().zip(w).map(|(p, q)| p * q).sum::<f64>() + bias[i];
        }
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn affine_backward(
    params: &GeneratorParams,
    prefix: &str,
    styles: &[f64],
    batch: usize,
    slot: usize,
    ds: &[f64],
    dstyles: &mut [f64],
    grads: Option<&mut ParamGrads>,
) {
    let cfg = params.config();
    let (w_dim, slots) = (cfg.w_dim, cfg.num_style_slots());
    let wn = format!("{prefix}.affine.weight");
    let a = params.data(&wn);
    let cin = ds.len() / batch;
    let gain = cfg.style_gain / (w_dim as f64).sqrt();
    for b in 0..batch {
        let off = (b * slots + slot) * w_dim;
        let dw = &mut dstyles[off..off + w_dim];
        for i in 0..cin {
            let g = gain * ds[b * cin + i];
            let row = &a[i * w_dim..(i + 1) * w_dim];
            dw.iter_mut().zip(row).for_each(|(d, p)| *d += g * p);
        }
    }
    if let Some(grads) = grads {
        let ga = grads.slot(&wn);
        for b in 0..batch {
            let w = &styles[(b * slots + slot) * w_dim..(b * slots + slot + 1) * w_dim];
            for i in 0..cin {
                let g = gain * ds[b * cin + i];
                ga[i * w_dim..(i + 1) * w_dim]
                    .iter_mut()
                    .zip(w)
                    .for_each(|(d, q)| *d += g * q);
            }
        }
        let gb = grads.slot(&format!("{prefix}.affine.bias"));
        for b in 0..batch {
            gb.iter_mut().zip(&ds[b * cin..(b + 1) * cin]).for_each(|(d, v)| *d += v);
        }
    }
}

/// Per (out, in) sum of squared 3x3 taps.
fn weight_sq(wt: &[f64], cout: usize, cin: usize) -> Vec<f64> {
    (0..cout * cin)
        .map(|oi| wt[oi * 9..oi * 9 + 9].iter().map(|v| v * v).sum())
        .collect()
}

fn conv_forward(
    params: &GeneratorParams,
    spec: &ConvSpec,
    slot: usize,
    styles: &[f64],
    batch: usize,
    input: Vec<f64>,
) -> (Vec<f64>, ConvCache) {
    let slope = params.config().lrelu_slope;
    let (cin, cout, res) = (spec.cin, spec.cout, spec.res);
    let hw = res * res;
    let x = if spec.upsample {
        let half = res / 2;
        let mut up = Vec::with_capacity(batch * cin * hw);
        for b in 0..batch {
            up.extend(upsample2(&input[b * cin * half * half..(b + 1) * cin * half * half], cin, half, half));
        }
        up
    } else {
        input
    };
    let s = affine(params, &spec.name, styles, batch, slot);
    let wt = params.data(&format!("{}.weight", spec.name));
    let bias = params.data(&format!("{}.bias", spec.name));
    let wsq = weight_sq(wt, cout, cin);
    let geom = ConvGeom { cin, h: res, w: res, stride: 1 };
    let col_len = geom.col_rows() * hw;
    let mut col = vec![0.0; batch * col_len];
    let mut y0 = vec![0.0; batch * cout * hw];
    let mut d = vec![0.0; batch * cout];
    let mut pre = vec![0.0; batch * cout * hw];
    let mut out = vec![0.0; batch * cout * hw];
    let mut xm = vec![0.0; cin * hw];
    for b in 0..batch {
        let sb = &s[b * cin..(b + 1) * cin];
        let xb = &x[b * cin * hw..(b + 1) * cin * hw];
        for i in 0..cin {
            for p in 0..hw {
                xm[i * hw + p] = xb[i * hw + p] * sb[i];
            }
        }
        let colb = &mut col[b * col_len..(b + 1) * col_len];
        im2col(&xm, geom, colb);
        let yb = &mut y0[b * cout * hw..(b + 1) * cout * hw];
        gemm(cout, cin * 9, hw, 1.0, wt, false, colb, false, 0.0, yb);
        for o in 0..cout {
            let q: f64 = (0..cin).map(|i| sb[i] * sb[i] * wsq[o * cin + i]).sum::<f64>() + DEMOD_EPS;
            let dbo = 1.0 / q.sqrt();
            d[b * cout + o] = dbo;
            for p in 0..hw {
                let idx = (b * cout + o) * hw + p;
                let v = yb[o * hw + p] * dbo + bias[o];
                pre[idx] = v;
                out[idx] = lrelu(v, slope) * LRELU_GAIN;
            }
        }
    }
    let cache = ConvCache { x, s, col, y0, d, pre };
    (out, cache)
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    params: &GeneratorParams,
    spec: &ConvSpec,
    slot: usize,
    styles: &[f64],
    batch: usize,
    cache: &ConvCache,
    dout: &[f64],
    dstyles: &mut [f64],
    mut grads: Option<&mut ParamGrads>,
) -> Vec<f64> {
    let slope = params.config().lrelu_slope;
    let (cin, cout, res) = (spec.cin, spec.cout, spec.res);
    let hw = res * res;
    let wn = format!("{}.weight", spec.name);
    let wt = params.data(&wn);
    let wsq = weight_sq(wt, cout, cin);
    let geom = ConvGeom { cin, h: res, w: res, stride: 1 };
    let col_len = geom.col_rows() * hw;

    let mut dbias = vec![0.0; cout];
    let mut dwt = vec![0.0; cout * cin * 9];
    let mut dwsq = vec![0.0; cout * cin];
    let mut ds = vec![0.0; batch * cin];
    let mut dx = vec![0.0; batch * cin * hw];
    let mut dy0 = vec![0.0; cout * hw];
    let mut dcol = vec![0.0; col_len];
    for b in 0..batch {
        let sb = &cache.s[b * cin..(b + 1) * cin];
        let mut dq = vec![0.0; cout];
        for o in 0..cout {
            let dbo = cache.d[b * cout + o];
            let mut dd = 0.0;
            for p in 0..hw {
                let idx = (b * cout + o) * hw + p;
                let dpre = dout[idx] * LRELU_GAIN * lrelu_grad(cache.pre[idx], slope);
                dbias[o] += dpre;
                dy0[o * hw + p] = dpre * dbo;
                dd += dpre * cache.y0[idx];
            }
            dq[o] = -0.5 * dbo * dbo * dbo * dd;
        }
        for o in 0..cout {
            for i in 0..cin {
                ds[b * cin + i] += dq[o] * 2.0 * sb[i] * wsq[o * cin + i];
                dwsq[o * cin + i] += dq[o] * sb[i] * sb[i];
            }
        }
        let colb = &cache.col[b * col_len..(b + 1) * col_len];
        if grads.is_some() {
            gemm(cout, hw, cin * 9, 1.0, &dy0, false, colb, true, 1.0, &mut dwt);
        }
        gemm(cin * 9, cout, hw, 1.0, wt, true, &dy0, false, 0.0, &mut dcol);
        let mut dxm = vec![0.0; cin * hw];
        col2im(&dcol, geom, &mut dxm);
        let xb = &cache.x[b * cin * hw..(b + 1) * cin * hw];
        let dxb = &mut dx[b * cin * hw..(b + 1) * cin * hw];
        for i in 0..cin {
            let mut acc = 0.0;
            for p in 0..hw {
                acc += dxm[i * hw + p] * xb[i * hw + p];
                dxb[i * hw + p] = dxm[i * hw + p] * sb[i];
            }
            ds[b * cin + i] += acc;
        }
    }
    if let Some(g) = grads.as_deref_mut() {
        for oi in 0..cout * cin {
            for k in 0..9 {
                dwt[oi * 9 + k] += 2.0 * wt[oi * 9 + k] * dwsq[oi];
            }
        }
        g.slot(&wn).iter_mut().zip(&dwt).for_each(|(a, v)| *a += v);
        g.slot(&format!("{}.bias", spec.name))
            .iter_mut()
            .zip(&dbias)
            .for_each(|(a, v)| *a += v);
    }
    affine_backward(params, &spec.name, styles, batch, slot, &ds, dstyles, grads);
    if spec.upsample {
        let half = res / 2;
        let mut small = Vec::with_capacity(batch * cin * half * half);
        for b in 0..batch {
            small.extend(upsample2_backward(&dx[b * cin * hw..(b + 1) * cin * hw], cin, half, half));
        }
        small
    } else {
        dx
    }
}

const RGB: &str = "synthesis.torgb";

/// Run a batch of flattened `(B, L, w_dim)` style stacks. Returns images
/// `(B, 3, R, R)` and the tape needed by [`backward`].
pub(crate) fn forward(params: &GeneratorParams, styles: &[f64], batch: usize) -> (Vec<f64>, SynthesisTape) {
    let cfg = params.config();
    let layers = cfg.conv_layers();
    let c4 = cfg.channels_at(4);
    let cst = params.data("synthesis.const");
    let mut x = Vec::with_capacity(batch * c4 * 16);
    for _ in 0..batch {
        x.extend_from_slice(cst);
    }
    let mut convs = Vec::with_capacity(layers.len());
    for (slot, spec) in layers.iter().enumerate() {
        let (out, cache) = conv_forward(params, spec, slot, styles, batch, x);
        convs.push(cache);
        x = out;
    }
    let res = cfg.resolution;
    let hw = res * res;
    let c = cfg.channels_at(res);
    let slot = cfg.num_style_slots() - 1;
    let s = affine(params, RGB, styles, batch, slot);
    let wt = params.data(&format!("{RGB}.weight"));
    let bias = params.data(&format!("{RGB}.bias"));
    let gain = 1.0 / (c as f64).sqrt();
    let mut out = vec![0.0; batch * 3 * hw];
    for b in 0..batch {
        for k in 0..3 {
            let dst = &mut out[(b * 3 + k) * hw..(b * 3 + k + 1) * hw];
            dst.fill(bias[k]);
            for i in 0..c {
                let coef = gain * wt[k * c + i] * s[b * c + i];
                let src = &x[(b * c + i) * hw..(b * c + i + 1) * hw];
                dst.iter_mut().zip(src).for_each(|(d, v)| *d += coef * v);
            }
            dst.iter_mut().for_each(|v| *v = v.tanh());
        }
    }
    let tape = SynthesisTape {
        batch,
        styles: styles.to_vec(),
        convs,
        rgb: RgbCache { x, s, out: out.clone() },
    };
    (out, tape)
}

/// Reverse pass. Returns the gradient w.r.t. the flattened style stacks and,
/// when `grads` is given, accumulates synthesis parameter gradients into it.
pub(crate) fn backward(
    params: &GeneratorParams,
    tape: &SynthesisTape,
    dimg: &[f64],
    mut grads: Option<&mut ParamGrads>,
) -> Vec<f64> {
    let cfg = params.config();
    let batch = tape.batch;
    let res = cfg.resolution;
    let hw = res * res;
    let c = cfg.channels_at(res);
    let slot = cfg.num_style_slots() - 1;
    let gain = 1.0 / (c as f64).sqrt();
    let wn = format!("{RGB}.weight");
    let wt = params.data(&wn);
    let mut dstyles = vec![0.0; tape.styles.len()];

    let dpre: Vec<f64> = dimg
        .iter()
        .zip(&tape.rgb.out)
        .map(|(d, y)| d * (1.0 - y * y))
        .collect();
    let mut dx = vec![0.0; batch * c * hw];
    let mut ds = vec![0.0; batch * c];
    let mut dwt = vec![0.0; 3 * c];
    let mut dbias = [0.0; 3];
    for b in 0..batch {
        for k in 0..3 {
            let dk = &dpre[(b * 3 + k) * hw..(b * 3 + k + 1) * hw];
            dbias[k] += dk.iter().sum::<f64>();
            for i in 0..c {
                let xi = &tape.rgb.x[(b * c + i) * hw..(b * c + i + 1) * hw];
                let dot: f64 = dk.iter().zip(xi).map(|(p, q)| p * q).sum();
                let si = tape.rgb.s[b * c + i];
                dwt[k * c + i] += gain * si * dot;
                ds[b * c + i] += gain * wt[k * c + i] * dot;
                let coef = gain * wt[k * c + i] * si;
                dx[(b * c + i) * hw..(b * c + i + 1) * hw]
                    .iter_mut()
                    .zip(dk)
                    .for_each(|(d, v)| *d += coef * v);
            }
        }
    }
    if let Some(g) = grads.as_deref_mut() {
        g.slot(&wn).iter_mut().zip(&dwt).for_each(|(a, v)| *a += v);
        g.slot(&format!("{RGB}.bias"))
            .iter_mut()
            .zip(&dbias)
            .for_each(|(a, v)| *a += v);
    }
    affine_backward(params, RGB, &tape.styles, batch, slot, &ds, &mut dstyles, grads.as_deref_mut());

    let layers = cfg.conv_layers();
    for (slot, spec) in layers.iter().enumerate().rev() {
        dx = conv_backward(
            params,
            spec,
            slot,
            &tape.styles,
            batch,
            &tape.convs[slot],
            &dx,
            &mut dstyles,
            grads.as_deref_mut(),
        );
    }
    if let Some(g) = grads {
        let gc = g.slot("synthesis.const");
        let n = gc.len();
        for b in 0..batch {
            gc.iter_mut().zip(&dx[b * n..(b + 1) * n]).for_each(|(a, v)| *a += v);
        }
    }
    dstyles
}
