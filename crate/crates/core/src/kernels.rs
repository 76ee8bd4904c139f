//! Dense kernels shared by the generator and the feature extractor.
//!
//! Everything here works on flat row-major `f64` buffers. Convolutions are
//! 3x3 with zero padding 1 and go through im2col + GEMM.

pub(crate) const LRELU_GAIN: f64 = std::f64::consts::SQRT_2;

/// `c = alpha * op(a) * op(b) + beta * c` where `a` is `m x k`, `b` is `k x n`.
/// `ta`/`tb` select a transposed view of the stored row-major buffer.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: lengths are checked above and strides describe exactly the
    // row-major (or transposed) layout of each buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a 3x3, padding-1 convolution over one image.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h - 1) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w - 1) / self.stride + 1
    }

    pub fn col_rows(&self) -> usize {
        self.cin * 9
    }

    pub fn col_cols(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

pub(crate) fn im2col(x: &[f64], g: ConvGeom, col: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let ncols = g.col_cols();
    debug_assert_eq!(x.len(), g.cin * g.h * g.w);
    debug_assert_eq!(col.len(), g.col_rows() * ncols);
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * ncols;
                let dst = &mut col[row..row + ncols];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - 1;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - 1;
                        *v = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]; accumulates into `dx`.
pub(crate) fn col2im(col: &[f64], g: ConvGeom, dx: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let ncols = oh * ow;
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * ncols;
                let src = &col[row..row + ncols];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - 1;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - 1;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Nearest-neighbour 2x upsampling of a `(c, h, w)` block.
pub(crate) fn upsample2(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * h2 * w2];
    for ch in 0..c {
        for y in 0..h2 {
            let src = &x[ch * h * w + (y / 2) * w..ch * h * w + (y / 2 + 1) * w];
            let dst = &mut out[ch * h2 * w2 + y * w2..ch * h2 * w2 + (y + 1) * w2];
            for (xo, v) in dst.iter_mut().enumerate() {
                *v = src[xo / 2];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`]: sums each 2x2 cell. `h`, `w` are the small sizes.
pub(crate) fn upsample2_backward(dy: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                out[ch * h * w + (y / 2) * w + x / 2] += dy[ch * h2 * w2 + y * w2 + x];
            }
        }
    }
    out
}

#[inline]
pub(crate) fn lrelu(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v * slope
    }
}

#[inline]
pub(crate) fn lrelu_grad(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        slope
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], wt: &[f64], cout: usize, g: ConvGeom) -> Vec<f64> {
        let (oh, ow) = (g.out_h(), g.out_w());
        let mut y = vec![0.0; cout * oh * ow];
        for o in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..g.cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * g.stride + ky) as isize - 1;
                                let ix = (ox * g.stride + kx) as isize - 1;
                                if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                    continue;
                                }
                                acc += wt[((o * g.cin + c) * 3 + ky) * 3 + kx]
                                    * x[(c * g.h + iy as usize) * g.w + ix as usize];
                            }
                        }
                    }
                    y[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn im2col_gemm_matches_direct_convolution() {
        for stride in [1, 2] {
            let g = ConvGeom { cin: 3, h: 6, w: 6, stride };
            let cout = 4;
            let x: Vec<f64> = (0..g.cin * 36).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
            let wt: Vec<f64> = (0..cout * g.cin * 9).map(|i| ((i * 13) % 7) as f64 * 0.1 - 0.3).collect();
            let mut col = vec![0.0; g.col_rows() * g.col_cols()];
            im2col(&x, g, &mut col);
            let mut y = vec![0.0; cout * g.col_cols()];
            gemm(cout, g.col_rows(), g.col_cols(), 1.0, &wt, false, &col, false, 0.0, &mut y);
            let expect = naive_conv(&x, &wt, cout, g);
            for (a, b) in y.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom { cin: 2, h: 5, w: 4, stride: 2 };
        let x: Vec<f64> = (0..g.cin * g.h * g.w).map(|i| (i as f64 * 0.7).sin()).collect();
        let c: Vec<f64> = (0..g.col_rows() * g.col_cols()).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut col = vec![0.0; c.len()];
        im2col(&x, g, &mut col);
        let lhs: f64 = col.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut dx = vec![0.0; x.len()];
        col2im(&c, g, &mut dx);
        let rhs: f64 = dx.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn transposed_gemm_views() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, 1.0, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, 1.0, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn upsample_adjoint() {
        let x: Vec<f64> = (0..2 * 3 * 3).map(|i| i as f64).collect();
        let up = upsample2(&x, 2, 3, 3);
        assert_eq!(up.len(), 2 * 36);
        assert_eq!(up[0], 0.0);
        assert_eq!(up[1], 0.0);
        assert_eq!(up[2], 1.0);
        let d: Vec<f64> = (0..up.len()).map(|i| (i % 5) as f64).collect();
        let lhs: f64 = up.iter().zip(&d).map(|(a, b)| a * b).sum();
        let back = upsample2_backward(&d, 2, 3, 3);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}
