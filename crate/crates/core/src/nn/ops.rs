//! Batched layer kernels. Activations use channel-major `[C, N, H, W]` layout so a
//! whole mini-batch goes through a single matrix product per convolution.

use super::real::{gemm, Layout, Real};

/// Geometry of a 3x3, stride-1, zero-pad-1 convolution over a batch.
#[derive(Clone, Copy, Debug)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub batch: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvShape {
    pub fn k(&self) -> usize {
        self.c_in * 9
    }

    pub fn cols(&self) -> usize {
        self.batch * self.h * self.w
    }
}

/// Unfold `[C, N, H, W]` into `[C*9, N*H*W]`.
pub fn im2col<T: Real>(input: &[T], s: ConvShape, cols: &mut Vec<T>) {
    let (h, w) = (s.h, s.w);
    let plane = h * w;
    let ncols = s.cols();
    cols.resize(s.k() * ncols, T::zero());
    for ci in 0..s.c_in {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (ci * 3 + ky) * 3 + kx;
                let dst_row = &mut cols[row * ncols..(row + 1) * ncols];
                for ni in 0..s.batch {
                    let src = &input[(ci * s.batch + ni) * plane..(ci * s.batch + ni + 1) * plane];
                    let dst = &mut dst_row[ni * plane..(ni + 1) * plane];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        let drow = &mut dst[y * w..(y + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            drow.fill(T::zero());
                            continue;
                        }
                        let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                        match kx {
                            0 => {
                                drow[0] = T::zero();
                                drow[1..].copy_from_slice(&srow[..w - 1]);
                            }
                            1 => drow.copy_from_slice(srow),
                            _ => {
                                drow[..w - 1].copy_from_slice(&srow[1..]);
                                drow[w - 1] = T::zero();
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Fold `[C*9, N*H*W]` gradients back onto `[C, N, H, W]` (accumulating).
pub fn col2im<T: Real>(cols: &[T], s: ConvShape, out: &mut [T]) {
    let (h, w) = (s.h, s.w);
    let plane = h * w;
    let ncols = s.cols();
    for ci in 0..s.c_in {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (ci * 3 + ky) * 3 + kx;
                let src_row = &cols[row * ncols..(row + 1) * ncols];
                for ni in 0..s.batch {
                    let src = &src_row[ni * plane..(ni + 1) * plane];
                    let dst = &mut out[(ci * s.batch + ni) * plane..(ci * s.batch + ni + 1) * plane];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let drow = &mut dst[sy as usize * w..(sy as usize + 1) * w];
                        let srow = &src[y * w..(y + 1) * w];
                        match kx {
                            0 => drow[..w - 1].iter_mut().zip(&srow[1..]).for_each(|(d, &v)| *d += v),
                            1 => drow.iter_mut().zip(srow).for_each(|(d, &v)| *d += v),
                            _ => drow[1..].iter_mut().zip(&srow[..w - 1]).for_each(|(d, &v)| *d += v),
                        }
                    }
                }
            }
        }
    }
}

/// `out[Cout, N*H*W] = weight[Cout, C*9] * cols + bias`.
pub fn conv_forward<T: Real>(cols: &[T], weight: &[T], bias: &[T], s: ConvShape, out: &mut Vec<T>) {
    let ncols = s.cols();
    out.resize(s.c_out * ncols, T::zero());
    for (co, row) in out.chunks_exact_mut(ncols).enumerate() {
        row.fill(bias[co]);
    }
    gemm(
        s.c_out,
        s.k(),
        ncols,
        weight,
        Layout::row_major(s.k()),
        cols,
        Layout::row_major(ncols),
        T::one(),
        out,
        Layout::row_major(ncols),
    );
}

/// Accumulates weight/bias gradients; returns column gradients when `want_cols`.
pub fn conv_backward<T: Real>(
    cols: &[T],
    weight: &[T],
    grad_out: &[T],
    s: ConvShape,
    grad_w: &mut [T],
    grad_b: &mut [T],
    grad_cols: Option<&mut Vec<T>>,
) {
    let ncols = s.cols();
    let k = s.k();
    for (co, row) in grad_out.chunks_exact(ncols).enumerate() {
        grad_b[co] += row.iter().copied().sum::<T>();
    }
    // dW[Cout, K] += dOut[Cout, ncols] * cols^T
    gemm(
        s.c_out,
        ncols,
        k,
        grad_out,
        Layout::row_major(ncols),
        cols,
        Layout::transposed(ncols),
        T::one(),
        grad_w,
        Layout::row_major(k),
    );
    if let Some(gc) = grad_cols {
        gc.resize(k * ncols, T::zero());
        // dcols[K, ncols] = W^T * dOut
        gemm(
            k,
            s.c_out,
            ncols,
            weight,
            Layout::transposed(k),
            grad_out,
            Layout::row_major(ncols),
            T::zero(),
            gc,
            Layout::row_major(ncols),
        );
    }
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zero gradients where the post-activation output is not positive.
pub fn relu_backward<T: Real>(activated: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x2 max pool over every `[H, W]` plane; records which of the four inputs won.
pub fn maxpool2_forward<T: Real>(input: &[T], planes: usize, h: usize, w: usize, out: &mut Vec<T>, arg: &mut Vec<u8>) {
    let (oh, ow) = (h / 2, w / 2);
    out.resize(planes * oh * ow, T::zero());
    arg.resize(planes * oh * ow, 0);
    for p in 0..planes {
        let src = &input[p * h * w..(p + 1) * h * w];
        let base = p * oh * ow;
        for y in 0..oh {
            for x in 0..ow {
                let i0 = (2 * y) * w + 2 * x;
                let cand = [src[i0], src[i0 + 1], src[i0 + w], src[i0 + w + 1]];
                let mut best = 0u8;
                for (j, &v) in cand.iter().enumerate().skip(1) {
                    if v > cand[best as usize] {
                        best = j as u8;
                    }
                }
                out[base + y * ow + x] = cand[best as usize];
                arg[base + y * ow + x] = best;
            }
        }
    }
}

pub fn maxpool2_backward<T: Real>(grad_out: &[T], arg: &[u8], planes: usize, h: usize, w: usize, grad_in: &mut Vec<T>) {
    let (oh, ow) = (h / 2, w / 2);
    grad_in.clear();
    grad_in.resize(planes * h * w, T::zero());
    for p in 0..planes {
        let dst = &mut grad_in[p * h * w..(p + 1) * h * w];
        let base = p * oh * ow;
        for y in 0..oh {
            for x in 0..ow {
                let a = arg[base + y * ow + x] as usize;
                let idx = (2 * y + a / 2) * w + 2 * x + a % 2;
                dst[idx] += grad_out[base + y * ow + x];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(input: &[f64], weight: &[f64], bias: &[f64], s: ConvShape) -> Vec<f64> {
        let mut out = vec![0.0; s.c_out * s.batch * s.h * s.w];
        for co in 0..s.c_out {
            for n in 0..s.batch {
                for y in 0..s.h {
                    for x in 0..s.w {
                        let mut acc = bias[co];
                        for ci in 0..s.c_in {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let sy = y as isize + ky as isize - 1;
                                    let sx = x as isize + kx as isize - 1;
                                    if sy < 0 || sx < 0 || sy >= s.h as isize || sx >= s.w as isize {
                                        continue;
                                    }
                                    let iv = input[((ci * s.batch + n) * s.h + sy as usize) * s.w + sx as usize];
                                    acc += iv * weight[((co * s.c_in + ci) * 3 + ky) * 3 + kx];
                                }
                            }
                        }
                        out[((co * s.batch + n) * s.h + y) * s.w + x] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_sum() {
        let s = ConvShape { c_in: 2, c_out: 3, batch: 2, h: 5, w: 4 };
        let input: Vec<f64> = (0..s.c_in * s.batch * s.h * s.w).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let weight: Vec<f64> = (0..s.c_out * s.k()).map(|i| ((i * 13 % 7) as f64) * 0.1 - 0.3).collect();
        let bias = vec![0.5, -1.0, 2.0];
        let mut cols = Vec::new();
        im2col(&input, s, &mut cols);
        let mut out = Vec::new();
        conv_forward(&cols, &weight, &bias, s, &mut out);
        let want = naive_conv(&input, &weight, &bias, s);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let s = ConvShape { c_in: 2, c_out: 1, batch: 3, h: 4, w: 6 };
        let x: Vec<f64> = (0..s.c_in * s.batch * s.h * s.w).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..s.k() * s.cols()).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut cols = Vec::new();
        im2col(&x, s, &mut cols);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&y, s, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn maxpool_routes_gradient_to_winner() {
        let input = [1.0f64, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 8.0];
        // one plane, 2x4
        let (mut out, mut arg) = (Vec::new(), Vec::new());
        maxpool2_forward(&input, 1, 2, 4, &mut out, &mut arg);
        assert_eq!(out, vec![5.0, 9.0]);
        let mut gin = Vec::new();
        maxpool2_backward(&[1.0, 2.0], &arg, 1, 2, 4, &mut gin);
        assert_eq!(gin, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    }
}
