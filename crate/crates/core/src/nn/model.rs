//! Two-stream convolutional model shared by the point classifier and the region
//! regressor. Each stream is conv(3->8)+ReLU+pool, conv(8->16)+ReLU+pool; the two
//! 16x8x8 maps are concatenated, fused by conv(32->32)+ReLU, then FC 2048->64->head.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{self, ConvShape};
use super::real::{gemm, Layout, Real};
use crate::error::{Error, Result};

/// Side length of every model input plane.
pub const INPUT_SIDE: usize = 32;
pub const INPUT_PLANE: usize = INPUT_SIDE * INPUT_SIDE;

const C1: usize = 8;
const C2: usize = 16;
const FUSED: usize = 32;
const FEAT_SIDE: usize = INPUT_SIDE / 4;
const FEAT_PLANE: usize = FEAT_SIDE * FEAT_SIDE;
const FLAT: usize = FUSED * FEAT_PLANE;
const HIDDEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Two logits: unpickable / pickable.
    Classification,
    /// One sigmoid score in (0, 1).
    Regression,
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::Classification => 2,
            HeadKind::Regression => 1,
        }
    }
}

// Tensor indices in declaration order; each stream occupies four consecutive slots.
const RGB_CONV1_W: usize = 0;
const DEPTH_CONV1_W: usize = 4;
const FUSION_W: usize = 8;
const FUSION_B: usize = 9;
const FC1_W: usize = 10;
const FC1_B: usize = 11;
const HEAD_W: usize = 12;
const HEAD_B: usize = 13;

/// Name and shape of every parameter tensor, in declaration (and file) order.
pub fn architecture(head: HeadKind) -> Vec<(&'static str, Vec<usize>)> {
    vec![
        ("rgb.conv1.weight", vec![C1, 3, 3, 3]),
        ("rgb.conv1.bias", vec![C1]),
        ("rgb.conv2.weight", vec![C2, C1, 3, 3]),
        ("rgb.conv2.bias", vec![C2]),
        ("depth.conv1.weight", vec![C1, 3, 3, 3]),
        ("depth.conv1.bias", vec![C1]),
        ("depth.conv2.weight", vec![C2, C1, 3, 3]),
        ("depth.conv2.bias", vec![C2]),
        ("fusion.weight", vec![FUSED, 2 * C2, 3, 3]),
        ("fusion.bias", vec![FUSED]),
        ("fc1.weight", vec![HIDDEN, FLAT]),
        ("fc1.bias", vec![HIDDEN]),
        ("head.weight", vec![head.outputs(), HIDDEN]),
        ("head.bias", vec![head.outputs()]),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub head: HeadKind,
    pub seed: u64,
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(head: HeadKind) -> Self {
        let tensors = architecture(head)
            .iter()
            .map(|(_, shape)| vec![T::zero(); shape.iter().product()])
            .collect();
        Self { head, seed: 0, tensors }
    }

    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn init(head: HeadKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = architecture(head)
            .iter()
            .map(|(name, shape)| {
                let len: usize = shape.iter().product();
                if name.ends_with(".bias") {
                    return vec![T::zero(); len];
                }
                let fan_in: usize = shape[1..].iter().product();
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..len).map(|_| T::lit(rng.gen_range(-bound..bound))).collect()
            })
            .collect();
        Self { head, seed, tensors }
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            head: self.head,
            seed: self.seed,
            tensors: self
                .tensors
                .iter()
                .map(|t| t.iter().map(|&v| U::lit(v.as_f64())).collect())
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Vec<Vec<T>> {
        self.tensors.iter().map(|t| vec![T::zero(); t.len()]).collect()
    }
}

/// One model input: three rgb planes and one normalized height plane, each 32x32.
/// The height plane is fed to the depth stream replicated on three channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub rgb: Vec<f32>,
    pub depth: Vec<f32>,
}

impl ModelInput {
    pub fn zeros() -> Self {
        Self {
            rgb: vec![0.0; 3 * INPUT_PLANE],
            depth: vec![0.0; INPUT_PLANE],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rgb.iter().chain(&self.depth).all(|v| v.is_finite())
    }
}

/// Mini-batch in `[C, N, H, W]` layout. The depth stream's three identical
/// channels are stored once.
#[derive(Clone, Debug, Default)]
pub struct InputBatch<T> {
    pub n: usize,
    rgb: Vec<T>,
    depth: Vec<T>,
}

impl<T: Real> InputBatch<T> {
    pub fn new<'a, I>(inputs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ModelInput>,
    {
        let mut batch = Self { n: 0, rgb: Vec::new(), depth: Vec::new() };
        batch.fill(inputs)?;
        Ok(batch)
    }

    /// Refill in place, reusing the allocation.
    pub fn fill<'a, I>(&mut self, inputs: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a ModelInput>,
    {
        let inputs: Vec<&ModelInput> = inputs.into_iter().collect();
        let n = inputs.len();
        self.n = n;
        self.rgb.resize(3 * n * INPUT_PLANE, T::zero());
        self.depth.resize(n * INPUT_PLANE, T::zero());
        for (i, inp) in inputs.iter().enumerate() {
            if inp.rgb.len() != 3 * INPUT_PLANE || inp.depth.len() != INPUT_PLANE {
                return Err(Error::Shape(format!(
                    "model input must be 3x32x32 rgb + 32x32 depth, got {} + {}",
                    inp.rgb.len(),
                    inp.depth.len()
                )));
            }
            if !inp.is_finite() {
                return Err(Error::NonFiniteInput);
            }
            for c in 0..3 {
                let dst = (c * n + i) * INPUT_PLANE;
                for (d, &s) in self.rgb[dst..dst + INPUT_PLANE]
                    .iter_mut()
                    .zip(&inp.rgb[c * INPUT_PLANE..(c + 1) * INPUT_PLANE])
                {
                    *d = T::lit(s as f64);
                }
            }
            for (d, &s) in self.depth[i * INPUT_PLANE..(i + 1) * INPUT_PLANE].iter_mut().zip(&inp.depth) {
                *d = T::lit(s as f64);
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct StreamCache<T> {
    cols1: Vec<T>,
    act1: Vec<T>,
    arg1: Vec<u8>,
    pool1: Vec<T>,
    cols2: Vec<T>,
    act2: Vec<T>,
    arg2: Vec<u8>,
    pool2: Vec<T>,
}

#[derive(Default)]
struct Scratch<T> {
    folded: Vec<T>,
    folded_grad: Vec<T>,
    g_out: Vec<T>,
    g_hidden: Vec<T>,
    g_flat: Vec<T>,
    g_fusion: Vec<T>,
    g_cols: Vec<T>,
    g_fused_in: Vec<T>,
    g_act2: Vec<T>,
    g_pool1: Vec<T>,
    g_act1: Vec<T>,
}

/// Activations kept for the backward pass plus reusable scratch buffers.
/// Reusing one cache across calls avoids re-allocating the large im2col buffers.
#[derive(Default)]
pub struct ForwardCache<T> {
    n: usize,
    rgb: StreamCache<T>,
    depth: StreamCache<T>,
    fused_in: Vec<T>,
    fusion_cols: Vec<T>,
    fusion_act: Vec<T>,
    flat: Vec<T>,
    hidden: Vec<T>,
    /// Logits (classification) or sigmoid scores (regression), `[N, outputs]`.
    pub output: Vec<T>,
    scratch: Scratch<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Fingerprint of every ReLU on/off state and max-pool winner.
    pub fn activation_pattern(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for s in [&self.rgb, &self.depth] {
            hash_mask(&s.act1, &mut h);
            hash_mask(&s.act2, &mut h);
            s.arg1.hash(&mut h);
            s.arg2.hash(&mut h);
        }
        hash_mask(&self.fusion_act, &mut h);
        hash_mask(&self.hidden, &mut h);
        h.finish()
    }
}

fn hash_mask<T: Real>(values: &[T], h: &mut DefaultHasher) {
    for chunk in values.chunks(64) {
        let bits = chunk.iter().enumerate().fold(0u64, |acc, (i, &v)| acc | (u64::from(v > T::zero()) << i));
        bits.hash(h);
    }
}

struct StreamWeights<'a, T> {
    c_in: usize,
    w1: &'a [T],
    b1: &'a [T],
    w2: &'a [T],
    b2: &'a [T],
}

fn stream_forward<T: Real>(input: &[T], n: usize, sw: &StreamWeights<T>, cache: &mut StreamCache<T>) {
    let s1 = ConvShape { c_in: sw.c_in, c_out: C1, batch: n, h: INPUT_SIDE, w: INPUT_SIDE };
    ops::im2col(input, s1, &mut cache.cols1);
    ops::conv_forward(&cache.cols1, sw.w1, sw.b1, s1, &mut cache.act1);
    ops::relu_inplace(&mut cache.act1);
    ops::maxpool2_forward(&cache.act1, C1 * n, INPUT_SIDE, INPUT_SIDE, &mut cache.pool1, &mut cache.arg1);

    let half = INPUT_SIDE / 2;
    let s2 = ConvShape { c_in: C1, c_out: C2, batch: n, h: half, w: half };
    ops::im2col(&cache.pool1, s2, &mut cache.cols2);
    ops::conv_forward(&cache.cols2, sw.w2, sw.b2, s2, &mut cache.act2);
    ops::relu_inplace(&mut cache.act2);
    ops::maxpool2_forward(&cache.act2, C2 * n, half, half, &mut cache.pool2, &mut cache.arg2);
}

/// Backpropagates `grad_pool2` through one stream. First-layer weight gradients go
/// to `grad_w1` laid out for `c_in` input channels.
#[allow(clippy::too_many_arguments)]
fn stream_backward<T: Real>(
    grad_pool2: &[T],
    n: usize,
    sw: &StreamWeights<T>,
    cache: &StreamCache<T>,
    scratch: &mut Scratch<T>,
    grad_w1: &mut [T],
    grad_b1: &mut [T],
    grad_w2: &mut [T],
    grad_b2: &mut [T],
) {
    let half = INPUT_SIDE / 2;
    ops::maxpool2_backward(grad_pool2, &cache.arg2, C2 * n, half, half, &mut scratch.g_act2);
    ops::relu_backward(&cache.act2, &mut scratch.g_act2);
    let s2 = ConvShape { c_in: C1, c_out: C2, batch: n, h: half, w: half };
    ops::conv_backward(&cache.cols2, sw.w2, &scratch.g_act2, s2, grad_w2, grad_b2, Some(&mut scratch.g_cols));
    scratch.g_pool1.clear();
    scratch.g_pool1.resize(C1 * n * half * half, T::zero());
    ops::col2im(&scratch.g_cols, s2, &mut scratch.g_pool1);

    ops::maxpool2_backward(&scratch.g_pool1, &cache.arg1, C1 * n, INPUT_SIDE, INPUT_SIDE, &mut scratch.g_act1);
    ops::relu_backward(&cache.act1, &mut scratch.g_act1);
    let s1 = ConvShape { c_in: sw.c_in, c_out: C1, batch: n, h: INPUT_SIDE, w: INPUT_SIDE };
    ops::conv_backward(&cache.cols1, sw.w1, &scratch.g_act1, s1, grad_w1, grad_b1, None);
}

/// Sum a `[C1, 3, 3, 3]` kernel over its input channels: convolving three identical
/// channels equals convolving one channel with the summed kernel.
fn fold_channels<T: Real>(w: &[T], out: &mut Vec<T>) {
    out.clear();
    out.resize(C1 * 9, T::zero());
    for co in 0..C1 {
        for c in 0..3 {
            for k in 0..9 {
                out[co * 9 + k] += w[co * 27 + c * 9 + k];
            }
        }
    }
}

fn sigmoid<T: Real>(z: T) -> T {
    let s = T::one() / (T::one() + (-z).exp());
    // keep scores strictly inside (0, 1) even when exp saturates
    s.max(T::epsilon()).min(T::one() - T::epsilon())
}

impl<T: Real> ModelParams<T> {
    fn rgb_weights(&self) -> StreamWeights<'_, T> {
        let p = &self.tensors;
        StreamWeights { c_in: 3, w1: &p[RGB_CONV1_W], b1: &p[RGB_CONV1_W + 1], w2: &p[RGB_CONV1_W + 2], b2: &p[RGB_CONV1_W + 3] }
    }

    fn depth_weights<'a>(&'a self, folded: &'a [T]) -> StreamWeights<'a, T> {
        let p = &self.tensors;
        StreamWeights { c_in: 1, w1: folded, b1: &p[DEPTH_CONV1_W + 1], w2: &p[DEPTH_CONV1_W + 2], b2: &p[DEPTH_CONV1_W + 3] }
    }

    /// Forward pass into a reusable cache (activations kept for [`ModelParams::backward_into`]).
    pub fn forward_into(&self, batch: &InputBatch<T>, cache: &mut ForwardCache<T>) {
        let n = batch.n;
        let p = &self.tensors;
        cache.n = n;
        stream_forward(&batch.rgb, n, &self.rgb_weights(), &mut cache.rgb);
        let mut folded = std::mem::take(&mut cache.scratch.folded);
        fold_channels(&p[DEPTH_CONV1_W], &mut folded);
        stream_forward(&batch.depth, n, &self.depth_weights(&folded), &mut cache.depth);
        cache.scratch.folded = folded;

        cache.fused_in.clear();
        cache.fused_in.extend_from_slice(&cache.rgb.pool2);
        cache.fused_in.extend_from_slice(&cache.depth.pool2);
        let s3 = ConvShape { c_in: 2 * C2, c_out: FUSED, batch: n, h: FEAT_SIDE, w: FEAT_SIDE };
        ops::im2col(&cache.fused_in, s3, &mut cache.fusion_cols);
        ops::conv_forward(&cache.fusion_cols, &p[FUSION_W], &p[FUSION_B], s3, &mut cache.fusion_act);
        ops::relu_inplace(&mut cache.fusion_act);

        // [C, N, P] -> [N, C*P]
        cache.flat.resize(n * FLAT, T::zero());
        for c in 0..FUSED {
            for i in 0..n {
                let src = &cache.fusion_act[(c * n + i) * FEAT_PLANE..(c * n + i + 1) * FEAT_PLANE];
                cache.flat[i * FLAT + c * FEAT_PLANE..i * FLAT + (c + 1) * FEAT_PLANE].copy_from_slice(src);
            }
        }

        cache.hidden.resize(n * HIDDEN, T::zero());
        for row in cache.hidden.chunks_exact_mut(HIDDEN) {
            row.copy_from_slice(&p[FC1_B]);
        }
        gemm(n, FLAT, HIDDEN, &cache.flat, Layout::row_major(FLAT), &p[FC1_W], Layout::transposed(FLAT), T::one(), &mut cache.hidden, Layout::row_major(HIDDEN));
        ops::relu_inplace(&mut cache.hidden);

        let outs = self.head.outputs();
        cache.output.resize(n * outs, T::zero());
        for row in cache.output.chunks_exact_mut(outs) {
            row.copy_from_slice(&p[HEAD_B]);
        }
        gemm(n, HIDDEN, outs, &cache.hidden, Layout::row_major(HIDDEN), &p[HEAD_W], Layout::transposed(HIDDEN), T::one(), &mut cache.output, Layout::row_major(outs));
        if self.head == HeadKind::Regression {
            cache.output.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
    }

    pub fn forward_cached(&self, batch: &InputBatch<T>) -> ForwardCache<T> {
        let mut cache = ForwardCache::default();
        self.forward_into(batch, &mut cache);
        cache
    }

    /// Logits `[N, 2]` or scores `[N, 1]`.
    pub fn forward_batch(&self, batch: &InputBatch<T>) -> Vec<T> {
        self.forward_cached(batch).output
    }

    pub fn forward(&self, input: &ModelInput) -> Result<Vec<T>> {
        Ok(self.forward_batch(&InputBatch::new([input])?))
    }

    /// Parameter gradients given `d loss / d output` (output = logits, or sigmoid scores
    /// for the regression head).
    pub fn backward(&self, cache: &mut ForwardCache<T>, grad_output: &[T]) -> Vec<Vec<T>> {
        let mut grads = self.zeros_like();
        self.backward_into(cache, grad_output, &mut grads);
        grads
    }

    /// Accumulates parameter gradients into `grads` (shapes mirror the tensors).
    pub fn backward_into(&self, cache: &mut ForwardCache<T>, grad_output: &[T], grads: &mut [Vec<T>]) {
        let n = cache.n;
        let p = &self.tensors;
        let outs = self.head.outputs();
        let sc = &mut cache.scratch;

        sc.g_out.clear();
        sc.g_out.extend_from_slice(grad_output);
        if self.head == HeadKind::Regression {
            for (g, &s) in sc.g_out.iter_mut().zip(&cache.output) {
                *g *= s * (T::one() - s);
            }
        }

        for row in sc.g_out.chunks_exact(outs) {
            for (gb, &g) in grads[HEAD_B].iter_mut().zip(row) {
                *gb += g;
            }
        }
        gemm(outs, n, HIDDEN, &sc.g_out, Layout::transposed(outs), &cache.hidden, Layout::row_major(HIDDEN), T::one(), &mut grads[HEAD_W], Layout::row_major(HIDDEN));
        sc.g_hidden.resize(n * HIDDEN, T::zero());
        gemm(n, outs, HIDDEN, &sc.g_out, Layout::row_major(outs), &p[HEAD_W], Layout::row_major(HIDDEN), T::zero(), &mut sc.g_hidden, Layout::row_major(HIDDEN));
        ops::relu_backward(&cache.hidden, &mut sc.g_hidden);

        for row in sc.g_hidden.chunks_exact(HIDDEN) {
            for (gb, &g) in grads[FC1_B].iter_mut().zip(row) {
                *gb += g;
            }
        }
        gemm(HIDDEN, n, FLAT, &sc.g_hidden, Layout::transposed(HIDDEN), &cache.flat, Layout::row_major(FLAT), T::one(), &mut grads[FC1_W], Layout::row_major(FLAT));
        sc.g_flat.resize(n * FLAT, T::zero());
        gemm(n, HIDDEN, FLAT, &sc.g_hidden, Layout::row_major(HIDDEN), &p[FC1_W], Layout::row_major(FLAT), T::zero(), &mut sc.g_flat, Layout::row_major(FLAT));

        sc.g_fusion.resize(FUSED * n * FEAT_PLANE, T::zero());
        for c in 0..FUSED {
            for i in 0..n {
                sc.g_fusion[(c * n + i) * FEAT_PLANE..(c * n + i + 1) * FEAT_PLANE]
                    .copy_from_slice(&sc.g_flat[i * FLAT + c * FEAT_PLANE..i * FLAT + (c + 1) * FEAT_PLANE]);
            }
        }
        ops::relu_backward(&cache.fusion_act, &mut sc.g_fusion);
        let s3 = ConvShape { c_in: 2 * C2, c_out: FUSED, batch: n, h: FEAT_SIDE, w: FEAT_SIDE };
        {
            let (gw, gb) = split_pair(grads, FUSION_W);
            ops::conv_backward(&cache.fusion_cols, &p[FUSION_W], &sc.g_fusion, s3, gw, gb, Some(&mut sc.g_cols));
        }
        let mut g_fused_in = std::mem::take(&mut sc.g_fused_in);
        g_fused_in.clear();
        g_fused_in.resize(2 * C2 * n * FEAT_PLANE, T::zero());
        ops::col2im(&sc.g_cols, s3, &mut g_fused_in);
        let (g_rgb, g_depth) = g_fused_in.split_at(C2 * n * FEAT_PLANE);

        {
            let (w1, rest) = grads[RGB_CONV1_W..RGB_CONV1_W + 4].split_at_mut(1);
            let (b1, rest) = rest.split_at_mut(1);
            let (w2, b2) = rest.split_at_mut(1);
            stream_backward(g_rgb, n, &self.rgb_weights(), &cache.rgb, sc, &mut w1[0], &mut b1[0], &mut w2[0], &mut b2[0]);
        }
        {
            let folded = std::mem::take(&mut sc.folded);
            let mut folded_grad = std::mem::take(&mut sc.folded_grad);
            folded_grad.clear();
            folded_grad.resize(C1 * 9, T::zero());
            let (w1, rest) = grads[DEPTH_CONV1_W..DEPTH_CONV1_W + 4].split_at_mut(1);
            let (b1, rest) = rest.split_at_mut(1);
            let (w2, b2) = rest.split_at_mut(1);
            stream_backward(g_depth, n, &self.depth_weights(&folded), &cache.depth, sc, &mut folded_grad, &mut b1[0], &mut w2[0], &mut b2[0]);
            for co in 0..C1 {
                for c in 0..3 {
                    for k in 0..9 {
                        w1[0][co * 27 + c * 9 + k] += folded_grad[co * 9 + k];
                    }
                }
            }
            sc.folded = folded;
            sc.folded_grad = folded_grad;
        }
        sc.g_fused_in = g_fused_in;
    }
}

fn split_pair<T>(grads: &mut [Vec<T>], w: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = grads.split_at_mut(w + 1);
    (&mut a[w], &mut b[0])
}
