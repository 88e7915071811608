use super::samples::PointSample;
use crate::candidates::{Patch, PATCH_SIDE};
use crate::nn::{ModelInput, INPUT_PLANE};

pub const ROTATIONS: usize = 16;

/// Cosine and sine of `k * 22.5` degrees, exact at multiples of 90 degrees.
fn rotation(k: usize) -> (f64, f64) {
    match k % ROTATIONS {
        0 => (1.0, 0.0),
        4 => (0.0, 1.0),
        8 => (-1.0, 0.0),
        12 => (0.0, -1.0),
        k => {
            let a = k as f64 * std::f64::consts::PI / 8.0;
            (a.cos(), a.sin())
        }
    }
}

/// Rotate each 32x32 plane about the patch center, sampling bilinearly with
/// coordinates clamped to the patch (edge replication).
fn rotate_planes(src: &[f32], k: usize) -> Vec<f32> {
    if k % ROTATIONS == 0 {
        return src.to_vec();
    }
    let n = PATCH_SIDE;
    let center = (n as f64 - 1.0) / 2.0;
    let (cos, sin) = rotation(k);
    let last = (n - 1) as f64;
    let mut out = vec![0.0; src.len()];
    for r in 0..n {
        for c in 0..n {
            let (y, x) = (r as f64 - center, c as f64 - center);
            let sx = (cos * x + sin * y + center).clamp(0.0, last);
            let sy = (-sin * x + cos * y + center).clamp(0.0, last);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(n - 1), (y0 + 1).min(n - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for (plane_out, plane_in) in out.chunks_exact_mut(n * n).zip(src.chunks_exact(n * n)) {
                let at = |y: usize, x: usize| plane_in[y * n + x] as f64;
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                plane_out[r * n + c] = (top * (1.0 - fy) + bottom * fy) as f32;
            }
        }
    }
    out
}

/// Rotation by `k * 22.5` degrees of both color and depth.
pub fn rotate_patch(p: &Patch, k: usize) -> Patch {
    Patch { rgb: rotate_planes(&p.rgb, k), depth: rotate_planes(&p.depth, k) }
}

pub fn rotate_input(input: &ModelInput, k: usize) -> ModelInput {
    debug_assert_eq!(input.depth.len(), INPUT_PLANE);
    ModelInput { rgb: rotate_planes(&input.rgb, k), depth: rotate_planes(&input.depth, k) }
}

/// The sixteen rotated copies of a sample, `k = 0..16`, labels and metadata kept.
pub fn augment_rotations(s: &PointSample) -> Vec<PointSample> {
    (0..ROTATIONS).map(|k| PointSample { patch: rotate_patch(&s.patch, k), ..s.clone() }).collect()
}
