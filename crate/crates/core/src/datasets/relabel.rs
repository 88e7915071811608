use super::samples::{Dataset, PointSample};
use crate::candidates::{Patch, PATCH_SIDE};

/// Two millimeters of depth change per pixel step.
pub const DEFAULT_GRADIENT_THRESHOLD: f32 = 0.002;

/// Largest depth-gradient magnitude in the patch from forward differences, in
/// meters per pixel step. The last row and column contribute one component.
pub fn max_depth_step(patch: &Patch) -> f32 {
    let n = PATCH_SIDE;
    let d = |r: usize, c: usize| patch.depth[r * n + c];
    let mut best = 0.0f32;
    for r in 0..n {
        for c in 0..n {
            let gx = if c + 1 < n { d(r, c + 1) - d(r, c) } else { 0.0 };
            let gy = if r + 1 < n { d(r + 1, c) - d(r, c) } else { 0.0 };
            best = best.max((gx * gx + gy * gy).sqrt());
        }
    }
    best
}

/// Force every sample whose depth patch contains a steep step to the negative
/// class and flag it; other samples pass through unchanged, in order.
pub fn relabel_high_gradient(ds: &Dataset<PointSample>, threshold: f32) -> Dataset<PointSample> {
    let samples = ds
        .samples
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if max_depth_step(&s.patch) > threshold {
                s.label = 0;
                s.relabeled = true;
            }
            s
        })
        .collect();
    Dataset::new(samples, ds.source_seeds.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::INPUT_PLANE;

    fn sample(label: u8, step: f32) -> PointSample {
        let depth = (0..INPUT_PLANE).map(|i| if i % PATCH_SIDE >= 16 { 0.5 - step } else { 0.5 }).collect();
        PointSample {
            patch: Patch { rgb: vec![0.5; 3 * INPUT_PLANE], depth },
            label,
            relabeled: false,
            pick_index: 0,
            pixel: (0, 0),
        }
    }

    #[test]
    fn examples() {
        let ds = Dataset::new(vec![sample(1, 0.0), sample(1, 0.03), sample(0, 0.03)], vec![]);
        let out = relabel_high_gradient(&ds, DEFAULT_GRADIENT_THRESHOLD);
        assert_eq!(out.samples[0], ds.samples[0]);
        assert_eq!((out.samples[1].label, out.samples[1].relabeled), (0, true));
        assert_eq!((out.samples[2].label, out.samples[2].relabeled), (0, true));
        assert!((max_depth_step(&ds.samples[1].patch) - 0.03).abs() < 1e-6);
    }

    #[test]
    fn gentle_slope_is_kept() {
        let ds = Dataset::new(vec![sample(1, 0.0019)], vec![]);
        assert_eq!(relabel_high_gradient(&ds, DEFAULT_GRADIENT_THRESHOLD), ds);
    }
}
