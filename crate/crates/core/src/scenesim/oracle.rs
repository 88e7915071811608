use rand::Rng;
use serde::{Deserialize, Serialize};

use super::observation::surface_normal;
use super::scene::DepthScene;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    /// Suction pad radius in pixels.
    pub pad_radius_px: usize,
    /// Steepest admissible surface tilt inside the pad, in degrees.
    pub max_tilt_deg: f64,
    /// Largest admissible deviation from the best-fit plane over the pad, in meters.
    pub seal_tolerance: f64,
    /// Probability that an otherwise sealing attempt fails anyway.
    pub noise: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self { pad_radius_px: 7, max_tilt_deg: 30.0, seal_tolerance: 0.002, noise: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PickCause {
    SealOk,
    NotOnObject,
    SurfaceTooSteep,
    SealLeak,
    NoiseFail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PickOutcome {
    pub success: bool,
    pub cause: PickCause,
    /// Object visible at the attempted pixel.
    pub object_id: Option<u32>,
}

impl PickOutcome {
    fn fail(cause: PickCause, object_id: Option<u32>) -> Self {
        Self { success: false, cause, object_id }
    }
}

/// In-bounds pixels of the pad disk centered at `(row, col)`.
fn pad_disk(scene: &DepthScene, row: usize, col: usize, radius: usize) -> impl Iterator<Item = (usize, usize)> {
    let (h, w) = (scene.config().raster_h as isize, scene.config().raster_w as isize);
    let r = radius as isize;
    let (row, col) = (row as isize, col as isize);
    (-r..=r)
        .flat_map(move |dr| (-r..=r).map(move |dc| (dr, dc)))
        .filter(move |&(dr, dc)| dr * dr + dc * dc <= r * r)
        .map(move |(dr, dc)| (row + dr, col + dc))
        .filter(move |&(y, x)| y >= 0 && x >= 0 && y < h && x < w)
        .map(|(y, x)| (y as usize, x as usize))
}

/// Largest absolute residual of the least-squares plane through `(x, y, z)` points.
fn plane_fit_residual(points: &[(f64, f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my, mz) = points.iter().fold((0.0, 0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n, a.2 + p.2 / n));
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, z) in points {
        let (x, y, z) = (x - mx, y - my, z - mz);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sxz += x * z;
        syz += y * z;
    }
    let det = sxx * syy - sxy * sxy;
    let (a, b) = if det.abs() > 1e-30 {
        ((sxz * syy - syz * sxy) / det, (syz * sxx - sxz * sxy) / det)
    } else if sxx > 0.0 {
        (sxz / sxx, 0.0)
    } else if syy > 0.0 {
        (0.0, syz / syy)
    } else {
        (0.0, 0.0)
    };
    points.iter().map(|&(x, y, z)| (z - mz - a * (x - mx) - b * (y - my)).abs()).fold(0.0, f64::max)
}

/// Geometric seal test at a pixel, in order: the pixel must show an object, the
/// pad disk must be planar within tolerance, every normal in the disk must be
/// within the tilt limit, and finally a Bernoulli draw may veto the pick. The
/// draw is made on every call so the random stream does not depend on geometry.
pub fn suction_oracle<R: Rng>(
    scene: &DepthScene,
    row: usize,
    col: usize,
    params: &OracleParams,
    rng: &mut R,
) -> Result<PickOutcome> {
    scene.check_pixel(row, col)?;
    let noise = rng.gen::<f64>() < params.noise;
    let Some(id) = scene.owner(row, col) else {
        return Ok(PickOutcome::fail(PickCause::NotOnObject, None));
    };
    let obs = scene.observation();
    let disk: Vec<(usize, usize)> = pad_disk(scene, row, col, params.pad_radius_px).collect();
    let points: Vec<(f64, f64, f64)> = disk
        .iter()
        .map(|&(y, x)| (x as f64 * obs.pitch_x, y as f64 * obs.pitch_y, obs.height_at(y, x)))
        .collect();
    if plane_fit_residual(&points) > params.seal_tolerance {
        return Ok(PickOutcome::fail(PickCause::SealLeak, Some(id)));
    }
    let min_z = params.max_tilt_deg.to_radians().cos();
    if disk.iter().any(|&(y, x)| surface_normal(obs, y, x)[2] < min_z) {
        return Ok(PickOutcome::fail(PickCause::SurfaceTooSteep, Some(id)));
    }
    if noise {
        return Ok(PickOutcome::fail(PickCause::NoiseFail, Some(id)));
    }
    Ok(PickOutcome { success: true, cause: PickCause::SealOk, object_id: Some(id) })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::scenesim::{ObjectKind, SceneConfig, Shape};

    fn scene_with(kind: ObjectKind, shape: Shape) -> DepthScene {
        let mut s = DepthScene::empty(SceneConfig::default()).unwrap();
        s.add_object(kind, shape, 100.0, 150.0, 0.0, [0.7; 3]).unwrap();
        s
    }

    fn query(s: &DepthScene, row: usize, col: usize) -> PickOutcome {
        suction_oracle(s, row, col, &OracleParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn flat_box_center_seals() {
        let s = scene_with(ObjectKind::FlatBoxSmall, Shape::FlatBox { length: 0.12, width: 0.09, height: 0.04 });
        let out = query(&s, 100, 150);
        assert!(out.success);
        assert_eq!(out.cause, PickCause::SealOk);
        assert_eq!(out.object_id, Some(0));
    }

    #[test]
    fn floor_is_not_an_object() {
        let s = scene_with(ObjectKind::FlatBoxSmall, Shape::FlatBox { length: 0.12, width: 0.09, height: 0.04 });
        assert_eq!(query(&s, 5, 5), PickOutcome::fail(PickCause::NotOnObject, None));
    }

    #[test]
    fn box_edge_leaks() {
        // Half-length 0.06 m spans 36 columns from the center; stay 3 px inside the rim.
        let s = scene_with(ObjectKind::FlatBoxSmall, Shape::FlatBox { length: 0.12, width: 0.09, height: 0.04 });
        let out = query(&s, 100, 150 + 33);
        assert_eq!(out.cause, PickCause::SealLeak);
        assert!(!out.success);
    }

    #[test]
    fn steep_sphere_flank_is_too_steep() {
        let r = 0.05;
        let s = scene_with(ObjectKind::SphereSmall, Shape::Sphere { radius: r });
        // 35 degrees from the apex along the row axis.
        let offset = (r * 35f64.to_radians().sin() / 0.0015).round() as usize;
        let out = query(&s, 100 + offset, 150);
        assert_eq!(out.cause, PickCause::SurfaceTooSteep);
        assert!(query(&s, 100, 150).success);
    }

    #[test]
    fn certain_noise_vetoes_good_seals() {
        let s = scene_with(ObjectKind::FlatBoxSmall, Shape::FlatBox { length: 0.12, width: 0.09, height: 0.04 });
        let p = OracleParams { noise: 1.0, ..OracleParams::default() };
        let out = suction_oracle(&s, 100, 150, &p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.cause, PickCause::NoiseFail);
    }

    #[test]
    fn out_of_bounds_pixel_errors() {
        let s = DepthScene::empty(SceneConfig::default()).unwrap();
        assert!(suction_oracle(&s, 200, 0, &OracleParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn plane_fit_is_exact_on_planes() {
        let pts: Vec<_> = (0..25).map(|i| ((i % 5) as f64, (i / 5) as f64, 0.3 + 0.2 * (i % 5) as f64 - 0.1 * (i / 5) as f64)).collect();
        assert!(plane_fit_residual(&pts) < 1e-12);
    }
}
