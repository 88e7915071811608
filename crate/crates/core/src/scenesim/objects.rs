//! Parametric object archetypes standing in for mesh models.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    FlatBox,
    TiltedBox,
    LyingCylinder,
    Sphere,
    Ramp,
}

/// Archetype plus size preset. The ten `*Small`/`*Large` kinds are the training
/// ("known") set; the five `*Medium` kinds are held out as the unseen set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    FlatBoxSmall,
    FlatBoxLarge,
    TiltedBoxSmall,
    TiltedBoxLarge,
    CylinderSmall,
    CylinderLarge,
    SphereSmall,
    SphereLarge,
    RampSmall,
    RampLarge,
    FlatBoxMedium,
    TiltedBoxMedium,
    CylinderMedium,
    SphereMedium,
    RampMedium,
}

pub const KNOWN_KINDS: [ObjectKind; 10] = [
    ObjectKind::FlatBoxSmall,
    ObjectKind::FlatBoxLarge,
    ObjectKind::TiltedBoxSmall,
    ObjectKind::TiltedBoxLarge,
    ObjectKind::CylinderSmall,
    ObjectKind::CylinderLarge,
    ObjectKind::SphereSmall,
    ObjectKind::SphereLarge,
    ObjectKind::RampSmall,
    ObjectKind::RampLarge,
];

pub const UNSEEN_KINDS: [ObjectKind; 5] = [
    ObjectKind::FlatBoxMedium,
    ObjectKind::TiltedBoxMedium,
    ObjectKind::CylinderMedium,
    ObjectKind::SphereMedium,
    ObjectKind::RampMedium,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectSet {
    Known,
    Unseen,
}

impl ObjectSet {
    pub fn kinds(self) -> Vec<ObjectKind> {
        match self {
            ObjectSet::Known => KNOWN_KINDS.to_vec(),
            ObjectSet::Unseen => UNSEEN_KINDS.to_vec(),
        }
    }
}

/// Geometry in meters, in the object's local frame: `u` along the length axis,
/// `v` across it, heights measured from the object's resting base.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "archetype", rename_all = "snake_case")]
pub enum Shape {
    FlatBox { length: f64, width: f64, height: f64 },
    /// Slab of `thickness` whose top rises along `u` at `tilt` radians.
    TiltedBox { length: f64, width: f64, thickness: f64, tilt: f64 },
    LyingCylinder { radius: f64, length: f64 },
    Sphere { radius: f64 },
    /// Wedge starting at `min_height` and rising along `u` at `slope` radians.
    Ramp { length: f64, width: f64, min_height: f64, slope: f64 },
}

impl Shape {
    pub fn archetype(&self) -> Archetype {
        match self {
            Shape::FlatBox { .. } => Archetype::FlatBox,
            Shape::TiltedBox { .. } => Archetype::TiltedBox,
            Shape::LyingCylinder { .. } => Archetype::LyingCylinder,
            Shape::Sphere { .. } => Archetype::Sphere,
            Shape::Ramp { .. } => Archetype::Ramp,
        }
    }

    /// Surface height above the base at local `(u, v)`, or `None` outside the footprint.
    pub fn height(&self, u: f64, v: f64) -> Option<f64> {
        match *self {
            Shape::FlatBox { length, width, height } => {
                (u.abs() <= length / 2.0 && v.abs() <= width / 2.0).then_some(height)
            }
            Shape::TiltedBox { length, width, thickness, tilt } => (u.abs() <= length / 2.0 && v.abs() <= width / 2.0)
                .then(|| thickness + tilt.tan() * (u + length / 2.0)),
            Shape::LyingCylinder { radius, length } => (u.abs() <= length / 2.0 && v.abs() <= radius)
                .then(|| radius + (radius * radius - v * v).max(0.0).sqrt()),
            Shape::Sphere { radius } => {
                let rho2 = u * u + v * v;
                (rho2 <= radius * radius).then(|| radius + (radius * radius - rho2).sqrt())
            }
            Shape::Ramp { length, width, min_height, slope } => (u.abs() <= length / 2.0 && v.abs() <= width / 2.0)
                .then(|| min_height + slope.tan() * (u + length / 2.0)),
        }
    }

    pub fn max_height(&self) -> f64 {
        match *self {
            Shape::FlatBox { height, .. } => height,
            Shape::TiltedBox { length, thickness, tilt, .. } => thickness + tilt.tan() * length,
            Shape::LyingCylinder { radius, .. } | Shape::Sphere { radius } => 2.0 * radius,
            Shape::Ramp { length, min_height, slope, .. } => min_height + slope.tan() * length,
        }
    }

    /// Half extents `(along u, along v)` of the footprint's local bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        match *self {
            Shape::FlatBox { length, width, .. }
            | Shape::TiltedBox { length, width, .. }
            | Shape::Ramp { length, width, .. } => (length / 2.0, width / 2.0),
            Shape::LyingCylinder { radius, length } => (length / 2.0, radius),
            Shape::Sphere { radius } => (radius, radius),
        }
    }

    /// Half extents of the footprint in world `(x, y)` after rotating by `yaw`.
    pub fn world_half_extents(&self, yaw: f64) -> (f64, f64) {
        if let Shape::Sphere { radius } = *self {
            return (radius, radius);
        }
        let (hu, hv) = self.half_extents();
        let (s, c) = yaw.sin_cos();
        (hu * c.abs() + hv * s.abs(), hu * s.abs() + hv * c.abs())
    }
}

/// Size presets and slope ranges (radians) for sampled tilts.
pub(crate) struct KindSpec {
    pub base: Shape,
    pub tilt_range: Option<(f64, f64)>,
}

impl ObjectKind {
    pub fn archetype(self) -> Archetype {
        self.spec().base.archetype()
    }

    pub(crate) fn spec(self) -> KindSpec {
        use ObjectKind::*;
        let deg = f64::to_radians;
        let fixed = |base| KindSpec { base, tilt_range: None };
        match self {
            FlatBoxSmall => fixed(Shape::FlatBox { length: 0.121, width: 0.088, height: 0.04 }),
            FlatBoxLarge => fixed(Shape::FlatBox { length: 0.165, width: 0.11, height: 0.05 }),
            FlatBoxMedium => fixed(Shape::FlatBox { length: 0.143, width: 0.099, height: 0.045 }),
            TiltedBoxSmall => KindSpec {
                base: Shape::TiltedBox { length: 0.132, width: 0.099, thickness: 0.03, tilt: 0.0 },
                tilt_range: Some((deg(5.0), deg(20.0))),
            },
            TiltedBoxLarge => KindSpec {
                base: Shape::TiltedBox { length: 0.165, width: 0.121, thickness: 0.035, tilt: 0.0 },
                tilt_range: Some((deg(5.0), deg(20.0))),
            },
            TiltedBoxMedium => KindSpec {
                base: Shape::TiltedBox { length: 0.149, width: 0.11, thickness: 0.03, tilt: 0.0 },
                tilt_range: Some((deg(5.0), deg(20.0))),
            },
            CylinderSmall => fixed(Shape::LyingCylinder { radius: 0.05, length: 0.15 }),
            CylinderLarge => fixed(Shape::LyingCylinder { radius: 0.055, length: 0.19 }),
            CylinderMedium => fixed(Shape::LyingCylinder { radius: 0.052, length: 0.17 }),
            SphereSmall => fixed(Shape::Sphere { radius: 0.062 }),
            SphereLarge => fixed(Shape::Sphere { radius: 0.068 }),
            SphereMedium => fixed(Shape::Sphere { radius: 0.065 }),
            RampSmall => KindSpec {
                base: Shape::Ramp { length: 0.132, width: 0.099, min_height: 0.005, slope: 0.0 },
                tilt_range: Some((deg(12.0), deg(24.0))),
            },
            RampLarge => KindSpec {
                base: Shape::Ramp { length: 0.165, width: 0.121, min_height: 0.005, slope: 0.0 },
                tilt_range: Some((deg(12.0), deg(24.0))),
            },
            RampMedium => KindSpec {
                base: Shape::Ramp { length: 0.149, width: 0.11, min_height: 0.005, slope: 0.0 },
                tilt_range: Some((deg(12.0), deg(24.0))),
            },
        }
    }

    /// Shape with the given tilt applied (ignored for archetypes without one).
    pub fn shape(self, tilt: f64) -> Shape {
        match self.spec().base {
            Shape::TiltedBox { length, width, thickness, .. } => Shape::TiltedBox { length, width, thickness, tilt },
            Shape::Ramp { length, width, min_height, .. } => Shape::Ramp { length, width, min_height, slope: tilt },
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sets_are_disjoint_and_sized() {
        assert_eq!(KNOWN_KINDS.len(), 10);
        assert!(UNSEEN_KINDS.iter().all(|k| !KNOWN_KINDS.contains(k)));
        let archetypes: std::collections::HashSet<_> = KNOWN_KINDS.iter().map(|k| k.archetype()).collect();
        assert_eq!(archetypes.len(), 5);
    }

    #[test]
    fn sphere_apex_and_rim() {
        let s = Shape::Sphere { radius: 0.05 };
        assert_eq!(s.height(0.0, 0.0), Some(0.1));
        assert_eq!(s.height(0.05, 0.0), Some(0.05));
        assert_eq!(s.height(0.051, 0.0), None);
    }

    #[test]
    fn ramp_rises_along_length() {
        let r = ObjectKind::RampSmall.shape(0.2);
        let lo = r.height(-0.055, 0.0).unwrap();
        let hi = r.height(0.055, 0.0).unwrap();
        assert!((hi - lo - 0.11 * 0.2f64.tan()).abs() < 1e-12);
        assert!((r.max_height() - (0.005 + 0.132 * 0.2f64.tan())).abs() < 1e-12);
    }

    #[test]
    fn rotated_extents_cover_corners() {
        let b = Shape::FlatBox { length: 0.2, width: 0.1, height: 0.05 };
        let (hx, hy) = b.world_half_extents(std::f64::consts::FRAC_PI_2);
        assert!((hx - 0.05).abs() < 1e-12 && (hy - 0.1).abs() < 1e-12);
    }
}
