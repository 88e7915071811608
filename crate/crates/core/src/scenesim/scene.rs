use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::objects::{ObjectKind, ObjectSet, Shape, KNOWN_KINDS};
use super::observation::Observation;
use crate::error::{Error, Result};
use crate::rng::stream;

/// Owner value for pixels showing the floor.
pub const NO_OBJECT: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub raster_h: usize,
    pub raster_w: usize,
    /// Meters per pixel along rows.
    pub pitch_y: f64,
    /// Meters per pixel along columns.
    pub pitch_x: f64,
    pub box_depth: f64,
    /// Camera-to-floor distance; the largest depth value in any observation.
    pub floor_depth: f64,
    pub num_objects: usize,
    pub kinds: Vec<ObjectKind>,
    /// Maximum surface height above the floor, stacking included.
    pub height_cap: f64,
    pub rearrange_every: u32,
    pub placement_retries: u32,
    /// Admissible poses drawn per object; the lowest-resting one is kept.
    pub placement_candidates: u32,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            raster_h: 200,
            raster_w: 300,
            pitch_y: 0.0015,
            pitch_x: 0.001667,
            box_depth: 0.15,
            floor_depth: 0.5,
            num_objects: 10,
            kinds: KNOWN_KINDS.to_vec(),
            height_cap: 0.30,
            rearrange_every: 50,
            placement_retries: 200,
            placement_candidates: 200,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn with_set(mut self, set: ObjectSet) -> Self {
        self.kinds = set.kinds();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.raster_h == 0 || self.raster_w == 0 {
            return bad("raster dimensions must be positive");
        }
        if !(self.pitch_x > 0.0 && self.pitch_y > 0.0) {
            return bad("pixel pitch must be positive");
        }
        if !(self.box_depth > 0.0) {
            return bad("box_depth must be positive");
        }
        if !(self.height_cap > 0.0 && self.floor_depth > self.height_cap) {
            return bad("floor_depth must exceed height_cap > 0");
        }
        if self.num_objects > 0 && self.kinds.is_empty() {
            return bad("kinds must be non-empty when num_objects > 0");
        }
        Ok(())
    }

    pub fn width_m(&self) -> f64 {
        self.raster_w as f64 * self.pitch_x
    }

    pub fn height_m(&self) -> f64 {
        self.raster_h as f64 * self.pitch_y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: u32,
    pub kind: ObjectKind,
    pub shape: Shape,
    /// Footprint center in fractional pixel coordinates.
    pub row: f64,
    pub col: f64,
    pub yaw: f64,
    /// Height of the resting base above the floor (nonzero when stacked).
    pub base: f64,
    pub albedo: [f32; 3],
}

impl ObjectInstance {
    /// Highest point above the floor.
    pub fn top(&self) -> f64 {
        self.base + self.shape.max_height()
    }
}

/// Per-pixel composite of all objects: surface height and the owning object id.
#[derive(Clone, Debug, Default)]
pub(crate) struct Layers {
    pub height: Vec<f64>,
    pub owner: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRecord {
    config: SceneConfig,
    objects: Vec<ObjectInstance>,
    pick_count_since_rearrange: u32,
    rearrangements: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SceneRecord", into = "SceneRecord")]
pub struct DepthScene {
    config: SceneConfig,
    objects: Vec<ObjectInstance>,
    pick_count_since_rearrange: u32,
    rearrangements: u64,
    layers: Layers,
    observation: Observation,
}

impl PartialEq for DepthScene {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.objects == other.objects
            && self.pick_count_since_rearrange == other.pick_count_since_rearrange
            && self.rearrangements == other.rearrangements
    }
}

impl TryFrom<SceneRecord> for DepthScene {
    type Error = Error;

    fn try_from(r: SceneRecord) -> Result<Self> {
        r.config.validate()?;
        let mut ids: Vec<u32> = r.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) || ids.contains(&NO_OBJECT) {
            return Err(Error::Config("object ids must be unique".into()));
        }
        let mut scene = DepthScene::empty(r.config)?;
        scene.objects = r.objects;
        scene.pick_count_since_rearrange = r.pick_count_since_rearrange;
        scene.rearrangements = r.rearrangements;
        scene.refresh();
        Ok(scene)
    }
}

impl From<DepthScene> for SceneRecord {
    fn from(s: DepthScene) -> Self {
        SceneRecord {
            config: s.config,
            objects: s.objects,
            pick_count_since_rearrange: s.pick_count_since_rearrange,
            rearrangements: s.rearrangements,
        }
    }
}

/// Scatter `config.num_objects` objects drawn from `config.kinds`. Objects that
/// cannot be placed under the height cap within the retry budget are dropped.
pub fn generate_scene(config: SceneConfig) -> Result<DepthScene> {
    let mut scene = DepthScene::empty(config)?;
    let mut rng = stream(scene.config.seed, "scene", 0);
    for _ in 0..scene.config.num_objects {
        let kind = scene.config.kinds[rng.gen_range(0..scene.config.kinds.len())];
        let spec = kind.spec();
        let tilt = spec.tilt_range.map_or(0.0, |(lo, hi)| rng.gen_range(lo..hi));
        let albedo = [rng.gen_range(0.35..0.95), rng.gen_range(0.35..0.95), rng.gen_range(0.35..0.95)];
        let shape = kind.shape(tilt);
        let id = scene.objects.len() as u32;
        match scene.sample_pose(&shape, &mut rng) {
            Some((row, col, yaw, base)) => {
                scene.objects.push(ObjectInstance { id, kind, shape, row, col, yaw, base, albedo });
                scene.stamp(scene.objects.len() - 1);
            }
            None => warn!("could not place a {kind:?} under the height cap; dropping it"),
        }
    }
    scene.observation = Observation::render(&scene.config, &scene.layers, &scene.objects);
    Ok(scene)
}

impl DepthScene {
    pub fn empty(config: SceneConfig) -> Result<Self> {
        config.validate()?;
        let n = config.raster_h * config.raster_w;
        let layers = Layers { height: vec![0.0; n], owner: vec![NO_OBJECT; n] };
        let observation = Observation::render(&config, &layers, &[]);
        Ok(Self { config, objects: Vec::new(), pick_count_since_rearrange: 0, rearrangements: 0, layers, observation })
    }

    /// Place an object at an explicit pose, resting on whatever lies beneath.
    pub fn add_object(&mut self, kind: ObjectKind, shape: Shape, row: f64, col: f64, yaw: f64, albedo: [f32; 3]) -> Result<u32> {
        let (hx, hy) = shape.world_half_extents(yaw);
        let (x, y) = self.pixel_to_world(row, col);
        if x - hx < 0.0 || y - hy < 0.0 || x + hx > self.config.width_m() || y + hy > self.config.height_m() {
            return Err(Error::Config(format!("{kind:?} at ({row}, {col}) crosses the box walls")));
        }
        let id = self.objects.iter().map(|o| o.id + 1).max().unwrap_or(0);
        let base = self.rest_height(&shape, row, col, yaw);
        self.objects.push(ObjectInstance { id, kind, shape, row, col, yaw, base, albedo });
        self.stamp(self.objects.len() - 1);
        self.observation = Observation::render(&self.config, &self.layers, &self.objects);
        Ok(id)
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn pick_count_since_rearrange(&self) -> u32 {
        self.pick_count_since_rearrange
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    /// Object whose surface is visible at the pixel.
    pub fn owner(&self, row: usize, col: usize) -> Option<u32> {
        let id = self.layers.owner[row * self.config.raster_w + col];
        (id != NO_OBJECT).then_some(id)
    }

    /// Row-major visible-object map, `NO_OBJECT` on floor pixels.
    pub fn owner_map(&self) -> &[u32] {
        &self.layers.owner
    }

    /// Surface height above the floor at the pixel, in meters.
    pub fn height_at(&self, row: usize, col: usize) -> f64 {
        self.layers.height[row * self.config.raster_w + col]
    }

    pub fn check_pixel(&self, row: usize, col: usize) -> Result<()> {
        let (h, w) = (self.config.raster_h, self.config.raster_w);
        if row >= h || col >= w {
            return Err(Error::PixelOutOfBounds { row, col, h, w });
        }
        Ok(())
    }

    /// Record an attempt: a success removes the picked object and lets everything
    /// above it settle; either way the rearrangement counter advances.
    pub fn apply_pick(&mut self, outcome: &super::PickOutcome) -> Result<()> {
        if outcome.success {
            let id = outcome.object_id.ok_or_else(|| Error::Config("successful outcome without an object".into()))?;
            let pos = self.objects.iter().position(|o| o.id == id).ok_or(Error::ObjectAbsent(id))?;
            self.objects.remove(pos);
            self.settle();
        }
        self.pick_count_since_rearrange += 1;
        Ok(())
    }

    /// Re-pose every remaining object once the pick counter reaches the
    /// rearrangement period. Returns whether a rearrangement happened.
    pub fn maybe_rearrange(&mut self) -> bool {
        if self.pick_count_since_rearrange < self.config.rearrange_every {
            return false;
        }
        self.rearrange();
        true
    }

    /// Re-pose every remaining object with a fresh random stream and reset the
    /// pick counter.
    pub fn rearrange(&mut self) {
        self.pick_count_since_rearrange = 0;
        self.rearrangements += 1;
        let mut rng = stream(self.config.seed, "rearrange", self.rearrangements);
        let old = std::mem::take(&mut self.objects);
        self.clear_layers();
        for mut obj in old {
            let (row, col, yaw, base) = self
                .sample_pose(&obj.shape, &mut rng)
                .unwrap_or_else(|| self.lowest_pose(&obj.shape, &mut rng));
            obj.row = row;
            obj.col = col;
            obj.yaw = yaw;
            obj.base = base;
            self.objects.push(obj);
            self.stamp(self.objects.len() - 1);
        }
        self.observation = Observation::render(&self.config, &self.layers, &self.objects);
    }

    pub(crate) fn pixel_to_world(&self, row: f64, col: f64) -> (f64, f64) {
        ((col + 0.5) * self.config.pitch_x, (row + 0.5) * self.config.pitch_y)
    }

    fn random_pose<R: Rng>(&self, shape: &Shape, rng: &mut R) -> (f64, f64, f64) {
        let yaw = rng.gen_range(0.0..std::f64::consts::PI);
        let (hx, hy) = shape.world_half_extents(yaw);
        let x = rng.gen_range(hx..(self.config.width_m() - hx).max(hx + 1e-9));
        let y = rng.gen_range(hy..(self.config.height_m() - hy).max(hy + 1e-9));
        (y / self.config.pitch_y - 0.5, x / self.config.pitch_x - 0.5, yaw)
    }

    /// Lowest-resting of the first `placement_candidates` poses that respect the
    /// height cap, so clutter spreads out before it piles up.
    fn sample_pose<R: Rng>(&self, shape: &Shape, rng: &mut R) -> Option<(f64, f64, f64, f64)> {
        let mut best: Option<(f64, f64, f64, f64)> = None;
        let mut accepted = 0;
        for _ in 0..self.config.placement_retries.max(1) {
            let (row, col, yaw) = self.random_pose(shape, rng);
            let base = self.rest_height(shape, row, col, yaw);
            if base + shape.max_height() <= self.config.height_cap {
                if best.map_or(true, |b| base < b.3) {
                    best = Some((row, col, yaw, base));
                }
                accepted += 1;
                if accepted >= self.config.placement_candidates.max(1) {
                    break;
                }
            }
        }
        best
    }

    fn lowest_pose<R: Rng>(&self, shape: &Shape, rng: &mut R) -> (f64, f64, f64, f64) {
        (0..self.config.placement_retries.max(1))
            .map(|_| {
                let (row, col, yaw) = self.random_pose(shape, rng);
                (row, col, yaw, self.rest_height(shape, row, col, yaw))
            })
            .min_by(|a, b| a.3.total_cmp(&b.3))
            .expect("at least one pose")
    }

    /// Visit every pixel covered by a footprint with the local surface height there.
    fn for_footprint(&self, shape: &Shape, row: f64, col: f64, yaw: f64, mut f: impl FnMut(usize, f64)) {
        let c = &self.config;
        let (hx, hy) = shape.world_half_extents(yaw);
        let (cx, cy) = self.pixel_to_world(row, col);
        let c0 = (((cx - hx) / c.pitch_x - 0.5).floor().max(0.0)) as usize;
        let c1 = (((cx + hx) / c.pitch_x - 0.5).ceil().max(0.0) as usize).min(c.raster_w - 1);
        let r0 = (((cy - hy) / c.pitch_y - 0.5).floor().max(0.0)) as usize;
        let r1 = (((cy + hy) / c.pitch_y - 0.5).ceil().max(0.0) as usize).min(c.raster_h - 1);
        let (s, co) = yaw.sin_cos();
        for r in r0..=r1 {
            let dy = (r as f64 + 0.5) * c.pitch_y - cy;
            for cc in c0..=c1 {
                let dx = (cc as f64 + 0.5) * c.pitch_x - cx;
                let u = dx * co + dy * s;
                let v = -dx * s + dy * co;
                if let Some(h) = shape.height(u, v) {
                    f(r * c.raster_w + cc, h);
                }
            }
        }
    }

    fn rest_height(&self, shape: &Shape, row: f64, col: f64, yaw: f64) -> f64 {
        let mut base: f64 = 0.0;
        self.for_footprint(shape, row, col, yaw, |i, _| base = base.max(self.layers.height[i]));
        base
    }

    fn stamp(&mut self, index: usize) {
        let obj = self.objects[index].clone();
        let mut layers = std::mem::take(&mut self.layers);
        self.for_footprint(&obj.shape, obj.row, obj.col, obj.yaw, |i, h| {
            let z = obj.base + h;
            if z >= layers.height[i] {
                layers.height[i] = z;
                layers.owner[i] = obj.id;
            }
        });
        self.layers = layers;
    }

    fn clear_layers(&mut self) {
        self.layers.height.iter_mut().for_each(|h| *h = 0.0);
        self.layers.owner.iter_mut().for_each(|o| *o = NO_OBJECT);
    }

    /// Drop every object onto what lies beneath it, in placement order.
    fn settle(&mut self) {
        self.clear_layers();
        for i in 0..self.objects.len() {
            let o = &self.objects[i];
            let base = self.rest_height(&o.shape.clone(), o.row, o.col, o.yaw);
            self.objects[i].base = base;
            self.stamp(i);
        }
        self.observation = Observation::render(&self.config, &self.layers, &self.objects);
    }

    fn refresh(&mut self) {
        self.clear_layers();
        for i in 0..self.objects.len() {
            self.stamp(i);
        }
        self.observation = Observation::render(&self.config, &self.layers, &self.objects);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenesim::{PickCause, PickOutcome};

    fn cfg(seed: u64, n: usize) -> SceneConfig {
        SceneConfig { seed, num_objects: n, ..SceneConfig::default() }
    }

    #[test]
    fn default_box_footprint() {
        let c = SceneConfig::default();
        assert!((c.height_m() - 0.30).abs() < 1e-3);
        assert!((c.width_m() - 0.50).abs() < 1e-3);
    }

    #[test]
    fn empty_scene_is_floor() {
        let s = generate_scene(cfg(7, 0)).unwrap();
        assert!(s.objects().is_empty());
        assert!(s.owner_map().iter().all(|&o| o == NO_OBJECT));
    }

    #[test]
    fn generation_is_deterministic_and_seeded() {
        let a = generate_scene(cfg(7, 10)).unwrap();
        let b = generate_scene(cfg(7, 10)).unwrap();
        let c = generate_scene(cfg(8, 10)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
        assert_eq!(a.objects().len(), 10);
    }

    #[test]
    fn objects_respect_walls_and_cap() {
        for seed in 0..20 {
            let s = generate_scene(cfg(seed, 14)).unwrap();
            let c = s.config();
            for o in s.objects() {
                let (hx, hy) = o.shape.world_half_extents(o.yaw);
                let (x, y) = s.pixel_to_world(o.row, o.col);
                assert!(x - hx >= -1e-12 && x + hx <= c.width_m() + 1e-12);
                assert!(y - hy >= -1e-12 && y + hy <= c.height_m() + 1e-12);
                assert!(o.top() <= c.height_cap + 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip_rebuilds_layers() {
        let a = generate_scene(cfg(3, 10)).unwrap();
        let b: DepthScene = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.owner_map(), b.owner_map());
        assert_eq!(a.observation().depth, b.observation().depth);
    }

    #[test]
    fn stacked_object_rests_on_lower_one() {
        let mut s = DepthScene::empty(cfg(0, 0)).unwrap();
        let low = Shape::FlatBox { length: 0.1, width: 0.1, height: 0.04 };
        let high = Shape::FlatBox { length: 0.05, width: 0.05, height: 0.02 };
        s.add_object(ObjectKind::FlatBoxSmall, low, 100.0, 150.0, 0.0, [0.5; 3]).unwrap();
        let id = s.add_object(ObjectKind::FlatBoxSmall, high, 100.0, 150.0, 0.0, [0.5; 3]).unwrap();
        assert!((s.height_at(100, 150) - 0.06).abs() < 1e-12);
        assert_eq!(s.owner(100, 150), Some(id));
        let remove_low = PickOutcome { success: true, cause: PickCause::SealOk, object_id: Some(0) };
        s.apply_pick(&remove_low).unwrap();
        assert!((s.height_at(100, 150) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn picks_and_rearrangement() {
        let mut s = generate_scene(cfg(11, 10)).unwrap();
        let id = s.objects()[0].id;
        let ok = PickOutcome { success: true, cause: PickCause::SealOk, object_id: Some(id) };
        s.apply_pick(&ok).unwrap();
        assert_eq!(s.objects().len(), 9);
        assert!(matches!(s.apply_pick(&ok), Err(Error::ObjectAbsent(i)) if i == id));
        let fail = PickOutcome { success: false, cause: PickCause::NotOnObject, object_id: None };
        let before = s.objects().to_vec();
        while s.pick_count_since_rearrange() < 49 {
            s.apply_pick(&fail).unwrap();
        }
        assert_eq!(s.objects(), &before[..]);
        assert!(!s.maybe_rearrange());
        s.apply_pick(&fail).unwrap();
        assert!(s.maybe_rearrange());
        assert_eq!(s.pick_count_since_rearrange(), 0);
        let mut kinds_before: Vec<_> = before.iter().map(|o| (o.id, o.kind)).collect();
        let mut kinds_after: Vec<_> = s.objects().iter().map(|o| (o.id, o.kind)).collect();
        kinds_before.sort();
        kinds_after.sort();
        assert_eq!(kinds_before, kinds_after);
        assert_ne!(s.objects(), &before[..]);
    }

    #[test]
    fn rearranging_empty_scene_resets_counter() {
        let mut s = generate_scene(cfg(1, 0)).unwrap();
        let fail = PickOutcome { success: false, cause: PickCause::NotOnObject, object_id: None };
        for _ in 0..50 {
            s.apply_pick(&fail).unwrap();
        }
        assert!(s.maybe_rearrange());
        assert_eq!(s.pick_count_since_rearrange(), 0);
        assert!(s.objects().is_empty());
    }
}
