use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{
    downsample_region, extract_patch, region_candidates, select_in_grid, select_point, BinaryMap, KernelE, RegionCandidate,
    GRID_OFFSET, GRID_POINTS, GRID_SIDE, GRID_STRIDE, NUM_REGIONS,
};
use crate::datasets::predict_binary_map;
use crate::error::{Error, Result};
use crate::nn::{ForwardCache, InputBatch, ModelInput, ModelParams};
use crate::rng::derive_seed;
use crate::scenesim::{generate_scene, DepthScene, Observation, PickOutcome, SceneConfig};

/// Model evaluations per two-step decision: every region once, then every grid point of one region.
pub const TWO_STEP_EVALS: usize = NUM_REGIONS + GRID_POINTS;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyResponse {
    /// Re-pose the remaining objects (or refill an empty box) and look again.
    #[default]
    Rearrange,
    /// End the episode.
    Stop,
}

/// The trained pair: region regressor plus point classifier.
#[derive(Clone, Copy)]
pub struct Detector<'a> {
    pub sgpa: &'a ModelParams<f32>,
    pub fre: &'a ModelParams<f32>,
    pub kernel: KernelE,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointChoice {
    pub grid: (usize, usize),
    pub pixel: (usize, usize),
    pub map: BinaryMap,
    /// No grid point was predicted pickable, so a random one was taken.
    pub fallback: bool,
}

/// First index of the maximum.
pub fn argmax_first(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl<'a> Detector<'a> {
    /// Regressor score of each region, in region order.
    pub fn region_scores(&self, obs: &Observation, regions: &[RegionCandidate]) -> Result<Vec<f32>> {
        let inputs: Vec<ModelInput> = regions
            .iter()
            .map(|r| downsample_region(obs, r).map(|img| img.to_model_input(obs.floor_depth, obs.box_depth)))
            .collect::<Result<_>>()?;
        let batch = InputBatch::new(inputs.iter())?;
        let mut cache = ForwardCache::default();
        self.fre.forward_into(&batch, &mut cache);
        Ok(cache.output.clone())
    }

    /// Classify the region's grid and take the most centered pickable point,
    /// or a uniformly random grid point when none is predicted pickable.
    pub fn choose_point<R: Rng>(&self, obs: &Observation, region: &RegionCandidate, rng: &mut R) -> Result<PointChoice> {
        self.choose_point_avoiding(obs, region, &[], 0, rng)
    }

    /// [`Detector::choose_point`], treating grid points within `radius` pixels of
    /// an already failed attempt as not pickable.
    pub fn choose_point_avoiding<R: Rng>(
        &self,
        obs: &Observation,
        region: &RegionCandidate,
        failed: &[(usize, usize)],
        radius: usize,
        rng: &mut R,
    ) -> Result<PointChoice> {
        let map = predict_binary_map(self.sgpa, obs, region)?;
        let near_failure = |(r, c): (usize, usize)| {
            failed.iter().any(|&(fr, fc)| {
                let (dr, dc) = (r.abs_diff(fr), c.abs_diff(fc));
                dr * dr + dc * dc <= radius * radius
            })
        };
        let usable = if failed.is_empty() {
            map.clone()
        } else {
            BinaryMap::from_fn(|i, j| map.get(i, j) && !near_failure(region.point(i, j).pixel))
        };
        let (grid, fallback) = match select_point(&usable, self.kernel) {
            Some(cell) => (cell, false),
            None => ((rng.gen_range(0..GRID_SIDE), rng.gen_range(0..GRID_SIDE)), true),
        };
        Ok(PointChoice { grid, pixel: region.point(grid.0, grid.1).pixel, map, fallback })
    }
}

/// Grid over the whole raster with the region grid's offset and stride.
pub fn full_coverage_axes(raster_h: usize, raster_w: usize) -> (Vec<usize>, Vec<usize>) {
    let axis = |n: usize| (GRID_OFFSET..n).step_by(GRID_STRIDE).collect::<Vec<_>>();
    (axis(raster_h), axis(raster_w))
}

/// Classify every point of the whole-raster grid and pick the most centered
/// pickable one. Returns the pixel, whether it fell back to a random point, and
/// the number of model evaluations spent.
pub fn full_coverage_choice<R: Rng>(
    sgpa: &ModelParams<f32>,
    obs: &Observation,
    kernel: KernelE,
    rng: &mut R,
) -> Result<((usize, usize), bool, usize)> {
    let (rows, cols) = full_coverage_axes(obs.raster_h, obs.raster_w);
    let mut cells = Vec::with_capacity(rows.len() * cols.len());
    let mut batch = InputBatch::<f32>::default();
    let mut cache = ForwardCache::default();
    for &r in &rows {
        let inputs: Vec<ModelInput> = cols
            .iter()
            .map(|&c| extract_patch(obs, r, c).map(|p| p.to_model_input(obs.floor_depth, obs.box_depth)))
            .collect::<Result<_>>()?;
        batch.fill(inputs.iter())?;
        sgpa.forward_into(&batch, &mut cache);
        cells.extend(cache.output.chunks_exact(2).map(|l| u8::from(l[1] > l[0])));
    }
    let evals = cells.len();
    Ok(match select_in_grid(&cells, rows.len(), cols.len(), kernel) {
        Some(((i, j), _)) => ((rows[i], cols[j]), false, evals),
        None => ((rows[rng.gen_range(0..rows.len())], cols[rng.gen_range(0..cols.len())]), true, evals),
    })
}

/// A bin that is refilled with a fresh scene whenever it runs empty and, when
/// `restock` is set, at every periodic rearrangement (picked objects return to
/// the bin). Scene seeds derive from `(seed, tag, refill count)`. Failed
/// attempts are remembered until the scene next changes.
pub(crate) struct World {
    base: SceneConfig,
    seed: u64,
    tag: &'static str,
    refills: u64,
    pub scene: DepthScene,
    pub regions: Vec<RegionCandidate>,
    pub failed: Vec<(usize, usize)>,
    /// Regions whose last greedy attempt found no usable pickable point.
    pub exhausted: Vec<bool>,
    pub restock: bool,
    since_restock: u32,
}

impl World {
    pub fn new(base: &SceneConfig, seed: u64, tag: &'static str, restock: bool) -> Result<Self> {
        let regions = region_candidates(base.raster_h, base.raster_w)?;
        let scene = generate_scene(SceneConfig { seed: derive_seed(seed, tag, 0), ..base.clone() })?;
        Ok(Self { base: base.clone(), seed, tag, refills: 0, scene, exhausted: vec![false; regions.len()], regions, failed: Vec::new(), restock, since_restock: 0 })
    }

    fn forget_failures(&mut self) {
        self.failed.clear();
        self.exhausted.iter_mut().for_each(|e| *e = false);
    }

    pub fn refill(&mut self) -> Result<()> {
        self.refills += 1;
        self.since_restock = 0;
        self.forget_failures();
        self.scene = generate_scene(SceneConfig { seed: derive_seed(self.seed, self.tag, self.refills), ..self.base.clone() })?;
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.scene.objects().is_empty()
    }

    pub fn rearrange(&mut self) {
        self.forget_failures();
        self.scene.rearrange();
    }

    /// Apply an attempt's outcome, then the periodic rearrangement.
    pub fn record_attempt(&mut self, pixel: (usize, usize), outcome: &PickOutcome) -> Result<()> {
        self.scene.apply_pick(outcome)?;
        if outcome.success {
            self.forget_failures();
        } else {
            self.failed.push(pixel);
        }
        self.since_restock += 1;
        if self.restock && self.since_restock >= self.base.rearrange_every {
            self.refill()?;
        } else if self.scene.maybe_rearrange() {
            self.forget_failures();
        }
        Ok(())
    }
}

/// Empty-box handling and failure avoidance of the greedy policy.
#[derive(Clone, Copy, Debug)]
pub(crate) struct GreedyPolicy {
    pub threshold: f64,
    pub response: EmptyResponse,
    pub retries: u32,
    pub avoid_radius: usize,
}

impl GreedyPolicy {
    pub fn from_config(cfg: &crate::config::RunConfig) -> Self {
        Self {
            threshold: cfg.empty_threshold,
            response: cfg.empty_response,
            retries: cfg.empty_retries,
            avoid_radius: cfg.failure_avoid_radius,
        }
    }
}

/// Outcome of the model-driven region and point choice.
pub(crate) struct GreedyDecision {
    pub scores: Vec<f32>,
    pub region: usize,
    pub choice: PointChoice,
    /// Empty-box rearrangements performed before deciding.
    pub rearrangements: u32,
}

/// Two-step decision with empty-box handling: while the best region score is
/// below the threshold, rearrange (or refill) up to `retries` times, then decide
/// anyway. With [`EmptyResponse::Stop`] a low score ends the episode instead.
pub(crate) fn greedy_decision<R: Rng>(
    det: &Detector,
    world: &mut World,
    policy: &GreedyPolicy,
    rng: &mut R,
) -> Result<GreedyDecision> {
    let GreedyPolicy { threshold, response, retries, avoid_radius } = *policy;
    let mut rearrangements = 0;
    loop {
        if world.is_empty() {
            match response {
                EmptyResponse::Stop => return Err(Error::EmptyBox),
                EmptyResponse::Rearrange => world.refill()?,
            }
        }
        let obs = world.scene.observation();
        let scores = det.region_scores(obs, &world.regions)?;
        let masked: Vec<f32> = scores.iter().zip(&world.exhausted).map(|(&s, &x)| if x { f32::NEG_INFINITY } else { s }).collect();
        let region = argmax_first(&masked);
        if !((masked[region] as f64) >= threshold) {
            match response {
                EmptyResponse::Stop => return Err(Error::EmptyBox),
                EmptyResponse::Rearrange if rearrangements < retries => {
                    rearrangements += 1;
                    world.rearrange();
                    continue;
                }
                EmptyResponse::Rearrange => {}
            }
        }
        let choice = det.choose_point_avoiding(obs, &world.regions[region], &world.failed, avoid_radius, rng)?;
        if choice.fallback && avoid_radius > 0 {
            world.exhausted[region] = true;
        }
        return Ok(GreedyDecision { scores, region, choice, rearrangements });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax_first(&[0.1, 0.5, 0.5, 0.2]), 1);
        assert_eq!(argmax_first(&[0.3; 12]), 0);
    }

    #[test]
    fn full_coverage_grid_size() {
        let (rows, cols) = full_coverage_axes(200, 300);
        assert_eq!((rows.len(), cols.len()), (33, 50));
        assert_eq!(TWO_STEP_EVALS, 301);
        assert!(rows.len() * cols.len() >= 5 * TWO_STEP_EVALS);
    }
}
