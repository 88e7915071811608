use rand::Rng;
use serde::{Deserialize, Serialize};

use super::detector::{argmax_first, full_coverage_choice, greedy_decision, Detector, EmptyResponse, GreedyPolicy, World, TWO_STEP_EVALS};
use super::logs::TestReport;
use crate::candidates::{region_candidates, RegionCandidate, GRID_POINTS};
use crate::config::RunConfig;
use crate::error::Result;
use crate::nn::ModelParams;
use crate::rng::{derive_seed, stream};
use crate::scenesim::{generate_scene, suction_oracle, DepthScene, ObjectSet, SceneConfig};

/// Pure-greedy picks on fresh scenes built from `scene`; the bin is refilled
/// whenever it empties and rearranged on its usual period.
pub(crate) fn greedy_test(det: &Detector, cfg: &RunConfig, scene: &SceneConfig, picks: usize, seed: u64) -> Result<TestReport> {
    let mut world = World::new(scene, seed, "test-scene", cfg.restock_on_rearrange)?;
    let mut policy = stream(seed, "test-policy", 0);
    let mut oracle = stream(seed, "test-oracle", 0);
    let rules = GreedyPolicy { response: EmptyResponse::Rearrange, ..GreedyPolicy::from_config(cfg) };
    let mut successes = 0;
    for _ in 0..picks {
        let d = greedy_decision(det, &mut world, &rules, &mut policy)?;
        let (r, c) = d.choice.pixel;
        let outcome = suction_oracle(&world.scene, r, c, &cfg.oracle, &mut oracle)?;
        successes += usize::from(outcome.success);
        world.record_attempt(d.choice.pixel, &outcome)?;
    }
    Ok(TestReport::new(picks, successes))
}

/// Success rate of `n_picks` pure-greedy picks on scenes of the given object set.
pub fn final_test(det: &Detector, cfg: &RunConfig, set: ObjectSet, n_picks: usize, seed: u64) -> Result<TestReport> {
    if n_picks == 0 {
        return Err(crate::error::Error::Config("a test needs at least one pick".into()));
    }
    let scene = cfg.scene.clone().with_set(set);
    greedy_test(det, cfg, &scene, n_picks, seed)
}

/// Whether any pixel of the region shows an object.
pub fn region_occupied(scene: &DepthScene, region: &RegionCandidate) -> bool {
    let w = scene.config().raster_w;
    let owners = scene.owner_map();
    (region.row..region.row + crate::candidates::REGION_SIZE)
        .any(|r| owners[r * w + region.col..r * w + region.col + crate::candidates::REGION_SIZE].iter().any(|&o| o != crate::scenesim::NO_OBJECT))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmissionReport {
    pub trials: usize,
    pub omissions: usize,
    pub rate: f64,
}

/// Scenes for trial `t`: object count drawn uniformly from `1..=max_objects`.
fn trial_scene(cfg: &RunConfig, set: ObjectSet, max_objects: usize, seed: u64, t: usize) -> Result<DepthScene> {
    let mut rng = stream(seed, "trial-size", t as u64);
    let count = rng.gen_range(1..=max_objects.max(1));
    let scene_cfg = SceneConfig { num_objects: count, seed: derive_seed(seed, "trial-scene", t as u64), ..cfg.scene.clone().with_set(set) };
    generate_scene(scene_cfg)
}

/// Fraction of trials whose top-scoring region contains no object pixel, over
/// scenes holding between one and `scene.num_objects` objects.
pub fn measure_omission_with<F>(cfg: &RunConfig, trials: usize, seed: u64, mut score: F) -> Result<OmissionReport>
where
    F: FnMut(&DepthScene, &[RegionCandidate]) -> Result<Vec<f32>>,
{
    let regions = region_candidates(cfg.scene.raster_h, cfg.scene.raster_w)?;
    let mut omissions = 0;
    for t in 0..trials {
        let scene = trial_scene(cfg, ObjectSet::Known, cfg.scene.num_objects, seed, t)?;
        let best = argmax_first(&score(&scene, &regions)?);
        omissions += usize::from(!region_occupied(&scene, &regions[best]));
    }
    let rate = if trials == 0 { 0.0 } else { omissions as f64 / trials as f64 };
    Ok(OmissionReport { trials, omissions, rate })
}

pub fn measure_omission(fre: &ModelParams<f32>, cfg: &RunConfig, trials: usize, seed: u64) -> Result<OmissionReport> {
    let det = Detector { sgpa: fre, fre, kernel: cfg.kernel };
    measure_omission_with(cfg, trials, seed, |scene, regions| det.region_scores(scene.observation(), regions))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMethod {
    /// Region regressor picks the region, classifier picks the point.
    TwoStep,
    /// Classifier over a grid spanning the whole workspace.
    FullCoverage,
    /// Uniformly random region, classifier picks the point.
    RandomRegion,
}

impl RegionMethod {
    pub const ALL: [RegionMethod; 3] = [RegionMethod::TwoStep, RegionMethod::FullCoverage, RegionMethod::RandomRegion];

    pub fn name(self) -> &'static str {
        match self {
            RegionMethod::TwoStep => "fre_sgpa",
            RegionMethod::FullCoverage => "full_coverage_sgpa",
            RegionMethod::RandomRegion => "random_region_sgpa",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: RegionMethod,
    /// Model evaluations per decision.
    pub eval_count: usize,
    pub decisions: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Fraction of decisions whose region held no object; undefined without regions.
    pub omission: Option<f64>,
}

/// Run every method once per trial on the same sparse scene (one to
/// `compare_max_objects` objects) and tally success, omission and cost.
pub fn compare_region_methods(det: &Detector, cfg: &RunConfig, trials: usize, seed: u64) -> Result<Vec<MethodReport>> {
    let regions = region_candidates(cfg.scene.raster_h, cfg.scene.raster_w)?;
    let mut reports: Vec<MethodReport> = RegionMethod::ALL
        .iter()
        .map(|&method| MethodReport {
            method,
            eval_count: 0,
            decisions: trials,
            successes: 0,
            success_rate: 0.0,
            omission: (method != RegionMethod::FullCoverage).then_some(0.0),
        })
        .collect();
    for t in 0..trials {
        let scene = trial_scene(cfg, ObjectSet::Known, cfg.compare_max_objects, seed, t)?;
        let obs = scene.observation();
        for (m, report) in reports.iter_mut().enumerate() {
            let mut rng = stream(seed, "compare-policy", (t * 3 + m) as u64);
            let mut oracle = stream(seed, "compare-oracle", t as u64);
            let (pixel, region, evals) = match report.method {
                RegionMethod::TwoStep => {
                    let scores = det.region_scores(obs, &regions)?;
                    let r = argmax_first(&scores);
                    (det.choose_point(obs, &regions[r], &mut rng)?.pixel, Some(r), TWO_STEP_EVALS)
                }
                RegionMethod::RandomRegion => {
                    let r = rng.gen_range(0..regions.len());
                    (det.choose_point(obs, &regions[r], &mut rng)?.pixel, Some(r), GRID_POINTS)
                }
                RegionMethod::FullCoverage => {
                    let (pixel, _, evals) = full_coverage_choice(det.sgpa, obs, det.kernel, &mut rng)?;
                    (pixel, None, evals)
                }
            };
            report.eval_count = evals;
            let outcome = suction_oracle(&scene, pixel.0, pixel.1, &cfg.oracle, &mut oracle)?;
            report.successes += usize::from(outcome.success);
            if let (Some(r), Some(om)) = (region, report.omission.as_mut()) {
                *om += f64::from(u8::from(!region_occupied(&scene, &regions[r])));
            }
        }
    }
    for r in &mut reports {
        if trials > 0 {
            r.success_rate = r.successes as f64 / trials as f64;
            if let Some(om) = r.omission.as_mut() {
                *om /= trials as f64;
            }
        }
    }
    Ok(reports)
}

/// Comparison table as CSV with a fixed header.
pub fn comparison_csv(reports: &[MethodReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "eval_count", "omission", "success", "decisions"])?;
    for r in reports {
        w.write_record([
            r.method.name().to_string(),
            r.eval_count.to_string(),
            r.omission.map(|o| o.to_string()).unwrap_or_default(),
            r.success_rate.to_string(),
            r.decisions.to_string(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}
