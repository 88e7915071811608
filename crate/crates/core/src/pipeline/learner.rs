use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::detector::{greedy_decision, Detector, GreedyPolicy, World};
use super::eval::{final_test, greedy_test, measure_omission};
use super::logs::{CheckpointMetrics, MetricsLog, PickLog, PickMode, StopReason};
use super::schedule::greedy_fraction;
use crate::candidates::{downsample_region, extract_patch, region_candidates, GRID_SIDE};
use crate::config::RunConfig;
use crate::datasets::{
    make_region_label, relabel_high_gradient, rotate_input, Dataset, PointSample, RegionSample, ROTATIONS,
};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::nn::{train_augmented, Example, HeadKind, ModelParams, Target, TrainConfig};
use crate::rng::{derive_seed, stream};
use crate::scenesim::{suction_oracle, ObjectSet, Observation};

/// State of the self-supervised loop: the live bin, both models, the captured
/// datasets and the logs.
pub struct Learner {
    pub cfg: RunConfig,
    world: World,
    pub sgpa: ModelParams<f32>,
    pub fre: ModelParams<f32>,
    pub points: Dataset<PointSample>,
    pub regions: Dataset<RegionSample>,
    /// Logged observations awaiting region labels.
    pending: Vec<(u64, Observation)>,
    pub picks: Vec<PickLog>,
    pub metrics: MetricsLog,
    n: u64,
    policy_rng: ChaCha8Rng,
    oracle_rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        Ok(Self {
            world: World::new(&cfg.scene, seed, "learn-scene", cfg.restock_on_rearrange)?,
            sgpa: ModelParams::init(HeadKind::Classification, derive_seed(seed, "sgpa-init", 0)),
            fre: ModelParams::init(HeadKind::Regression, derive_seed(seed, "fre-init", 0)),
            points: Dataset::new(Vec::new(), vec![seed]),
            regions: Dataset::new(Vec::new(), vec![seed]),
            pending: Vec::new(),
            picks: Vec::new(),
            metrics: MetricsLog::default(),
            n: 0,
            policy_rng: stream(seed, "policy", 0),
            oracle_rng: stream(seed, "oracle", 0),
            cfg,
        })
    }

    pub fn scene(&self) -> &crate::scenesim::DepthScene {
        &self.world.scene
    }

    pub fn scene_kinds(&self) -> Vec<crate::scenesim::ObjectKind> {
        self.world.scene.objects().iter().map(|o| o.kind).collect()
    }

    /// Picks executed so far.
    pub fn picks_done(&self) -> u64 {
        self.n
    }

    pub fn detector(&self) -> Detector<'_> {
        Detector { sgpa: &self.sgpa, fre: &self.fre, kernel: self.cfg.kernel }
    }

    /// Choose a point (model-driven with the scheduled probability, uniform
    /// otherwise), attempt the pick, record the sample and update the bin.
    pub fn pick_step(&mut self) -> Result<PickLog> {
        let start = Instant::now();
        let n = self.n;
        let greedy = self.policy_rng.gen::<f64>() < greedy_fraction(n, &self.cfg.schedule);
        let det = Detector { sgpa: &self.sgpa, fre: &self.fre, kernel: self.cfg.kernel };
        let (mode, scores, region, grid, pixel, map, fallback, rearrangements) = if greedy {
            let d = greedy_decision(&det, &mut self.world, &GreedyPolicy::from_config(&self.cfg), &mut self.policy_rng)?;
            let c = d.choice;
            (PickMode::Greedy, d.scores, d.region, c.grid, c.pixel, Some(c.map), c.fallback, d.rearrangements)
        } else {
            if self.world.is_empty() {
                match self.cfg.empty_response {
                    super::EmptyResponse::Stop => return Err(Error::EmptyBox),
                    super::EmptyResponse::Rearrange => self.world.refill()?,
                }
            }
            let scores = det.region_scores(self.world.scene.observation(), &self.world.regions)?;
            let region = self.policy_rng.gen_range(0..self.world.regions.len());
            let grid = (self.policy_rng.gen_range(0..GRID_SIDE), self.policy_rng.gen_range(0..GRID_SIDE));
            let pixel = self.world.regions[region].point(grid.0, grid.1).pixel;
            (PickMode::Random, scores, region, grid, pixel, None, false, 0)
        };

        let outcome = suction_oracle(&self.world.scene, pixel.0, pixel.1, &self.cfg.oracle, &mut self.oracle_rng)?;
        let obs = self.world.scene.observation();
        self.points.samples.push(PointSample {
            patch: extract_patch(obs, pixel.0, pixel.1)?,
            label: u8::from(outcome.success),
            relabeled: false,
            pick_index: n,
            pixel: (pixel.0 as u16, pixel.1 as u16),
        });
        let image_logged = n % self.cfg.image_log_stride == 0;
        if image_logged {
            self.pending.push((n, obs.clone()));
        }
        self.world.record_attempt(pixel, &outcome)?;
        self.n += 1;

        let origin = self.world.regions[region];
        let log = PickLog {
            n,
            mode,
            fallback,
            region,
            region_origin: (origin.row, origin.col),
            grid,
            pixel,
            outcome,
            fre_scores: scores,
            binary_map: map,
            rearrangements,
            image_logged,
            wall_time_ms: self.cfg.log_wall_time.then(|| start.elapsed().as_secs_f64() * 1e3),
        };
        self.picks.push(log.clone());
        Ok(log)
    }

    fn train_config(&self, base: &TrainConfig, warm: usize) -> TrainConfig {
        if self.metrics.checkpoints.is_empty() {
            base.clone()
        } else {
            base.clone().with_epochs(warm)
        }
    }

    /// Relabel, train the classifier, label pending observations with it, train
    /// the regressor, then measure greedy success on fresh scenes.
    pub fn checkpoint(&mut self) -> Result<CheckpointMetrics> {
        let seed = self.cfg.seed;
        let index = self.metrics.checkpoints.len() as u64;

        self.points = relabel_high_gradient(&self.points, self.cfg.relabel_threshold);
        let (floor, depth) = (self.cfg.scene.floor_depth, self.cfg.scene.box_depth);
        let point_examples: Vec<Example> = self
            .points
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| Example { input: s.patch.to_model_input(floor, depth), target: Target::Class(s.label), group: i as u64 })
            .collect();
        let rotate = |input: &crate::nn::ModelInput, key: u64| rotate_input(input, (key % ROTATIONS as u64) as usize);
        let sgpa_cfg = self.train_config(&self.cfg.sgpa, self.cfg.sgpa_warm_epochs);
        let (sgpa, sgpa_hist) =
            train_augmented(self.sgpa.clone(), &point_examples, &sgpa_cfg, derive_seed(seed, "sgpa-train", index), Some(&rotate))?;
        self.sgpa = sgpa;

        let regions = region_candidates(self.cfg.scene.raster_h, self.cfg.scene.raster_w)?;
        for (n, obs) in std::mem::take(&mut self.pending) {
            for r in &regions {
                let score = make_region_label(&self.sgpa, &obs, r)?;
                self.regions.samples.push(RegionSample {
                    image: downsample_region(&obs, r)?,
                    score,
                    pick_index: n,
                    region: (r.row as u16, r.col as u16),
                });
            }
        }
        let region_examples: Vec<Example> = self
            .regions
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| Example { input: s.image.to_model_input(floor, depth), target: Target::Score(s.score), group: i as u64 })
            .collect();
        let fre_cfg = self.train_config(&self.cfg.fre, self.cfg.fre_warm_epochs);
        let (fre, fre_hist) = train_augmented(self.fre.clone(), &region_examples, &fre_cfg, derive_seed(seed, "fre-train", index), None)?;
        self.fre = fre;

        let det = self.detector();
        let test = greedy_test(&det, &self.cfg, &self.cfg.scene, self.cfg.checkpoint_test_picks, derive_seed(seed, "checkpoint-test", index))?;
        let omission = measure_omission(&self.fre, &self.cfg, self.cfg.omission_trials, derive_seed(seed, "checkpoint-omission", index))?;

        let since = self.picks.iter().rev().take_while(|p| p.n >= self.metrics.checkpoints.last().map_or(0, |c| c.n));
        let (mut tried, mut ok) = (0usize, 0usize);
        for p in since {
            tried += 1;
            ok += usize::from(p.outcome.success);
        }
        let manifest = self.points.manifest();
        let sgpa_last = sgpa_hist.last().cloned();
        let fre_last = fre_hist.last().cloned();
        let m = CheckpointMetrics {
            n: self.n,
            success_rate: test.success_rate,
            test_successes: test.successes,
            test_picks: test.picks,
            learning_success_rate: if tried == 0 { 0.0 } else { ok as f64 / tried as f64 },
            greedy_fraction: greedy_fraction(self.n, &self.cfg.schedule),
            sgpa_train_loss: sgpa_last.as_ref().map_or(f64::NAN, |e| e.train_loss),
            sgpa_val_loss: sgpa_last.as_ref().and_then(|e| e.val_loss),
            sgpa_val_acc: sgpa_last.as_ref().and_then(|e| e.val_accuracy),
            fre_train_loss: fre_last.as_ref().map_or(f64::NAN, |e| e.train_loss),
            fre_val_mse: fre_last.as_ref().and_then(|e| e.val_loss),
            omission: omission.rate,
            point_samples: manifest.count,
            positives: manifest.positives,
            relabeled: manifest.relabeled,
            region_samples: self.regions.len(),
        };
        log::info!(
            "checkpoint n={} success={:.3} omission={:.3} points={} regions={}",
            m.n,
            m.success_rate,
            m.omission,
            m.point_samples,
            m.region_samples
        );
        self.metrics.checkpoints.push(m.clone());
        Ok(m)
    }

    /// Write metrics, pick log, weights, datasets and the effective config into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("config.json"), self.cfg.to_json().as_bytes())?;
        self.metrics.save(&dir.join("metrics.csv"), &dir.join("metrics.json"))?;
        write_atomic(&dir.join("picklog.jsonl"), &super::logs::picklog_to_jsonl(&self.picks)?)?;
        crate::nn::io::save(&self.sgpa, &dir.join("sgpa.weights"))?;
        crate::nn::io::save(&self.fre, &dir.join("fre.weights"))?;
        crate::datasets::save(&self.points, &dir.join("points"))?;
        crate::datasets::save(&self.regions, &dir.join("regions"))?;
        Ok(())
    }
}

/// Full loop: pick, checkpoint every `checkpoint_every` picks, stop at
/// `max_picks` or once `stop_patience` consecutive checkpoints reach
/// `stop_threshold`, then run the final known-set and unseen-set tests.
pub fn run_learning(cfg: RunConfig) -> Result<Learner> {
    let mut learner = Learner::new(cfg)?;
    let cfg = learner.cfg.clone();
    let mut streak = 0;
    while learner.picks_done() < cfg.max_picks {
        match learner.pick_step() {
            Ok(_) => {}
            Err(Error::EmptyBox) => {
                learner.metrics.stop_reason = StopReason::EmptyBox;
                break;
            }
            Err(e) => return Err(e),
        }
        if learner.picks_done() % cfg.checkpoint_every == 0 {
            let m = learner.checkpoint()?;
            streak = if m.success_rate >= cfg.stop_threshold { streak + 1 } else { 0 };
            if streak >= cfg.stop_patience {
                learner.metrics.stop_reason = StopReason::Threshold;
                break;
            }
        }
    }
    if !learner.metrics.checkpoints.is_empty() {
        let det = learner.detector();
        let known = final_test(&det, &cfg, ObjectSet::Known, cfg.final_test_picks, derive_seed(cfg.seed, "final-known", 0))?;
        let unseen = final_test(&det, &cfg, ObjectSet::Unseen, cfg.final_test_picks, derive_seed(cfg.seed, "final-unseen", 0))?;
        learner.metrics.final_known = Some(known);
        learner.metrics.final_unseen = Some(unseen);
    }
    Ok(learner)
}
