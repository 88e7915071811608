//! Run configuration: every tunable of the simulator, detector, schedule and
//! training loop, loadable from JSON with per-key defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::candidates::{KernelE, GRID_POINTS};
use crate::datasets::DEFAULT_GRADIENT_THRESHOLD;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::pipeline::{ScheduleParams, EmptyResponse};
use crate::scenesim::{OracleParams, SceneConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream of a run derives from it.
    pub seed: u64,
    pub scene: SceneConfig,
    pub oracle: OracleParams,
    pub schedule: ScheduleParams,
    pub kernel: KernelE,
    /// Point classifier training; `epochs` is the budget of the first checkpoint.
    pub sgpa: TrainConfig,
    /// Region regressor training; `epochs` is the budget of the first checkpoint.
    pub fre: TrainConfig,
    /// Epochs for later checkpoints, which continue from the previous weights.
    pub sgpa_warm_epochs: usize,
    pub fre_warm_epochs: usize,
    pub max_picks: u64,
    pub checkpoint_every: u64,
    pub checkpoint_test_picks: usize,
    /// Stop learning once a checkpoint test reaches this success rate.
    pub stop_threshold: f64,
    /// Consecutive checkpoints at or above `stop_threshold` needed to stop.
    pub stop_patience: usize,
    pub final_test_picks: usize,
    pub omission_trials: usize,
    pub compare_trials: usize,
    /// Scenes used by the method comparison hold between one and this many objects.
    pub compare_max_objects: usize,
    /// A best region score below this signals an empty box.
    pub empty_threshold: f64,
    pub empty_response: EmptyResponse,
    /// Consecutive empty-box rearrangements before picking anyway.
    pub empty_retries: u32,
    /// Greedy picks skip grid points this close (pixels) to a failed attempt
    /// until the scene changes; 0 disables the memory.
    pub failure_avoid_radius: usize,
    /// Periodic rearrangement returns picked objects and re-scatters a full bin;
    /// when false only the remaining objects are re-posed.
    pub restock_on_rearrange: bool,
    /// Keep the full observation of every this-many-th pick for region labels.
    pub image_log_stride: u64,
    pub relabel_threshold: f32,
    /// Record per-pick wall-clock time in the pick log (makes logs non-reproducible).
    pub log_wall_time: bool,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            scene: SceneConfig::default(),
            oracle: OracleParams::default(),
            schedule: ScheduleParams::default(),
            kernel: KernelE::Symmetric,
            sgpa: TrainConfig::classifier(),
            fre: TrainConfig::regressor(),
            sgpa_warm_epochs: 20,
            fre_warm_epochs: 60,
            max_picks: 1000,
            checkpoint_every: 100,
            checkpoint_test_picks: 50,
            stop_threshold: 0.90,
            stop_patience: 2,
            final_test_picks: 150,
            omission_trials: 200,
            compare_trials: 100,
            compare_max_objects: 2,
            empty_threshold: 3.0 / GRID_POINTS as f64,
            empty_response: EmptyResponse::Rearrange,
            empty_retries: 3,
            failure_avoid_radius: 7,
            restock_on_rearrange: true,
            image_log_stride: 10,
            relabel_threshold: DEFAULT_GRADIENT_THRESHOLD,
            log_wall_time: false,
            output_dir: PathBuf::from("runs/latest"),
        }
    }
}

/// Overlay `patch` onto `base` key by key. Objects whose `kind` tag changes are
/// replaced wholesale so variant-specific defaults do not leak across variants.
fn overlay(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let retag = matches!((b.get("kind"), p.get("kind")), (Some(x), Some(y)) if x != y);
            if retag {
                b.clear();
            }
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Parse a JSON document; keys that are absent keep their defaults and
    /// unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let patch: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !patch.is_object() {
            return Err(Error::Config("configuration must be a JSON object".into()));
        }
        let mut merged = serde_json::to_value(Self::default())?;
        overlay(&mut merged, patch);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        self.scene.validate()?;
        self.schedule.validate()?;
        if self.scene.raster_h < crate::candidates::REGION_SIZE || self.scene.raster_w < crate::candidates::REGION_SIZE {
            return bad("raster must hold a 100x100 region");
        }
        if self.checkpoint_every == 0 || self.image_log_stride == 0 {
            return bad("checkpoint_every and image_log_stride must be positive");
        }
        if self.stop_patience == 0 {
            return bad("stop_patience must be positive");
        }
        if !(0.0..=1.0).contains(&self.stop_threshold) || !(0.0..=1.0).contains(&self.empty_threshold) {
            return bad("thresholds must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.oracle.noise) {
            return bad("oracle noise must lie in [0, 1]");
        }
        if self.compare_max_objects == 0 {
            return bad("compare_max_objects must be positive");
        }
        for t in [&self.sgpa, &self.fre] {
            if t.batch_size == 0 || !(t.learning_rate > 0.0) || !(0.0..=1.0).contains(&t.train_ratio) {
                return bad("training needs a positive batch size and learning rate and a ratio in [0, 1]");
            }
        }
        if !(self.relabel_threshold > 0.0) {
            return bad("relabel_threshold must be positive");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OptimizerKind;
    use crate::pipeline::ScheduleForm;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_override_keeps_siblings() {
        let cfg = RunConfig::from_json(r#"{"seed": 9, "scene": {"num_objects": 4}, "schedule": {"form": "literal"}, "fre": {"epochs": 5}}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scene.num_objects, 4);
        assert_eq!(cfg.scene.raster_w, 300);
        assert_eq!(cfg.schedule.form, ScheduleForm::Literal);
        assert_eq!(cfg.fre.epochs, 5);
        assert_eq!(cfg.fre.optimizer, OptimizerKind::adam());
    }

    #[test]
    fn optimizer_variant_switch() {
        let cfg = RunConfig::from_json(r#"{"sgpa": {"optimizer": {"kind": "adam"}}}"#).unwrap();
        assert_eq!(cfg.sgpa.optimizer, OptimizerKind::adam());
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(RunConfig::from_json(r#"{"sede": 1}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"scene": {"pixels": 1}}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json("{ seed: 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"checkpoint_every": 0}"#), Err(Error::Config(_))));
    }

    #[test]
    fn serialized_default_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
