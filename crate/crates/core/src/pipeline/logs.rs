use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidates::BinaryMap;
use crate::error::Result;
use crate::fsutil::write_atomic;
use crate::scenesim::PickOutcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PickMode {
    Greedy,
    Random,
}

/// One executed pick of the learning loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PickLog {
    pub n: u64,
    pub mode: PickMode,
    /// Greedy pick whose binary map was empty, so the point was drawn at random.
    pub fallback: bool,
    pub region: usize,
    pub region_origin: (usize, usize),
    pub grid: (usize, usize),
    pub pixel: (usize, usize),
    pub outcome: PickOutcome,
    pub fre_scores: Vec<f32>,
    /// Classifier output over the chosen region (greedy picks only).
    pub binary_map: Option<BinaryMap>,
    /// Empty-box rearrangements triggered before this pick.
    pub rearrangements: u32,
    /// Whether the full observation was kept for region labelling.
    pub image_logged: bool,
    pub wall_time_ms: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub picks: usize,
    pub successes: usize,
    pub success_rate: f64,
}

impl TestReport {
    pub fn new(picks: usize, successes: usize) -> Self {
        let success_rate = if picks == 0 { 0.0 } else { successes as f64 / picks as f64 };
        Self { picks, successes, success_rate }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetrics {
    /// Picks executed when the checkpoint ran.
    pub n: u64,
    pub success_rate: f64,
    pub test_successes: usize,
    pub test_picks: usize,
    /// Success rate of the learning picks since the previous checkpoint.
    pub learning_success_rate: f64,
    pub greedy_fraction: f64,
    pub sgpa_train_loss: f64,
    pub sgpa_val_loss: Option<f64>,
    pub sgpa_val_acc: Option<f64>,
    pub fre_train_loss: f64,
    pub fre_val_mse: Option<f64>,
    pub omission: f64,
    pub point_samples: usize,
    pub positives: usize,
    pub relabeled: usize,
    pub region_samples: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    #[default]
    MaxPicks,
    Threshold,
    EmptyBox,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub checkpoints: Vec<CheckpointMetrics>,
    pub stop_reason: StopReason,
    pub final_known: Option<TestReport>,
    pub final_unseen: Option<TestReport>,
}

const CSV_HEADER: [&str; 17] = [
    "n",
    "success_rate",
    "test_successes",
    "test_picks",
    "learning_success_rate",
    "greedy_fraction",
    "sgpa_train_loss",
    "sgpa_val_loss",
    "sgpa_val_acc",
    "fre_train_loss",
    "fre_val_mse",
    "omission",
    "point_samples",
    "positives",
    "relabeled",
    "region_samples",
    "stop_reason",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsLog {
    /// One row per checkpoint; the stop reason is filled on the last row only.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        let last = self.checkpoints.len().saturating_sub(1);
        for (i, c) in self.checkpoints.iter().enumerate() {
            let stop = if i == last { serde_json::to_value(self.stop_reason)?.as_str().unwrap_or_default().to_string() } else { String::new() };
            w.write_record([
                c.n.to_string(),
                c.success_rate.to_string(),
                c.test_successes.to_string(),
                c.test_picks.to_string(),
                c.learning_success_rate.to_string(),
                c.greedy_fraction.to_string(),
                c.sgpa_train_loss.to_string(),
                opt(c.sgpa_val_loss),
                opt(c.sgpa_val_acc),
                c.fre_train_loss.to_string(),
                opt(c.fre_val_mse),
                c.omission.to_string(),
                c.point_samples.to_string(),
                c.positives.to_string(),
                c.relabeled.to_string(),
                c.region_samples.to_string(),
                stop,
            ])?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }

    pub fn save(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        write_atomic(csv_path, &self.to_csv()?)?;
        write_atomic(json_path, &serde_json::to_vec_pretty(self)?)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

pub fn picklog_to_jsonl(picks: &[PickLog]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for p in picks {
        serde_json::to_writer(&mut out, p)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn load_picklog(path: &Path) -> Result<Vec<PickLog>> {
    std::fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}
