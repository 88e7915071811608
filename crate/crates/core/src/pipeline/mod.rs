//! The self-supervised picking loop: scheduled greedy/exploratory picks,
//! periodic relabel-train-test checkpoints, and the evaluation protocols.

mod detector;
mod eval;
mod learner;
mod logs;
mod schedule;

pub use detector::{
    argmax_first, full_coverage_axes, full_coverage_choice, Detector, EmptyResponse, PointChoice, TWO_STEP_EVALS,
};
pub use eval::{
    compare_region_methods, comparison_csv, final_test, measure_omission, measure_omission_with, region_occupied, MethodReport,
    OmissionReport, RegionMethod,
};
pub use learner::{run_learning, Learner};
pub use logs::{load_picklog, picklog_to_jsonl, CheckpointMetrics, MetricsLog, PickLog, PickMode, StopReason, TestReport};
pub use schedule::{greedy_fraction, ScheduleForm, ScheduleParams};
