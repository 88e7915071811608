//! Captured training data: per-pick point samples, per-region samples, the
//! relabel and rotation rules applied before training, and on-disk storage.

mod augment;
mod region_label;
mod relabel;
mod samples;
mod split;
mod store;

pub use augment::{augment_rotations, rotate_input, rotate_patch, ROTATIONS};
pub use region_label::{make_region_label, predict_binary_map};
pub use relabel::{max_depth_step, relabel_high_gradient, DEFAULT_GRADIENT_THRESHOLD};
pub use samples::{Dataset, Manifest, PointSample, Record, RegionSample, FLAG_RELABELED};
pub use split::{split, split_indices};
pub use store::{load, save};
