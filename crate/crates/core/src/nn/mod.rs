//! Two-stream convolutional networks written from scratch: the point classifier
//! (pickable / not pickable) and the region regressor (fraction of pickable points).

pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod model;
mod ops;
pub mod optim;
pub mod real;
pub mod train;

pub use gradcheck::{check_heads, grad_check, GradCheckReport};
pub use loss::{LossKind, Target};
pub use model::{architecture, ForwardCache, HeadKind, InputBatch, ModelInput, ModelParams, INPUT_PLANE, INPUT_SIDE};
pub use optim::{OptimizerKind, OptimizerState};
pub use real::Real;
pub use train::{train, train_augmented, Augment, EpochStats, Example, History, TrainConfig};
