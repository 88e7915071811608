pub mod candidates;
pub mod config;
pub mod datasets;
pub mod error;
pub mod fsutil;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod scenesim;

pub use error::{Error, Result};
