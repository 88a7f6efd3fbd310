//! File formats, parallel drivers and the command line for `curvematch-core`.

pub mod ablation;
pub mod cli;
pub mod error;
pub mod model;
pub mod parallel;
pub mod pgm;
pub mod pipeline;
pub mod report;
pub mod store;

pub use curvematch_core as core;
pub use error::{Error, Result};
