//! Partial curve-pattern identification without the standard library.
//!
//! A fragmentary binary curve pattern (a *sherd template*: curve raster plus
//! validity mask) is matched against a catalog of full binary designs in two
//! stages:
//!
//! 1. [`stage1`] scores every translation and integer rotation of the template
//!    on every design with a masked sum of squared differences, evaluated
//!    through FFT cross-correlation, and keeps the `K` best non-adjacent local
//!    minima per design.
//! 2. [`stage2`] re-ranks those candidates with a weight-tied convolutional
//!    embedding trained with a contrastive loss, averaging the embedding
//!    distance over a fixed set of simultaneous augmentations.
//!
//! [`corpus`] generates deterministic synthetic designs and degraded sherds,
//! and [`eval`] carries the CMC metric and the baseline rankers.
//!
//! Everything here needs only `alloc`; file formats, threading and the
//! command line live in the `curvematch` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod fft;
pub mod image;
mod math;
pub mod net;
pub mod stage1;
pub mod stage2;
pub mod transform;

pub use error::{Error, Result};
pub use image::{BinaryImage, Catalog, Design, DesignId, Pose, SherdTemplate};
pub use stage1::{Candidate, MatchConfig};
