//! Memory-augmented prototype network for joint semantic and instance
//! segmentation of point clouds.
//!
//! A shared per-point encoder feeds two decoders. Their features query a
//! learnable prototype memory and only the retrieved features reach the
//! semantic classifier and the instance embedding head. At inference the
//! embeddings are grouped with mean-shift and overlapping blocks are stitched
//! back into room-level instances.
//!
//! Runnable walkthroughs of each capability live in `examples/`.

pub mod cli;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod grouping;
pub mod losses;
pub mod memory;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod scenes;
pub mod training;

pub use error::{Error, FormatError, Result};
