//! Event-camera human pose estimation on rasterized event point clouds.
//!
//! The pipeline turns raw `(x, y, t, p)` streams into constant-count windows,
//! rasterizes each window into K time slices of per-pixel points, samples a
//! fixed point count, regresses per-joint 1D heat vectors with a small
//! point-based network and triangulates two views into 3D joints.

pub mod ablation;
pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod events;
pub mod experiment;
pub mod geometry;
pub mod labeling;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod sampler;
pub mod simdr;
pub mod synth;

pub use error::{Error, Result};
