//! Fixed-size random point sampling.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`), whose output
//! is specified and identical on every platform. Per-sample generators are
//! derived from a master seed by selecting ChaCha stream `index`, see
//! [`derive_rng`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::events::{LabeledSample, RasterizedPoint};

pub const DEFAULT_POINT_COUNTS: [usize; 4] = [1024, 2048, 4096, 7500];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub target_count: usize,
    pub seed: u64,
    pub min_points: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            target_count: 2048,
            seed: 0,
            min_points: 1024,
        }
    }
}

/// Generator for item `index` of a run seeded with `master`.
pub fn derive_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Draws `target` indices from `0..n`: without replacement (partial
/// Fisher-Yates) when `n >= target`, uniformly with replacement otherwise.
pub fn sample_indices<R: Rng + ?Sized>(n: usize, target: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if n >= target {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..target {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(target);
        Ok(idx)
    } else {
        Ok((0..target).map(|_| rng.random_range(0..n)).collect())
    }
}

pub fn sample_points_with<R: Rng + ?Sized>(
    points: &[RasterizedPoint],
    target: usize,
    rng: &mut R,
) -> Result<Vec<RasterizedPoint>> {
    Ok(sample_indices(points.len(), target, rng)?
        .into_iter()
        .map(|i| points[i])
        .collect())
}

pub fn sample_points(points: &[RasterizedPoint], cfg: &SamplerConfig) -> Result<Vec<RasterizedPoint>> {
    if cfg.target_count == 0 {
        return Err(Error::Invalid("target_count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_points_with(points, cfg.target_count, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Drops training samples whose pre-sampling point count is below
/// `min_points`. Test data always passes through.
pub fn filter_undersized(
    dataset: Vec<LabeledSample>,
    min_points: usize,
    split: Split,
) -> Vec<LabeledSample> {
    match split {
        Split::Test => dataset,
        Split::Train => dataset
            .into_iter()
            .filter(|s| s.raw_point_count >= min_points)
            .collect(),
    }
}
