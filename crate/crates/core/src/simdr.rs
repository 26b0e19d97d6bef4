//! Per-axis 1D Gaussian heat-vector coding of joint coordinates.
//!
//! A joint at sub-pixel `(x', y')` becomes two vectors of length `W` and `H`
//! holding a Gaussian of standard deviation `sigma` centered on the continuous
//! coordinate, min-max rescaled so the peak is 1. Decoding is an argmax per
//! axis, ties resolved toward the lowest index.

use crate::error::{Error, Result};
use crate::events::Skeleton2D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecConfig {
    pub sigma: f64,
    pub width: usize,
    pub height: usize,
    /// Round label coordinates to integer pixels before encoding.
    pub round_labels: bool,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            sigma: 8.0,
            width: crate::events::DEFAULT_WIDTH as usize,
            height: crate::events::DEFAULT_HEIGHT as usize,
            round_labels: false,
        }
    }
}

impl CodecConfig {
    pub fn new(sigma: f64, width: usize, height: usize) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Invalid(format!("sigma must be positive, got {sigma}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Invalid("heat-vector lengths must be positive".into()));
        }
        Ok(CodecConfig {
            sigma,
            width,
            height,
            round_labels: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatVectorPair {
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub joint_index: usize,
}

/// Gaussian density at every index of a length-`len` vector, then min-max
/// rescaled to `[0, 1]`.
pub fn gaussian_vector(center: f64, sigma: f64, len: usize) -> Vec<f64> {
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    let denom = 2.0 * sigma * sigma;
    let mut v: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - center;
            norm * (-(d * d) / denom).exp()
        })
        .collect();
    min_max(&mut v);
    v
}

fn min_max(v: &mut [f64]) {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    if range > 0.0 {
        for x in v.iter_mut() {
            *x = (*x - lo) / range;
        }
    } else {
        // constant vector (length 1): every entry is the peak
        v.iter_mut().for_each(|x| *x = 1.0);
    }
}

/// Encodes one joint. Coordinates outside `[0, W) x [0, H)` are rejected.
pub fn encode(joint: [f64; 2], joint_index: usize, cfg: &CodecConfig) -> Result<HeatVectorPair> {
    let [mut x, mut y] = joint;
    if !(x >= 0.0 && x < cfg.width as f64) {
        return Err(Error::CoordinateRange {
            value: x,
            limit: cfg.width,
        });
    }
    if !(y >= 0.0 && y < cfg.height as f64) {
        return Err(Error::CoordinateRange {
            value: y,
            limit: cfg.height,
        });
    }
    if cfg.round_labels {
        x = nearest_index(x, cfg.width) as f64;
        y = nearest_index(y, cfg.height) as f64;
    }
    Ok(HeatVectorPair {
        vx: gaussian_vector(x, cfg.sigma, cfg.width),
        vy: gaussian_vector(y, cfg.sigma, cfg.height),
        joint_index,
    })
}

/// Encodes every valid joint; masked joints yield `None`.
pub fn encode_skeleton(skeleton: &Skeleton2D, cfg: &CodecConfig) -> Result<Vec<Option<HeatVectorPair>>> {
    skeleton
        .joints
        .iter()
        .zip(&skeleton.valid)
        .enumerate()
        .map(|(j, (xy, &valid))| {
            if valid {
                encode(*xy, j, cfg).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Index of the maximum; ties go to the lowest index. NaN is an error.
pub fn argmax(v: &[f64]) -> Result<usize> {
    if v.is_empty() {
        return Err(Error::Empty("heat-vector".into()));
    }
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x.is_nan() {
            return Err(Error::NanPrediction(i));
        }
        if x > v[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn decode(pair: &HeatVectorPair) -> Result<(usize, usize)> {
    Ok((argmax(&pair.vx)?, argmax(&pair.vy)?))
}

/// The index `decode(encode(c))` lands on: round to nearest with exact
/// half-points going down, clamped to the vector.
pub fn nearest_index(c: f64, len: usize) -> usize {
    let r = (c - 0.5).ceil().max(0.0) as usize;
    r.min(len - 1)
}

/// Normalizes each axis to sum to 1, for use as a KL-divergence target.
pub fn kl_target_prep(pair: &HeatVectorPair) -> (Vec<f64>, Vec<f64>) {
    (to_distribution(&pair.vx), to_distribution(&pair.vy))
}

pub fn to_distribution(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> CodecConfig {
        CodecConfig::default()
    }

    #[test]
    fn integer_center_peaks_at_one() {
        for x in [0usize, 1, 57, 172, 345] {
            let p = encode([x as f64, 10.0], 0, &cfg()).unwrap();
            assert_eq!(argmax(&p.vx).unwrap(), x);
            assert_eq!(p.vx[x], 1.0);
            assert!(p.vx.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn gaussian_ratio_and_symmetry_before_rescale() {
        // pre-normalization ratio is exp(-d^2 / 2 sigma^2) = exp(-d^2 / 128)
        let c = 170.0;
        let sigma: f64 = 8.0;
        let raw = |i: f64| (-(i - c) * (i - c) / (2.0 * sigma * sigma)).exp();
        for d in 1..20 {
            let d = d as f64;
            assert!((raw(c + d) / raw(c) - (-d * d / 128.0).exp()).abs() < 1e-15);
            assert_eq!(raw(c + d), raw(c - d));
        }
        // and the min-max output keeps the symmetry around an interior center
        let v = gaussian_vector(c, sigma, 346);
        for d in 1..100 {
            assert!((v[170 + d] - v[170 - d]).abs() < 1e-15);
        }
    }

    #[test]
    fn sub_pixel_center_dense_oracle() {
        // direct evaluation of the density at every index with explicit
        // normalization constant, then min-max
        let center = 123.4;
        let sigma = 8.0f64;
        let dense: Vec<f64> = (0..346)
            .map(|i| {
                let d = i as f64 - center;
                (-(d * d) / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
            })
            .collect();
        let lo = dense.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = dense.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p = encode([center, 0.0], 0, &cfg()).unwrap();
        for (i, v) in p.vx.iter().enumerate() {
            assert!((v - (dense[i] - lo) / (hi - lo)).abs() < 1e-12);
        }
        assert_eq!(argmax(&p.vx).unwrap(), 123);
    }

    #[test]
    fn half_points_resolve_down() {
        let p = encode([100.5, 20.5], 0, &cfg()).unwrap();
        assert_eq!(decode(&p).unwrap(), (100, 20));
        assert_eq!(nearest_index(100.5, 346), 100);
        assert_eq!(nearest_index(100.75, 346), 101);
        assert_eq!(nearest_index(345.75, 346), 345);
    }

    #[test]
    fn decode_one_hot_and_uniform() {
        let mut v = vec![0.0; 100];
        v[57] = 1.0;
        let pair = HeatVectorPair {
            vx: v.clone(),
            vy: vec![0.3; 4],
            joint_index: 0,
        };
        assert_eq!(decode(&pair).unwrap(), (57, 0));
    }

    #[test]
    fn decode_rejects_nan() {
        let pair = HeatVectorPair {
            vx: vec![0.0, f64::NAN],
            vy: vec![1.0],
            joint_index: 0,
        };
        assert!(matches!(decode(&pair), Err(Error::NanPrediction(1))));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(encode([346.0, 0.0], 0, &cfg()).is_err());
        assert!(encode([-0.1, 0.0], 0, &cfg()).is_err());
        assert!(encode([0.0, 260.0], 0, &cfg()).is_err());
    }

    #[test]
    fn distribution_sums_to_one() {
        let p = encode([33.3, 250.9], 0, &cfg()).unwrap();
        let (dx, dy) = kl_target_prep(&p);
        assert!((dx.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((dy.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(to_distribution(&[2.0; 4]), vec![0.25; 4]);
        // KL(t || t) = 0
        let kl: f64 = dx
            .iter()
            .filter(|&&t| t > 0.0)
            .map(|&t| t * (t / t).ln())
            .sum();
        assert_eq!(kl, 0.0);
    }

    #[test]
    fn shift_equivariant_in_interior() {
        let sigma = 8.0;
        // centers (and their +1 shift) stay at least 3 sigma from both edges
        for base in [24.0, 100.25, 200.7, 320.0] {
            let a = gaussian_vector(base, sigma, 346);
            let b = gaussian_vector(base + 1.0, sigma, 346);
            for i in 1..346 {
                assert!((b[i] - a[i - 1]).abs() < 1e-12, "base {base} i {i}");
            }
        }
    }

    #[test]
    fn monotone_decay_from_peak() {
        let v = gaussian_vector(77.3, 8.0, 346);
        let peak = argmax(&v).unwrap();
        assert!(v[..=peak].windows(2).all(|w| w[0] <= w[1]));
        assert!(v[peak..].windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn round_labels_flag() {
        let mut c = cfg();
        c.round_labels = true;
        let p = encode([10.4, 10.6], 0, &c).unwrap();
        assert_eq!(p.vx[10], 1.0);
        assert_eq!(p.vy[11], 1.0);
    }
}
