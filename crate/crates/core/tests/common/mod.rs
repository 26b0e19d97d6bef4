//! Independent reference implementations shared by the integration and
//! acceptance tests. Nothing here calls the code under test for the value it
//! checks.
#![allow(dead_code)]

use std::collections::HashMap;

use evpc::events::{CameraGeometry, Event, EventWindow, RasterizedPoint};
use evpc::model::{backward, forward, kl_loss, JointTarget, ModelConfig, ModelGrads, ModelParams, Tensor2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random time-ordered window of `n` events on a `w x h` sensor. Pixels are
/// drawn from a small box so cells collect several events.
pub fn random_window(rng: &mut ChaCha8Rng, n: usize, w: u16, h: u16) -> EventWindow {
    let t0: u64 = rng.random_range(0..1_000_000);
    let span: u64 = match rng.random_range(0..10) {
        0 => 0,
        1 => rng.random_range(1..10),
        _ => rng.random_range(10..100_000),
    };
    let mut ts: Vec<u64> = (0..n).map(|_| t0 + rng.random_range(0..=span)).collect();
    ts.sort_unstable();
    let bw = rng.random_range(1..=w);
    let bh = rng.random_range(1..=h);
    let events = ts
        .into_iter()
        .map(|t| Event::new(rng.random_range(0..bw), rng.random_range(0..bh), t, rng.random_range(0..2)))
        .collect();
    // bounds may be wider than the events
    let lo = t0.saturating_sub(rng.random_range(0..3));
    EventWindow::new(events, 0, lo, t0 + span).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub t_sum: f64,
    pub p_acc: i32,
    pub e_cnt: u32,
}

/// Hash-map group-by: `(x, y, slice) -> aggregates`, slice from floating
/// point `floor(K * (t - t_min) / span)` clamped to `K - 1`.
pub fn raster_oracle(window: &EventWindow, k: usize) -> HashMap<(u16, u16, u8), Cell> {
    let t_min = window.t_min();
    let span = window.t_max() - t_min;
    let mut cells: HashMap<(u16, u16, u8), Cell> = HashMap::new();
    for e in window.events() {
        let (slice, t_norm) = if span == 0 {
            (0, 0.0)
        } else {
            let s = ((k as u64 * (e.t - t_min)) as f64 / span as f64).floor() as usize;
            (s.min(k - 1), (e.t - t_min) as f64 / span as f64)
        };
        let c = cells.entry((e.x, e.y, slice as u8)).or_insert(Cell {
            t_sum: 0.0,
            p_acc: 0,
            e_cnt: 0,
        });
        c.t_sum += t_norm;
        c.p_acc += if e.p == 1 { 1 } else { -1 };
        c.e_cnt += 1;
    }
    cells
}

/// Compares a rasterizer output with the oracle: integer fields exactly,
/// `t_avg` within `rel` relative error. Returns a description of the first
/// mismatch.
pub fn compare_raster(points: &[RasterizedPoint], oracle: &HashMap<(u16, u16, u8), Cell>, rel: f64) -> Result<(), String> {
    if points.len() != oracle.len() {
        return Err(format!("{} points, oracle has {} cells", points.len(), oracle.len()));
    }
    for p in points {
        let c = oracle
            .get(&(p.x, p.y, p.slice))
            .ok_or_else(|| format!("unexpected cell {:?}", (p.x, p.y, p.slice)))?;
        if p.p_acc != c.p_acc || p.e_cnt != c.e_cnt {
            return Err(format!("cell {:?}: got {p:?}, oracle {c:?}", (p.x, p.y, p.slice)));
        }
        let t = c.t_sum / f64::from(c.e_cnt);
        if (p.t_avg - t).abs() > rel * t.abs() {
            return Err(format!("cell {:?}: t_avg {} vs {}", (p.x, p.y, p.slice), p.t_avg, t));
        }
    }
    Ok(())
}

/// Nearest integer with exact half-points resolved downward, clamped to
/// `[0, len - 1]`.
pub fn nearest_oracle(c: f64, len: usize) -> usize {
    let f = c.floor();
    let r = if c - f > 0.5 { f + 1.0 } else { f };
    (r as usize).min(len - 1)
}

/// Double-loop MPJPE over mutually valid joints; samples with no such joint
/// are skipped.
pub fn mpjpe_oracle<const D: usize>(preds: &[(Vec<[f64; D]>, Vec<bool>)], gts: &[(Vec<[f64; D]>, Vec<bool>)]) -> f64 {
    let mut total = 0.0;
    let mut samples = 0;
    for s in 0..preds.len() {
        let mut sum = 0.0;
        let mut n = 0;
        for j in 0..preds[s].0.len() {
            if preds[s].1[j] && gts[s].1[j] {
                let mut sq = 0.0;
                for a in 0..D {
                    let d = preds[s].0[j][a] - gts[s].0[j][a];
                    sq += d * d;
                }
                sum += sq.sqrt();
                n += 1;
            }
        }
        if n > 0 {
            total += sum / n as f64;
            samples += 1;
        }
    }
    total / samples as f64
}

/// Projection through a 3x4 matrix written out longhand.
pub fn project_oracle(cam: &CameraGeometry, p: [f64; 3]) -> [f64; 2] {
    let m = &cam.projection;
    let u = m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + m[0][3];
    let v = m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + m[1][3];
    let w = m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + m[2][3];
    [u / w, v / w]
}

/// Random distribution targets for `joints` joints.
pub fn random_targets(rng: &mut ChaCha8Rng, joints: usize, w: usize, h: usize) -> Vec<Option<JointTarget>> {
    let dist = |rng: &mut ChaCha8Rng, n: usize| {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    };
    (0..joints)
        .map(|_| {
            Some(JointTarget {
                x: dist(rng, w),
                y: dist(rng, h),
            })
        })
        .collect()
}

pub fn loss_at(params: &ModelParams, x: &Tensor2D, targets: &[Option<JointTarget>]) -> f64 {
    let out = forward(x, params).unwrap();
    kl_loss(&out.logits_x, &out.logits_y, targets, 1.0).unwrap().loss
}

pub fn analytic_grad(params: &ModelParams, x: &Tensor2D, targets: &[Option<JointTarget>]) -> Vec<f64> {
    let out = forward(x, params).unwrap();
    let kl = kl_loss(&out.logits_x, &out.logits_y, targets, 1.0).unwrap();
    let mut g = ModelGrads::zeros_like(params);
    backward(&out.cache, params, &kl.grad_x, &kl.grad_y, &mut g).unwrap();
    g.data
}

/// Which ReLUs are active and which rows win each max pool. The loss is
/// smooth between two inputs with the same pattern.
pub fn activation_pattern(params: &ModelParams, x: &Tensor2D) -> (Vec<bool>, Vec<usize>) {
    let out = forward(x, params).unwrap();
    let relu = (0..4)
        .flat_map(|l| out.cache.hidden(l).data().iter().map(|&v| v > 0.0).collect::<Vec<_>>())
        .collect();
    (relu, out.cache.argmax_rows().to_vec())
}

/// Central-difference check of every parameter.
#[derive(Debug, Clone, Copy, Default)]
pub struct FdResult {
    /// Largest `|a - n| / max(|a|, |n|, floor)` over smooth parameters.
    pub max_error: f64,
    pub worst_index: usize,
    /// Parameters whose `+-eps` perturbation crosses a ReLU or max-pool
    /// switch, where the loss is not differentiable over the stencil.
    pub kinks: usize,
}

pub fn fd_check(params: &ModelParams, x: &Tensor2D, targets: &[Option<JointTarget>], eps: f64, floor: f64) -> FdResult {
    let analytic = analytic_grad(params, x, targets);
    let center = activation_pattern(params, x);
    let mut p = params.clone();
    let mut r = FdResult::default();
    for i in 0..params.len() {
        let orig = p.as_slice()[i];
        p.as_mut_slice()[i] = orig + eps;
        let up = loss_at(&p, x, targets);
        let smooth_up = activation_pattern(&p, x) == center;
        p.as_mut_slice()[i] = orig - eps;
        let down = loss_at(&p, x, targets);
        let smooth_down = activation_pattern(&p, x) == center;
        p.as_mut_slice()[i] = orig;
        if !(smooth_up && smooth_down) {
            r.kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if err > r.max_error {
            r.max_error = err;
            r.worst_index = i;
        }
    }
    r
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Tensor2D {
    let data = (0..n * c).map(|_| rng.random_range(0.0..1.0)).collect();
    Tensor2D::from_vec(n, c, data).unwrap()
}

/// Two cameras at random positions 2-6 m from a random target near the
/// origin, each with its own focal length. Returns the rig and a sampler for
/// points in the working volume.
pub fn random_rig(rng: &mut ChaCha8Rng) -> evpc::geometry::StereoRig {
    loop {
        let target = [rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0)];
        let cam = |rng: &mut ChaCha8Rng| {
            let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let el: f64 = rng.random_range(-0.6..0.6);
            let r: f64 = rng.random_range(2000.0..6000.0);
            let c = [
                target[0] + r * el.cos() * az.cos(),
                target[1] + r * el.sin(),
                target[2] + r * el.cos() * az.sin(),
            ];
            CameraGeometry::look_at(rng.random_range(150.0..600.0), c, target, [0.0, 1.0, 0.0], 346, 260).unwrap()
        };
        let a = cam(rng);
        let b = cam(rng);
        // keep the rays well separated: at least ~10 degrees between views
        let (ca, cb) = (a.center(), b.center());
        let da: Vec<f64> = (0..3).map(|i| ca[i] - target[i]).collect();
        let db: Vec<f64> = (0..3).map(|i| cb[i] - target[i]).collect();
        let dot: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
        let na = da.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = db.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (dot / (na * nb)).acos() > 0.17 {
            return evpc::geometry::StereoRig::new(a, b).unwrap();
        }
    }
}

/// Point in the working volume (within 800 mm of the origin per axis),
/// which lies in front of both cameras of [`random_rig`].
pub fn random_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.random_range(-800.0..800.0),
        rng.random_range(-800.0..800.0),
        rng.random_range(-800.0..800.0),
    ]
}

/// Initialized parameters with the zero biases replaced by small random
/// values. Zero biases put every dead-input row exactly on a ReLU kink, where
/// central differences see a one-sided slope the analytic gradient cannot.
pub fn generic_params(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut p = ModelParams::init(cfg, rng).unwrap();
    for v in p.as_mut_slice() {
        if *v == 0.0 {
            *v = rng.random_range(-0.1..0.1);
        }
    }
    p
}
