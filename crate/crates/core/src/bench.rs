//! Stage-wise latency measurement at batch size 1.
//!
//! A run executes `warmup` untimed iterations followed by `reps` timed ones on
//! the calling thread. Each timed iteration records the wall-clock time of
//! every named stage (summed if a stage runs more than once per iteration) and
//! of the iteration as a whole. Quantiles use the nearest-rank definition.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::events::EventWindow;
use crate::geometry::{triangulate, StereoRig};
use crate::model::{forward, point_features, ModelParams};
use crate::raster::{RasterConfig, Rasterizer};
use crate::sampler::{derive_rng, sample_points_with};
use crate::simdr::argmax;

/// Minimum window span of the real-time scenario, in microseconds.
pub const REALTIME_THRESHOLD_US: f64 = 36_000.0;
pub const DEFAULT_WARMUP: usize = 10;

pub const PIPELINE_STAGES: [&str; 5] = ["rasterize", "sample", "forward", "decode", "triangulate"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageStats {
    pub name: String,
    pub count: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p90_us: f64,
    pub p99_us: f64,
}

impl StageStats {
    pub fn from_samples(name: &str, samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| -> f64 {
            if sorted.is_empty() {
                return f64::NAN;
            }
            let rank = (p * sorted.len() as f64).ceil().max(1.0) as usize;
            sorted[rank.min(sorted.len()) - 1]
        };
        StageStats {
            name: name.to_string(),
            count: sorted.len(),
            mean_us: if sorted.is_empty() {
                f64::NAN
            } else {
                sorted.iter().sum::<f64>() / sorted.len() as f64
            },
            p50_us: q(0.50),
            p90_us: q(0.90),
            p99_us: q(0.99),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub cpu: String,
    pub threads: usize,
    pub os: String,
}

impl Environment {
    pub fn detect() -> Self {
        let cpu = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| std::env::consts::ARCH.to_string());
        Environment {
            cpu,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            os: std::env::consts::OS.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub stages: Vec<StageStats>,
    pub end_to_end: StageStats,
    pub threshold_us: f64,
    /// End-to-end mean under the threshold (false when there is no data).
    pub pass: bool,
    pub insufficient_data: bool,
    pub warmup: usize,
    pub reps: usize,
    /// Timed iterations dropped because the clock went backwards.
    pub discarded: usize,
    pub environment: Environment,
}

impl LatencyReport {
    pub fn stage(&self, name: &str) -> Option<&StageStats> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,count,mean_us,p50_us,p90_us,p99_us\n");
        for s in self.stages.iter().chain(std::iter::once(&self.end_to_end)) {
            out.push_str(&format!(
                "{},{},{:.3},{:.3},{:.3},{:.3}\n",
                s.name, s.count, s.mean_us, s.p50_us, s.p90_us, s.p99_us
            ));
        }
        out
    }
}

/// Per-iteration stage clock handed to the benchmark body.
#[derive(Debug)]
pub struct StageTimer {
    names: Vec<&'static str>,
    elapsed: Vec<f64>,
    retrograde: bool,
}

impl StageTimer {
    fn new(names: &[&'static str]) -> Self {
        StageTimer {
            names: names.to_vec(),
            elapsed: vec![0.0; names.len()],
            retrograde: false,
        }
    }

    fn reset(&mut self) {
        self.elapsed.iter_mut().for_each(|e| *e = 0.0);
        self.retrograde = false;
    }

    /// Runs `f`, charging its wall time to stage `name`.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let idx = self
            .names
            .iter()
            .position(|n| *n == name)
            .unwrap_or_else(|| panic!("unknown stage {name}"));
        let start = Instant::now();
        let out = f();
        let end = Instant::now();
        match end.checked_duration_since(start) {
            Some(d) => self.elapsed[idx] += d.as_secs_f64() * 1e6,
            None => self.retrograde = true,
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub warmup: usize,
    pub reps: usize,
    pub threshold_us: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            warmup: DEFAULT_WARMUP,
            reps: 100,
            threshold_us: REALTIME_THRESHOLD_US,
        }
    }
}

/// Runs `body(timer, iteration)` `warmup + reps` times and summarizes the
/// timed iterations.
pub fn run_latency<F>(stages: &[&'static str], cfg: &BenchConfig, mut body: F) -> Result<LatencyReport>
where
    F: FnMut(&mut StageTimer, usize) -> Result<()>,
{
    let mut timer = StageTimer::new(stages);
    for i in 0..cfg.warmup {
        timer.reset();
        body(&mut timer, i)?;
    }
    let mut per_stage: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.reps); stages.len()];
    let mut total = Vec::with_capacity(cfg.reps);
    let mut discarded = 0;
    for i in 0..cfg.reps {
        timer.reset();
        let start = Instant::now();
        body(&mut timer, cfg.warmup + i)?;
        let end = Instant::now();
        let Some(d) = end.checked_duration_since(start) else {
            discarded += 1;
            continue;
        };
        if timer.retrograde {
            discarded += 1;
            continue;
        }
        for (s, e) in per_stage.iter_mut().zip(&timer.elapsed) {
            s.push(*e);
        }
        total.push(d.as_secs_f64() * 1e6);
    }
    let end_to_end = StageStats::from_samples("end_to_end", &total);
    let insufficient_data = total.is_empty();
    Ok(LatencyReport {
        stages: stages
            .iter()
            .zip(&per_stage)
            .map(|(n, s)| StageStats::from_samples(n, s))
            .collect(),
        pass: !insufficient_data && end_to_end.mean_us < cfg.threshold_us,
        end_to_end,
        threshold_us: cfg.threshold_us,
        insufficient_data,
        warmup: cfg.warmup,
        reps: cfg.reps,
        discarded,
        environment: Environment::detect(),
    })
}

/// Raw two-view input for one pipeline iteration.
#[derive(Debug, Clone)]
pub struct BenchInput {
    pub window_a: EventWindow,
    pub window_b: EventWindow,
    pub rig: StereoRig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub raster: RasterConfig,
    pub points: usize,
    pub seed: u64,
}

/// Times the full path from raw events of two views to a triangulated 3D
/// skeleton: rasterize, sample, forward (including feature scaling), argmax
/// decode and triangulation. Iteration `i` uses input `i % inputs.len()`.
pub fn bench_pipeline(
    inputs: &[BenchInput],
    params: &ModelParams,
    pipeline: &PipelineConfig,
    cfg: &BenchConfig,
) -> Result<LatencyReport> {
    if inputs.is_empty() {
        return Err(crate::error::Error::Empty("benchmark inputs".into()));
    }
    let model = params.config().clone();
    let mut rasterizer = Rasterizer::new();
    run_latency(&PIPELINE_STAGES, cfg, |timer, iter| {
        let input = &inputs[iter % inputs.len()];
        let mut joints = Vec::with_capacity(2);
        for (v, window) in [&input.window_a, &input.window_b].into_iter().enumerate() {
            let points = timer.stage("rasterize", || rasterizer.rasterize(window, &pipeline.raster));
            let sampled = timer.stage("sample", || {
                let mut rng = derive_rng(pipeline.seed, (iter * 2 + v) as u64);
                sample_points_with(&points, pipeline.points, &mut rng)
            })?;
            let out = timer.stage("forward", || {
                let f = point_features(
                    &sampled,
                    pipeline.raster.channels,
                    model.width,
                    model.height,
                    model.raw_features,
                );
                forward(&f, params)
            })?;
            let decoded = timer.stage("decode", || -> Result<Vec<[f64; 2]>> {
                (0..model.joints)
                    .map(|j| {
                        Ok([
                            argmax(out.logits_x.row(j))? as f64,
                            argmax(out.logits_y.row(j))? as f64,
                        ])
                    })
                    .collect()
            })?;
            joints.push(decoded);
        }
        timer.stage("triangulate", || {
            for j in 0..model.joints {
                // degenerate joints are masked downstream; latency is what matters here
                let _ = triangulate(&input.rig, joints[0][j], joints[1][j]);
            }
        });
        Ok(())
    })
}
