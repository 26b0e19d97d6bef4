//! Flat `key = value` run configuration.
//!
//! One file describes a whole experiment: the synthetic scene (or a recording
//! directory), preprocessing, model, training and benchmark settings. Lines
//! starting with `#` are comments. Command-line flags apply on top through
//! [`RunConfig::set`], so a file plus overrides reproduces any run.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bench::{BenchConfig, REALTIME_THRESHOLD_US};
use crate::dataset::DatasetConfig;
use crate::error::{Error, Result};
use crate::labeling::LabelPolicy;
use crate::model::{ModelConfig, TrainConfig, DESK_WIDTHS, DEFAULT_HEAD_LR_SCALE, DEFAULT_LR_SCHEDULE};
use crate::raster::{ChannelSet, RasterConfig};
use crate::sampler::SamplerConfig;
use crate::simdr::CodecConfig;
use crate::synth::{default_rig, SyntheticSceneConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Recording directory; synthetic data is generated when unset.
    pub data: Option<PathBuf>,
    /// Events per window over all cameras when slicing a recording.
    pub window_events: usize,
    pub train_windows: usize,
    pub test_windows: usize,

    pub window_ms: u64,
    pub gap_ms: u64,
    pub label_period_ms: u64,
    pub amplitude_px: f64,
    pub edge_rate: f64,
    pub noise_rate: f64,
    pub spread_mm: f64,
    pub pose_variation: f64,

    pub k: usize,
    pub channels: ChannelSet,
    pub points: usize,
    pub min_points: usize,
    pub labels: LabelPolicy,
    pub sigma: f64,
    pub round_labels: bool,

    pub widths: [usize; 4],
    pub raw_features: bool,
    pub epochs: usize,
    pub lr_schedule: Vec<(usize, f64)>,
    pub batch_size: usize,
    /// Draw a fresh point subset of every training view each epoch.
    pub resample: bool,
    pub head_lr_scale: f64,

    pub bench_reps: usize,
    pub bench_warmup: usize,
    pub threshold_us: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: None,
            window_events: 15_000,
            train_windows: 250,
            test_windows: 50,
            window_ms: 50,
            gap_ms: 10,
            label_period_ms: 10,
            amplitude_px: 4.0,
            edge_rate: 8.0,
            noise_rate: 2.0,
            spread_mm: 200.0,
            pose_variation: 0.0,
            k: 4,
            channels: ChannelSet::Xytpc,
            points: 2048,
            min_points: 1024,
            labels: LabelPolicy::Mean,
            sigma: 8.0,
            round_labels: false,
            widths: DESK_WIDTHS,
            raw_features: false,
            epochs: 30,
            lr_schedule: DEFAULT_LR_SCHEDULE.to_vec(),
            batch_size: 1,
            resample: true,
            head_lr_scale: DEFAULT_HEAD_LR_SCALE,
            bench_reps: 100,
            bench_warmup: 10,
            threshold_us: REALTIME_THRESHOLD_US,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Invalid(format!("{key}: cannot parse {value:?}")))
}

fn bool_value(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Invalid(format!("{key}: expected true or false, got {value:?}"))),
    }
}

/// `0:1e-4,15:1e-5,20:1e-6`
pub fn parse_schedule(value: &str) -> Result<Vec<(usize, f64)>> {
    let mut out: Vec<(usize, f64)> = value
        .split(',')
        .map(|part| {
            let (e, lr) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Invalid(format!("lr_schedule entry {part:?} is not epoch:rate")))?;
            Ok((num("lr_schedule", e.trim())?, num("lr_schedule", lr.trim())?))
        })
        .collect::<Result<_>>()?;
    out.sort_by_key(|s| s.0);
    if out.first().map(|s| s.0) != Some(0) {
        return Err(Error::Invalid("lr_schedule must start at epoch 0".into()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                location: format!("{origin}:{}", i + 1),
                message: "expected key = value".into(),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                location: format!("{origin}:{}", i + 1),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Applies one `key=value` pair; the same keys as the file format.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = num(key, value)?,
            "data" => self.data = (!value.is_empty()).then(|| PathBuf::from(value)),
            "window_events" => self.window_events = num(key, value)?,
            "train_windows" => self.train_windows = num(key, value)?,
            "test_windows" => self.test_windows = num(key, value)?,
            "window_ms" => self.window_ms = num(key, value)?,
            "gap_ms" => self.gap_ms = num(key, value)?,
            "label_period_ms" => self.label_period_ms = num(key, value)?,
            "amplitude_px" => self.amplitude_px = num(key, value)?,
            "edge_rate" => self.edge_rate = num(key, value)?,
            "noise_rate" => self.noise_rate = num(key, value)?,
            "spread_mm" => self.spread_mm = num(key, value)?,
            "pose_variation" => self.pose_variation = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "channels" => self.channels = value.parse()?,
            "points" => self.points = num(key, value)?,
            "min_points" => self.min_points = num(key, value)?,
            "labels" => self.labels = value.parse()?,
            "sigma" => self.sigma = num(key, value)?,
            "round_labels" => self.round_labels = bool_value(key, value)?,
            "widths" => {
                let w: Vec<usize> = value
                    .split(',')
                    .map(|s| num(key, s.trim()))
                    .collect::<Result<_>>()?;
                self.widths = w
                    .try_into()
                    .map_err(|_| Error::Invalid("widths needs exactly four values".into()))?;
            }
            "raw_features" => self.raw_features = bool_value(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr_schedule" => self.lr_schedule = parse_schedule(value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "resample" => self.resample = num(key, value)?,
            "head_lr_scale" => self.head_lr_scale = num(key, value)?,
            "bench_reps" => self.bench_reps = num(key, value)?,
            "bench_warmup" => self.bench_warmup = num(key, value)?,
            "threshold_us" => self.threshold_us = num(key, value)?,
            _ => return Err(Error::Invalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Serializes every key; `from_file` of the output reproduces `self`.
    pub fn to_text(&self) -> String {
        let sched: Vec<String> = self.lr_schedule.iter().map(|(e, r)| format!("{e}:{r:e}")).collect();
        let w = self.widths;
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        put("seed", self.seed.to_string());
        put("data", self.data.as_ref().map_or(String::new(), |p| p.display().to_string()));
        put("window_events", self.window_events.to_string());
        put("train_windows", self.train_windows.to_string());
        put("test_windows", self.test_windows.to_string());
        put("window_ms", self.window_ms.to_string());
        put("gap_ms", self.gap_ms.to_string());
        put("label_period_ms", self.label_period_ms.to_string());
        put("amplitude_px", format!("{:?}", self.amplitude_px));
        put("edge_rate", format!("{:?}", self.edge_rate));
        put("noise_rate", format!("{:?}", self.noise_rate));
        put("spread_mm", format!("{:?}", self.spread_mm));
        put("pose_variation", format!("{:?}", self.pose_variation));
        put("k", self.k.to_string());
        put("channels", self.channels.to_string());
        put("points", self.points.to_string());
        put("min_points", self.min_points.to_string());
        put("labels", self.labels.to_string());
        put("sigma", format!("{:?}", self.sigma));
        put("round_labels", self.round_labels.to_string());
        put("widths", format!("{},{},{},{}", w[0], w[1], w[2], w[3]));
        put("raw_features", self.raw_features.to_string());
        put("epochs", self.epochs.to_string());
        put("lr_schedule", sched.join(","));
        put("batch_size", self.batch_size.to_string());
        put("resample", self.resample.to_string());
        put("head_lr_scale", self.head_lr_scale.to_string());
        put("bench_reps", self.bench_reps.to_string());
        put("bench_warmup", self.bench_warmup.to_string());
        put("threshold_us", format!("{:?}", self.threshold_us));
        s
    }

    pub fn scene(&self) -> SyntheticSceneConfig {
        let mut s = SyntheticSceneConfig::new(default_rig(), self.seed);
        s.amplitude_px = self.amplitude_px;
        s.edge_rate = self.edge_rate;
        s.noise_rate = self.noise_rate;
        s.window_ms = self.window_ms;
        s.gap_ms = self.gap_ms;
        s.label_period_ms = self.label_period_ms;
        s.spread_mm = self.spread_mm;
        s.pose_variation = self.pose_variation;
        s
    }

    pub fn dataset(&self) -> Result<DatasetConfig> {
        Ok(DatasetConfig {
            raster: RasterConfig::new(self.k, self.channels)?,
            sampler: SamplerConfig {
                target_count: self.points,
                seed: self.seed,
                min_points: self.min_points,
            },
            policy: self.labels,
        })
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            widths: self.widths,
            raw_features: self.raw_features,
            ..ModelConfig::default()
        }
        .for_channels(self.channels)
    }

    pub fn codec(&self) -> Result<CodecConfig> {
        let mut c = CodecConfig::new(self.sigma, self.model().width, self.model().height)?;
        c.round_labels = self.round_labels;
        Ok(c)
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr_schedule: self.lr_schedule.clone(),
            seed: self.seed,
            batch_size: self.batch_size,
            head_lr_scale: self.head_lr_scale,
            ..TrainConfig::default()
        }
    }

    pub fn bench(&self) -> BenchConfig {
        BenchConfig {
            warmup: self.bench_warmup,
            reps: self.bench_reps,
            threshold_us: self.threshold_us,
        }
    }
}
