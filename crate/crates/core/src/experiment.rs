//! End-to-end runs driven by a [`RunConfig`]: data, training, evaluation and
//! latency.

use std::collections::HashMap;

use crate::bench::{bench_pipeline, BenchInput, LatencyReport, PipelineConfig};
use crate::config::RunConfig;
use crate::dataset::{flatten, label_group, LabeledWindow, Recording};
use crate::error::{Error, Result};
use crate::events::{CameraGeometry, WindowGroup, WindowMode};
use crate::geometry::{skeleton_to_3d, StereoRig};
use crate::labeling::LabelTrack;
use crate::metrics::{mpjpe_2d, mpjpe_3d, EvalReport};
use crate::model::{predict, prepare_sample, train, ModelParams, PointPool, PreparedSample, TrainOutcome};
use crate::events::RasterizedPoint;
use crate::raster::Rasterizer;
use crate::sampler::{filter_undersized, Split};
use crate::synth::gen_scene;

/// Raw windows with everything needed to label them.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub groups: Vec<WindowGroup>,
    pub cameras: Vec<CameraGeometry>,
    pub track: LabelTrack,
    pub rig: StereoRig,
}

impl Corpus {
    /// Synthetic scene with `train_windows + test_windows` windows, or the
    /// recording at `cfg.data` sliced into `window_events`-event windows.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        match &cfg.data {
            Some(dir) => Self::from_recording(&Recording::read(dir)?, cfg.window_events),
            None => {
                let scene = gen_scene(&cfg.scene(), cfg.train_windows + cfg.test_windows)?;
                Ok(Corpus {
                    groups: scene.windows.iter().map(|w| w.group()).collect::<Result<_>>()?,
                    cameras: scene.cameras(),
                    track: scene.track,
                    rig: scene.rig,
                })
            }
        }
    }

    pub fn from_recording(rec: &Recording, window_events: usize) -> Result<Self> {
        let cams = (0..rec.streams.len() as u32).collect();
        Ok(Corpus {
            groups: crate::events::slice_windows(&rec.tagged(), WindowMode::CountTotal(window_events), &cams)?,
            cameras: rec.cameras.clone(),
            track: rec.track.clone(),
            rig: rec.rig()?,
        })
    }

    /// Labels groups `range` under the preprocessing settings of `cfg`.
    pub fn label(&self, cfg: &RunConfig, range: std::ops::Range<usize>) -> Result<Vec<LabeledWindow>> {
        let ds = cfg.dataset()?;
        let mut rasterizer = Rasterizer::new();
        let end = range.end.min(self.groups.len());
        (range.start.min(end)..end)
            .map(|i| label_group(&self.groups[i], i, &self.cameras, &self.track, &ds, &mut rasterizer))
            .collect()
    }

    /// First `train_windows` groups for training, the next `test_windows`
    /// for testing.
    pub fn split(&self, cfg: &RunConfig) -> Result<(Vec<LabeledWindow>, Vec<LabeledWindow>)> {
        let train = self.label(cfg, 0..cfg.train_windows)?;
        let test = self.label(cfg, cfg.train_windows..cfg.train_windows + cfg.test_windows)?;
        Ok((train, test))
    }

    pub fn bench_inputs(&self, range: std::ops::Range<usize>) -> Vec<BenchInput> {
        self.groups[range.start.min(self.groups.len())..range.end.min(self.groups.len())]
            .iter()
            .filter_map(|g| {
                let a = g.windows.iter().find(|w| w.camera_id() == 0)?;
                let b = g.windows.iter().find(|w| w.camera_id() == 1)?;
                Some(BenchInput {
                    window_a: a.clone(),
                    window_b: b.clone(),
                    rig: self.rig.clone(),
                })
            })
            .collect()
    }
}

/// Model inputs and targets. Training samples also carry their full point
/// pool when `cfg.resample` is set.
pub fn prepare(windows: &[LabeledWindow], cfg: &RunConfig, split: Split) -> Result<Vec<PreparedSample>> {
    let model = cfg.model();
    let codec = cfg.codec()?;
    let rasters: HashMap<(usize, u32), &Vec<RasterizedPoint>> = windows
        .iter()
        .flat_map(|w| w.views.iter().zip(&w.rasters).map(|(v, r)| ((w.index, v.camera_id), r)))
        .collect();
    filter_undersized(flatten(windows), cfg.min_points, split)
        .iter()
        .map(|s| {
            let mut p = prepare_sample(s, cfg.channels, &model, &codec)?;
            if cfg.resample && split == Split::Train {
                p.pool = Some(PointPool {
                    points: rasters[&(s.window_index, s.camera_id)].clone(),
                    count: cfg.points,
                    channels: cfg.channels,
                    model: model.clone(),
                });
            }
            Ok(p)
        })
        .collect()
}

/// Trains on the training split and validates on the test split.
pub fn run_training(corpus: &Corpus, cfg: &RunConfig) -> Result<(TrainOutcome, Vec<LabeledWindow>)> {
    let (train_w, test_w) = corpus.split(cfg)?;
    let train_set = prepare(&train_w, cfg, Split::Train)?;
    if train_set.is_empty() {
        return Err(Error::Empty(format!(
            "training set (every window has fewer than {} points)",
            cfg.min_points
        )));
    }
    let val_set = prepare(&test_w, cfg, Split::Test)?;
    let outcome = train(&train_set, &val_set, &cfg.model(), &cfg.train())?;
    Ok((outcome, test_w))
}

/// 2D error over every view and 3D error of the triangulated two-view
/// predictions against each window's 3D label.
pub fn evaluate(params: &ModelParams, windows: &[LabeledWindow], rig: &StereoRig, cfg: &RunConfig) -> Result<EvalReport> {
    let model = params.config();
    let codec = cfg.codec()?;
    let mut preds_2d = Vec::new();
    let mut gts_2d = Vec::new();
    let mut preds_3d = Vec::new();
    let mut gts_3d = Vec::new();
    for w in windows {
        let mut per_view = Vec::with_capacity(w.views.len());
        for v in &w.views {
            let s = prepare_sample(v, cfg.channels, model, &codec)?;
            let p = predict(params, &s.features)?;
            preds_2d.push(p.clone());
            gts_2d.push(v.label.clone());
            per_view.push((v.camera_id, p));
        }
        let a = per_view.iter().find(|(c, _)| *c == 0);
        let b = per_view.iter().find(|(c, _)| *c == 1);
        if let (Some((_, a)), Some((_, b))) = (a, b) {
            preds_3d.push(skeleton_to_3d(rig, a, b)?.skeleton);
            gts_3d.push(w.label3d.clone());
        }
    }
    let r2 = mpjpe_2d(&preds_2d, &gts_2d)?;
    let r3 = if preds_3d.is_empty() {
        None
    } else {
        Some(mpjpe_3d(&preds_3d, &gts_3d)?)
    };
    Ok(EvalReport::new(&r2, r3.as_ref()))
}

/// Pipeline latency over the test groups of `corpus`.
pub fn measure_latency(params: &ModelParams, corpus: &Corpus, cfg: &RunConfig) -> Result<LatencyReport> {
    let inputs = corpus.bench_inputs(cfg.train_windows..cfg.train_windows + cfg.test_windows.max(1));
    let inputs = if inputs.is_empty() {
        corpus.bench_inputs(0..corpus.groups.len())
    } else {
        inputs
    };
    let pipeline = PipelineConfig {
        raster: cfg.dataset()?.raster,
        points: cfg.points,
        seed: cfg.seed,
    };
    bench_pipeline(&inputs, params, &pipeline, &cfg.bench())
}
