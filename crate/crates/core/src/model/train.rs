use std::borrow::Cow;

use super::{
    backward, backward_deferred, forward, kl_loss, point_features, Adam, AdamConfig, JointTarget, ModelConfig,
    ModelGrads, ModelParams, Tensor2D,
};
use crate::error::{Error, Result};
use crate::events::{LabeledSample, RasterizedPoint, Skeleton2D};
use crate::metrics::mpjpe_2d;
use crate::raster::ChannelSet;
use crate::sampler::{derive_rng, sample_points_with};
use crate::simdr::{argmax, encode_skeleton, kl_target_prep, CodecConfig};

/// Learning rate by starting epoch: 1e-4, then 1e-5 from epoch 15 and 1e-6
/// from epoch 20.
pub const DEFAULT_LR_SCHEDULE: [(usize, f64); 3] = [(0, 1e-4), (15, 1e-5), (20, 1e-6)];

pub fn lr_for_epoch(schedule: &[(usize, f64)], epoch: usize) -> f64 {
    schedule
        .iter()
        .filter(|(start, _)| *start <= epoch)
        .last()
        .map_or(schedule.first().map_or(0.0, |s| s.1), |s| s.1)
}

/// Model-ready sample: input features, KL targets and the sub-pixel label.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub features: Tensor2D,
    pub targets: Vec<Option<JointTarget>>,
    pub label: Skeleton2D,
    pub camera_id: u32,
    pub window_index: usize,
    /// When set, training draws a fresh subset from the pool every epoch
    /// instead of reusing `features`.
    pub pool: Option<PointPool>,
}

/// Every rasterized point of a training view plus how to turn a subset into
/// model input.
#[derive(Debug, Clone)]
pub struct PointPool {
    pub points: Vec<RasterizedPoint>,
    pub count: usize,
    pub channels: ChannelSet,
    pub model: ModelConfig,
}

impl PreparedSample {
    /// Model input for one visit during training: the fixed features, or a
    /// subset of the pool drawn from its own stream of `seed`.
    pub fn epoch_features(&self, seed: u64, epoch: usize, index: usize) -> Result<Cow<'_, Tensor2D>> {
        let Some(pool) = &self.pool else {
            return Ok(Cow::Borrowed(&self.features));
        };
        // streams 1..=epochs shuffle; these sit above them
        let stream = ((epoch as u64 + 1) << 32) | index as u64;
        let points = sample_points_with(&pool.points, pool.count, &mut derive_rng(seed, stream))?;
        let m = &pool.model;
        Ok(Cow::Owned(point_features(&points, pool.channels, m.width, m.height, m.raw_features)))
    }
}

pub fn prepare_sample(
    sample: &LabeledSample,
    channels: ChannelSet,
    model: &ModelConfig,
    codec: &CodecConfig,
) -> Result<PreparedSample> {
    let features = super::point_features(
        &sample.points,
        channels,
        model.width,
        model.height,
        model.raw_features,
    );
    let targets = encode_skeleton(&sample.label, codec)?
        .into_iter()
        .map(|p| {
            p.map(|pair| {
                let (x, y) = kl_target_prep(&pair);
                JointTarget { x, y }
            })
        })
        .collect();
    Ok(PreparedSample {
        features,
        targets,
        label: sample.label.clone(),
        camera_id: sample.camera_id,
        window_index: sample.window_index,
        pool: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_schedule: Vec<(usize, f64)>,
    pub seed: u64,
    pub batch_size: usize,
    /// Learning-rate multiplier for the two head weight matrices. Adam moves
    /// each weight by about the learning rate per step, and the heads need
    /// logit ranges far larger than the point MLP needs activations, so at
    /// the scheduled rates they would otherwise lag the rest of the model.
    pub head_lr_scale: f64,
    pub adam: AdamConfig,
}

pub const DEFAULT_HEAD_LR_SCALE: f64 = 100.0;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr_schedule: DEFAULT_LR_SCHEDULE.to_vec(),
            seed: 0,
            batch_size: 1,
            head_lr_scale: DEFAULT_HEAD_LR_SCALE,
            adam: AdamConfig::default(),
        }
    }
}

/// One loss-curve row. Epoch 0 is the untrained model evaluated on the
/// training set; later rows hold the running mean loss of that epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub mpjpe2d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStatus {
    Completed,
    /// Loss became non-finite; parameters are from the end of the last
    /// complete epoch.
    Diverged { epoch: usize, step: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub curve: Vec<CurveRow>,
    pub status: TrainStatus,
}

impl TrainOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.curve.first().map_or(f64::NAN, |r| r.loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn final_mpjpe2d(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |r| r.mpjpe2d)
    }

    pub fn write_curve_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("epoch,step,loss,mpjpe2d\n");
        for r in &self.curve {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.step, r.loss, r.mpjpe2d));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Argmax-decoded 2D skeleton for one input.
pub fn predict(params: &ModelParams, features: &Tensor2D) -> Result<Skeleton2D> {
    let out = forward(features, params)?;
    decode_logits(&out.logits_x, &out.logits_y)
}

pub(crate) fn decode_logits(lx: &Tensor2D, ly: &Tensor2D) -> Result<Skeleton2D> {
    let joints = (0..lx.rows())
        .map(|j| Ok([argmax(lx.row(j))? as f64, argmax(ly.row(j))? as f64]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Skeleton2D::new(joints))
}

/// Mean 2D joint error in pixels over `samples`.
pub fn evaluate_2d(params: &ModelParams, samples: &[PreparedSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let preds = samples
        .iter()
        .map(|s| predict(params, &s.features))
        .collect::<Result<Vec<_>>>()?;
    let gts: Vec<Skeleton2D> = samples.iter().map(|s| s.label.clone()).collect();
    Ok(mpjpe_2d(&preds, &gts)?.mpjpe)
}

fn mean_loss(params: &ModelParams, samples: &[PreparedSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let out = forward(&s.features, params)?;
        total += kl_loss(&out.logits_x, &out.logits_y, &s.targets, 1.0)?.loss;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Adam training with a per-epoch learning-rate schedule. Deterministic given
/// `cfg.seed`: the initialization uses ChaCha stream 0 and the shuffle of epoch
/// `e` (1-based) uses stream `e`.
pub fn train(
    train_set: &[PreparedSample],
    val_set: &[PreparedSample],
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let params = ModelParams::init(model, &mut derive_rng(cfg.seed, 0))?;
    train_from(params, train_set, val_set, cfg)
}

/// Continues training from existing parameters.
pub fn train_from(
    mut params: ModelParams,
    train_set: &[PreparedSample],
    val_set: &[PreparedSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let batch = cfg.batch_size.max(1);
    let scale = 1.0 / batch as f64;
    let mut adam = Adam::new(params.len(), cfg.adam);
    let mut grads = ModelGrads::zeros_like(&params);
    let head = params.head_weight_ranges();
    let mut curve = vec![CurveRow {
        epoch: 0,
        step: 0,
        loss: mean_loss(&params, train_set)?,
        mpjpe2d: evaluate_2d(&params, val_set)?,
    }];
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = lr_for_epoch(&cfg.lr_schedule, epoch);
        let snapshot = params.clone();
        let mut rng = derive_rng(cfg.seed, epoch as u64 + 1);
        shuffle(&mut order, &mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            if batch == 1 {
                // head weight gradients never touch `grads` on this path
                let i = chunk[0];
                let s = &train_set[i];
                zero_outside(&mut grads.data, &head);
                let out = forward(&*s.epoch_features(cfg.seed, epoch, i)?, &params)?;
                let kl = kl_loss(&out.logits_x, &out.logits_y, &s.targets, scale)?;
                step += 1;
                if !kl.loss.is_finite() {
                    return Ok(TrainOutcome {
                        params: snapshot,
                        curve,
                        status: TrainStatus::Diverged {
                            epoch: epoch + 1,
                            step,
                        },
                    });
                }
                total += kl.loss;
                let outer = backward_deferred(&out.cache, &params, &kl.grad_x, &kl.grad_y, &mut grads)?;
                adam.step_outer(&mut params, &grads, &outer, lr, cfg.head_lr_scale)?;
                continue;
            }
            grads.fill_zero();
            let mut chunk_loss = 0.0;
            for &i in chunk {
                let s = &train_set[i];
                let out = forward(&*s.epoch_features(cfg.seed, epoch, i)?, &params)?;
                let kl = kl_loss(&out.logits_x, &out.logits_y, &s.targets, scale)?;
                chunk_loss += kl.loss / scale;
                backward(&out.cache, &params, &kl.grad_x, &kl.grad_y, &mut grads)?;
            }
            step += 1;
            if !chunk_loss.is_finite() {
                return Ok(TrainOutcome {
                    params: snapshot,
                    curve,
                    status: TrainStatus::Diverged {
                        epoch: epoch + 1,
                        step,
                    },
                });
            }
            total += chunk_loss;
            adam.step_scaled(&mut params, &grads, lr, &head, cfg.head_lr_scale)?;
        }
        curve.push(CurveRow {
            epoch: epoch + 1,
            step,
            loss: total / train_set.len() as f64,
            mpjpe2d: evaluate_2d(&params, val_set)?,
        });
    }
    Ok(TrainOutcome {
        params,
        curve,
        status: TrainStatus::Completed,
    })
}

/// Zeroes `data` except inside the sorted, disjoint `keep` ranges.
fn zero_outside(data: &mut [f64], keep: &[std::ops::Range<usize>]) {
    let mut pos = 0;
    for r in keep {
        data[pos..r.start].fill(0.0);
        pos = r.end;
    }
    data[pos..].fill(0.0);
}

fn shuffle<R: rand::Rng>(v: &mut [usize], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}
