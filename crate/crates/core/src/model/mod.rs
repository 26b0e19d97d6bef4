//! Point-set pose regressor.
//!
//! Every point passes through a shared 4-layer MLP (ReLU after each layer).
//! The four intermediate feature maps are concatenated into a multi-scale
//! cascade, reduced over points by both max and mean pooling, and the pooled
//! global feature feeds two linear heads producing per-joint logits of length
//! `W` (x axis) and `H` (y axis).
//!
//! Rows are sorted into a canonical order inside [`forward`] so that the mean
//! pool sums in a fixed order and the output is bitwise invariant to input
//! permutation. Max-pool ties resolve to the lowest canonical row.

mod adam;
mod checkpoint;
mod loss;
mod tensor;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use loss::{kl_loss, log_softmax, softmax, JointTarget, KlOutput};
pub use tensor::Tensor2D;
pub use train::{
    evaluate_2d, lr_for_epoch, predict, prepare_sample, train, train_from, CurveRow, PointPool, PreparedSample,
    TrainConfig, TrainOutcome, TrainStatus, DEFAULT_HEAD_LR_SCALE, DEFAULT_LR_SCHEDULE,
};

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};
use crate::events::RasterizedPoint;
use crate::raster::ChannelSet;
use tensor::{accumulate_weight_grad, affine, input_grad};

pub const FULL_WIDTHS: [usize; 4] = [64, 128, 256, 512];
pub const DESK_WIDTHS: [usize; 4] = [16, 32, 64, 128];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub widths: [usize; 4],
    pub joints: usize,
    pub width: usize,
    pub height: usize,
    /// Feed raw channel values instead of scaled ones.
    pub raw_features: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 5,
            widths: DESK_WIDTHS,
            joints: crate::events::DEFAULT_JOINTS,
            width: crate::events::DEFAULT_WIDTH as usize,
            height: crate::events::DEFAULT_HEIGHT as usize,
            raw_features: false,
        }
    }
}

impl ModelConfig {
    /// Full-size widths `[64, 128, 256, 512]`.
    pub fn full_scale(mut self) -> Self {
        self.widths = FULL_WIDTHS;
        self
    }

    pub fn for_channels(mut self, channels: ChannelSet) -> Self {
        self.in_channels = channels.channels();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(3..=5).contains(&self.in_channels) {
            return Err(Error::Invalid(format!(
                "in_channels must be 3, 4 or 5, got {}",
                self.in_channels
            )));
        }
        if self.widths.contains(&0) || self.joints == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::Invalid("model dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Width of the concatenated per-point cascade.
    pub fn cascade_width(&self) -> usize {
        self.widths.iter().sum()
    }

    /// Width of the pooled global feature (max half then mean half).
    pub fn global_width(&self) -> usize {
        2 * self.cascade_width()
    }

    /// Parameter shapes in declaration order: four MLP layers, head x, head y.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(6);
        let mut fan_in = self.in_channels;
        for &w in &self.widths {
            shapes.push((fan_in, w));
            fan_in = w;
        }
        shapes.push((self.global_width(), self.joints * self.width));
        shapes.push((self.global_width(), self.joints * self.height));
        shapes
    }
}

/// Exact parameter count and multiply-accumulate count of one forward pass at
/// `points` points. MACs count the linear layers only: the point MLP
/// contributes `points * sum(in * out)`, the heads a constant `G * J * (W + H)`.
pub fn count_params_macs(cfg: &ModelConfig, points: usize) -> (usize, usize) {
    let shapes = cfg.layer_shapes();
    let params = shapes.iter().map(|&(i, o)| i * o + o).sum();
    let mlp: usize = shapes[..4].iter().map(|&(i, o)| i * o).sum();
    let heads: usize = shapes[4..].iter().map(|&(i, o)| i * o).sum();
    (params, points * mlp + heads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

fn layout(cfg: &ModelConfig) -> (Vec<Slot>, usize) {
    let mut off = 0;
    let slots = cfg
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let slot = Slot {
                w: off,
                b: off + fan_in * fan_out,
                fan_in,
                fan_out,
            };
            off += fan_in * fan_out + fan_out;
            slot
        })
        .collect();
    (slots, off)
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// All weights and biases in one flat array. Each layer stores its weight as
/// a row-major `fan_in x fan_out` matrix followed by its bias.
#[derive(Debug)]
pub struct ModelParams {
    cfg: ModelConfig,
    slots: Vec<Slot>,
    data: Vec<f64>,
    version: u64,
}

impl Clone for ModelParams {
    fn clone(&self) -> Self {
        ModelParams {
            cfg: self.cfg.clone(),
            slots: self.slots.clone(),
            data: self.data.clone(),
            version: fresh_version(),
        }
    }
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg && self.data == other.data
    }
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (slots, len) = layout(cfg);
        Ok(ModelParams {
            cfg: cfg.clone(),
            slots,
            data: vec![0.0; len],
            version: fresh_version(),
        })
    }

    /// He-uniform MLP weights, Glorot-uniform heads scaled by `HEAD_GAIN`,
    /// zero biases.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        for (l, slot) in p.slots.clone().iter().enumerate() {
            let bound = if l < 4 {
                (6.0 / slot.fan_in as f64).sqrt()
            } else {
                HEAD_GAIN * (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt() 
            };
            for v in &mut p.data[slot.w..slot.b] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn from_flat(cfg: &ModelConfig, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        if data.len() != p.data.len() {
            return Err(Error::Dimension {
                layer: "parameters".into(),
                expected: p.data.len().to_string(),
                actual: data.len().to_string(),
            });
        }
        p.data = data;
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access invalidates outstanding forward caches.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.version = fresh_version();
        &mut self.data
    }

    /// Per-layer `(name, weight, bias)` views in declaration order.
    pub fn layers(&self) -> Vec<(String, &[f64], &[f64])> {
        self.slots
            .iter()
            .enumerate()
            .map(|(l, s)| {
                (
                    layer_name(l),
                    &self.data[s.w..s.b],
                    &self.data[s.b..s.b + s.fan_out],
                )
            })
            .collect()
    }

    /// Index ranges of the two head weight matrices.
    pub(crate) fn head_weight_ranges(&self) -> [std::ops::Range<usize>; 2] {
        [4, 5].map(|l| self.slots[l].w..self.slots[l].b)
    }

    fn weight(&self, l: usize) -> &[f64] {
        let s = self.slots[l];
        &self.data[s.w..s.b]
    }

    fn bias(&self, l: usize) -> &[f64] {
        let s = self.slots[l];
        &self.data[s.b..s.b + s.fan_out]
    }
}

const HEAD_GAIN: f64 = 0.1;


fn layer_name(l: usize) -> String {
    match l {
        0..=3 => format!("mlp{}", l + 1),
        4 => "head_x".into(),
        _ => "head_y".into(),
    }
}

/// Gradient buffer with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub data: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        ModelGrads {
            data: vec![0.0; params.len()],
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Builds the `N x C` model input from rasterized points.
///
/// Scaled layout: `x / W`, `y / H`, `t_avg`, `p_acc / e_max`, `e_cnt / e_max`
/// where `e_max` is the largest `e_cnt` in the set. With `raw` set the channels
/// are passed through unchanged.
pub fn point_features(
    points: &[RasterizedPoint],
    channels: ChannelSet,
    width: usize,
    height: usize,
    raw: bool,
) -> Tensor2D {
    let c = channels.channels();
    let e_max = points.iter().map(|p| p.e_cnt).max().unwrap_or(1).max(1) as f64;
    let (sx, sy, se) = if raw {
        (1.0, 1.0, 1.0)
    } else {
        (1.0 / width as f64, 1.0 / height as f64, 1.0 / e_max)
    };
    let mut data = Vec::with_capacity(points.len() * c);
    for p in points {
        data.push(f64::from(p.x) * sx);
        data.push(f64::from(p.y) * sy);
        data.push(p.t_avg);
        if c >= 4 {
            data.push(f64::from(p.p_acc) * se);
        }
        if c >= 5 {
            data.push(f64::from(p.e_cnt) * se);
        }
    }
    Tensor2D::from_vec(points.len(), c, data).expect("feature length matches")
}

/// Intermediate values kept for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    points: usize,
    input: Tensor2D,
    /// Post-ReLU activations of the four MLP layers.
    hidden: Vec<Tensor2D>,
    /// Per cascade column, the canonical row holding the max.
    argmax: Vec<usize>,
    global: Vec<f64>,
}

impl ForwardCache {
    /// Pooled global feature: max half followed by mean half.
    pub fn global_feature(&self) -> &[f64] {
        &self.global
    }

    /// Input rows in canonical order.
    pub fn canonical_input(&self) -> &Tensor2D {
        &self.input
    }

    pub fn argmax_rows(&self) -> &[usize] {
        &self.argmax
    }

    /// Post-ReLU activations of MLP layer `l` (0-based).
    pub fn hidden(&self, l: usize) -> &Tensor2D {
        &self.hidden[l]
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `J x W`
    pub logits_x: Tensor2D,
    /// `J x H`
    pub logits_y: Tensor2D,
    pub cache: ForwardCache,
}

/// Sorts rows lexicographically by their values.
pub fn canonical_order(points: &Tensor2D) -> Tensor2D {
    let mut idx: Vec<usize> = (0..points.rows()).collect();
    idx.sort_by(|&a, &b| {
        points
            .row(a)
            .iter()
            .zip(points.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = Tensor2D::zeros(points.rows(), points.cols());
    for (dst, &src) in idx.iter().enumerate() {
        out.row_mut(dst).copy_from_slice(points.row(src));
    }
    out
}

pub fn forward(points: &Tensor2D, params: &ModelParams) -> Result<ForwardOutput> {
    let cfg = &params.cfg;
    let n = points.rows();
    if n == 0 {
        return Err(Error::Dimension {
            layer: "input".into(),
            expected: "at least one point".into(),
            actual: "0 points".into(),
        });
    }
    if points.cols() != cfg.in_channels {
        return Err(Error::Dimension {
            layer: "mlp1".into(),
            expected: format!("{} input channels", cfg.in_channels),
            actual: format!("{} channels", points.cols()),
        });
    }
    let input = canonical_order(points);

    let mut hidden: Vec<Tensor2D> = Vec::with_capacity(4);
    for l in 0..4 {
        let s = params.slots[l];
        let prev = if l == 0 { &input } else { &hidden[l - 1] };
        let mut h = Tensor2D::zeros(n, s.fan_out);
        affine(
            prev.data(),
            params.weight(l),
            params.bias(l),
            n,
            s.fan_in,
            s.fan_out,
            h.data_mut(),
        );
        for v in h.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        hidden.push(h);
    }

    let d = cfg.cascade_width();
    let mut global = vec![0.0; 2 * d];
    let mut argmax = vec![0usize; d];
    let mut col = 0;
    for h in &hidden {
        let w = h.cols();
        let (maxes, rest) = global.split_at_mut(d);
        let max = &mut maxes[col..col + w];
        let sum = &mut rest[col..col + w];
        let arg = &mut argmax[col..col + w];
        max.copy_from_slice(h.row(0));
        arg.iter_mut().for_each(|a| *a = 0);
        sum.iter_mut().for_each(|s| *s = 0.0);
        for r in 0..n {
            let row = h.row(r);
            for c in 0..w {
                let v = row[c];
                sum[c] += v;
                if v > max[c] {
                    max[c] = v;
                    arg[c] = r;
                }
            }
        }
        let inv = 1.0 / n as f64;
        sum.iter_mut().for_each(|s| *s *= inv);
        col += w;
    }

    let mut logits_x = Tensor2D::zeros(cfg.joints, cfg.width);
    let mut logits_y = Tensor2D::zeros(cfg.joints, cfg.height);
    for (l, out) in [(4usize, &mut logits_x), (5, &mut logits_y)] {
        let s = params.slots[l];
        affine(
            &global,
            params.weight(l),
            params.bias(l),
            1,
            s.fan_in,
            s.fan_out,
            out.data_mut(),
        );
    }

    Ok(ForwardOutput {
        logits_x,
        logits_y,
        cache: ForwardCache {
            version: params.version,
            points: n,
            input,
            hidden,
            argmax,
            global,
        },
    })
}

/// Reverse pass. Accumulates into `grads` (callers zero it between steps).
pub fn backward(
    cache: &ForwardCache,
    params: &ModelParams,
    grad_x: &Tensor2D,
    grad_y: &Tensor2D,
    grads: &mut ModelGrads,
) -> Result<()> {
    backward_impl(cache, params, grad_x, grad_y, grads, true)
}

/// Head weight gradient of one sample, `rows ⊗ cols` stored row-major from
/// `offset`, left for the optimizer to form on the fly.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OuterGrad<'a> {
    pub offset: usize,
    pub rows: &'a [f64],
    pub cols: &'a [f64],
}

/// Like [`backward`] but skips the two head weight matrices, the bulk of the
/// parameters, and returns them as outer products. Their slots in `grads`
/// are left untouched.
pub(crate) fn backward_deferred<'a>(
    cache: &'a ForwardCache,
    params: &ModelParams,
    grad_x: &'a Tensor2D,
    grad_y: &'a Tensor2D,
    grads: &mut ModelGrads,
) -> Result<[OuterGrad<'a>; 2]> {
    backward_impl(cache, params, grad_x, grad_y, grads, false)?;
    let (sx, sy) = (params.slots[4], params.slots[5]);
    Ok([
        OuterGrad {
            offset: sx.w,
            rows: &cache.global,
            cols: grad_x.data(),
        },
        OuterGrad {
            offset: sy.w,
            rows: &cache.global,
            cols: grad_y.data(),
        },
    ])
}

fn backward_impl(
    cache: &ForwardCache,
    params: &ModelParams,
    grad_x: &Tensor2D,
    grad_y: &Tensor2D,
    grads: &mut ModelGrads,
    head_weights: bool,
) -> Result<()> {
    if cache.version != params.version {
        return Err(Error::StaleCache(
            "parameters changed since the forward pass".into(),
        ));
    }
    let cfg = &params.cfg;
    if grads.data.len() != params.len() {
        return Err(Error::Dimension {
            layer: "gradients".into(),
            expected: params.len().to_string(),
            actual: grads.data.len().to_string(),
        });
    }
    for (name, g, cols) in [("head_x", grad_x, cfg.width), ("head_y", grad_y, cfg.height)] {
        if g.rows() != cfg.joints || g.cols() != cols {
            return Err(Error::Dimension {
                layer: name.into(),
                expected: format!("{}x{}", cfg.joints, cols),
                actual: format!("{}x{}", g.rows(), g.cols()),
            });
        }
    }

    let n = cache.points;
    let g_width = cfg.global_width();
    let mut d_global = vec![0.0; g_width];
    for (l, g) in [(4usize, grad_x), (5, grad_y)] {
        let s = params.slots[l];
        let (dw, db) = grads.data[s.w..s.b + s.fan_out].split_at_mut(s.b - s.w);
        if head_weights {
            accumulate_weight_grad(&cache.global, g.data(), 1, s.fan_in, s.fan_out, dw, db);
        } else {
            for (d, &v) in db.iter_mut().zip(g.data()) {
                *d += v;
            }
        }
        let mut dg = vec![0.0; g_width];
        input_grad(g.data(), params.weight(l), 1, s.fan_in, s.fan_out, &mut dg);
        for (a, b) in d_global.iter_mut().zip(&dg) {
            *a += b;
        }
    }

    let d = cfg.cascade_width();
    let inv = 1.0 / n as f64;
    let mut col = d;
    let mut upstream: Option<Tensor2D> = None;
    for l in (0..4).rev() {
        let h = &cache.hidden[l];
        let w = h.cols();
        col -= w;
        // gradient reaching this layer's activations: pooled paths plus the
        // layer above
        let mut dh = upstream.take().unwrap_or_else(|| Tensor2D::zeros(n, w));
        for c in 0..w {
            let g_max = d_global[col + c];
            let r = cache.argmax[col + c];
            dh.data_mut()[r * w + c] += g_max;
        }
        let avg = &d_global[d + col..d + col + w];
        for r in 0..n {
            for (v, g) in dh.row_mut(r).iter_mut().zip(avg) {
                *v += g * inv;
            }
        }
        // ReLU
        for (g, &a) in dh.data_mut().iter_mut().zip(h.data()) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        let s = params.slots[l];
        let prev = if l == 0 { &cache.input } else { &cache.hidden[l - 1] };
        {
            let (dw, db) = grads.data[s.w..s.b + s.fan_out].split_at_mut(s.b - s.w);
            accumulate_weight_grad(prev.data(), dh.data(), n, s.fan_in, s.fan_out, dw, db);
        }
        if l > 0 {
            let mut dprev = Tensor2D::zeros(n, s.fan_in);
            input_grad(dh.data(), params.weight(l), n, s.fan_in, s.fan_out, dprev.data_mut());
            upstream = Some(dprev);
        }
    }
    Ok(())
}
