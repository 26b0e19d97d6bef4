use std::ops::Range;

use super::{ModelGrads, ModelParams, OuterGrad};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam state: first and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(len: usize, cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Bias-corrected update on a raw slice.
    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        self.apply(params, grads, &mut [], lr)
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelGrads, lr: f64) -> Result<()> {
        self.step_slice(params.as_mut_slice(), &grads.data, lr)
    }

    /// Like [`Adam::step`] with the learning rate multiplied by `scale` inside
    /// each of the disjoint `ranges`.
    pub fn step_scaled(
        &mut self,
        params: &mut ModelParams,
        grads: &ModelGrads,
        lr: f64,
        ranges: &[Range<usize>],
        scale: f64,
    ) -> Result<()> {
        let mut blocks: Vec<Block> = ranges
            .iter()
            .map(|r| Block {
                range: r.clone(),
                lr_scale: scale,
                outer: None,
            })
            .collect();
        self.apply(params.as_mut_slice(), &grads.data, &mut blocks, lr)
    }

    /// Same update as [`Adam::step_scaled`] over the `outer` blocks, with
    /// their gradients formed from the outer products instead of read from
    /// `grads`. Saves writing and re-reading the largest gradient blocks.
    pub(crate) fn step_outer(
        &mut self,
        params: &mut ModelParams,
        grads: &ModelGrads,
        outer: &[OuterGrad],
        lr: f64,
        scale: f64,
    ) -> Result<()> {
        let mut blocks: Vec<Block> = outer
            .iter()
            .map(|o| Block {
                range: o.offset..o.offset + o.rows.len() * o.cols.len(),
                lr_scale: scale,
                outer: Some((o.rows, o.cols)),
            })
            .collect();
        self.apply(params.as_mut_slice(), &grads.data, &mut blocks, lr)
    }

    fn apply(&mut self, p: &mut [f64], grads: &[f64], blocks: &mut [Block], lr: f64) -> Result<()> {
        let len = self.m.len();
        if p.len() != len || grads.len() != len {
            return Err(Error::Dimension {
                layer: "adam".into(),
                expected: len.to_string(),
                actual: format!("params {}, grads {}", p.len(), grads.len()),
            });
        }
        blocks.sort_by_key(|b| b.range.start);
        let mut pos = 0;
        for b in blocks.iter() {
            if b.range.start < pos || b.range.end > len {
                return Err(Error::Invalid("optimizer blocks overlap or overrun the parameters".into()));
            }
            pos = b.range.end;
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let inv_bc2 = 1.0 / (1.0 - beta2.powi(self.t as i32));
        let c = Coef {
            beta1,
            beta2,
            eps,
            inv_bc2,
        };
        let plain = lr / bc1;
        let (m, v) = (&mut self.m, &mut self.v);
        let mut pos = 0;
        for b in blocks.iter() {
            let r = pos..b.range.start;
            c.update(plain, &mut p[r.clone()], &mut m[r.clone()], &mut v[r.clone()], grads[r].iter().copied());
            let step = plain * b.lr_scale;
            match b.outer {
                None => {
                    let r = b.range.clone();
                    c.update(step, &mut p[r.clone()], &mut m[r.clone()], &mut v[r.clone()], grads[r].iter().copied());
                }
                Some((rows, cols)) => {
                    let n = cols.len();
                    for (k, &a) in rows.iter().enumerate() {
                        let r = b.range.start + k * n..b.range.start + (k + 1) * n;
                        c.update(step, &mut p[r.clone()], &mut m[r.clone()], &mut v[r], cols.iter().map(|&g| a * g));
                    }
                }
            }
            pos = b.range.end;
        }
        let r = pos..len;
        c.update(plain, &mut p[r.clone()], &mut m[r.clone()], &mut v[r.clone()], grads[r].iter().copied());
        Ok(())
    }
}

struct Coef {
    beta1: f64,
    beta2: f64,
    eps: f64,
    inv_bc2: f64,
}

impl Coef {
    #[inline]
    fn update(&self, step: f64, p: &mut [f64], m: &mut [f64], v: &mut [f64], g: impl Iterator<Item = f64>) {
        for (((p, m), v), g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= step * *m / ((*v * self.inv_bc2).sqrt() + self.eps);
        }
    }
}

/// A parameter range updated with its own learning-rate multiplier,
/// optionally with an outer-product gradient.
struct Block<'a> {
    range: Range<usize>,
    lr_scale: f64,
    outer: Option<(&'a [f64], &'a [f64])>,
}
