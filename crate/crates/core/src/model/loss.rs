use super::Tensor2D;
use crate::error::{Error, Result};

/// Per-joint target distributions (each axis sums to 1).
#[derive(Debug, Clone, PartialEq)]
pub struct JointTarget {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KlOutput {
    pub loss: f64,
    pub grad_x: Tensor2D,
    pub grad_y: Tensor2D,
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    log_softmax(z).into_iter().map(f64::exp).collect()
}

/// `sum t * (ln t - log_q)` over entries with `t > 0`.
fn kl_row(target: &[f64], log_q: &[f64]) -> f64 {
    target
        .iter()
        .zip(log_q)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, lq)| t * (t.ln() - lq))
        .sum()
}

/// KL(target || softmax(logits)) summed over joints and both axes, scaled by
/// `scale` (1 / batch size when averaging a batch). Joints with `None` targets
/// are masked and contribute neither loss nor gradient.
pub fn kl_loss(
    logits_x: &Tensor2D,
    logits_y: &Tensor2D,
    targets: &[Option<JointTarget>],
    scale: f64,
) -> Result<KlOutput> {
    if targets.len() != logits_x.rows() || targets.len() != logits_y.rows() {
        return Err(Error::Dimension {
            layer: "kl_loss".into(),
            expected: format!("{} joints", logits_x.rows()),
            actual: format!("{} targets", targets.len()),
        });
    }
    let mut loss = 0.0;
    let mut grad_x = Tensor2D::zeros(logits_x.rows(), logits_x.cols());
    let mut grad_y = Tensor2D::zeros(logits_y.rows(), logits_y.cols());
    for (j, t) in targets.iter().enumerate() {
        let Some(t) = t else { continue };
        for (logits, target, grad) in [
            (logits_x, &t.x, &mut grad_x),
            (logits_y, &t.y, &mut grad_y),
        ] {
            let z = logits.row(j);
            if target.len() != z.len() {
                return Err(Error::Dimension {
                    layer: "kl_loss".into(),
                    expected: format!("target length {}", z.len()),
                    actual: target.len().to_string(),
                });
            }
            let lq = log_softmax(z);
            loss += kl_row(target, &lq);
            for ((g, l), t) in grad.row_mut(j).iter_mut().zip(&lq).zip(target) {
                *g = scale * (l.exp() - t);
            }
        }
    }
    Ok(KlOutput {
        loss: loss * scale,
        grad_x,
        grad_y,
    })
}
