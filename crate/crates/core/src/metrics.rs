//! Mean per-joint position error.
//!
//! For each sample the error is the mean Euclidean distance over joints valid
//! in both prediction and ground truth. The dataset value is the mean of the
//! per-sample values; samples without any mutually valid joint are excluded
//! and counted.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::{Skeleton2D, Skeleton3D};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpjpeReport {
    /// Mean of `per_sample` (pixels in 2D, millimeters in 3D).
    pub mpjpe: f64,
    /// Per-sample mean joint error; `None` for excluded samples.
    pub per_sample: Vec<Option<f64>>,
    /// Per-joint mean error over the samples where the joint was scored.
    pub per_joint: Vec<Option<f64>>,
    pub samples: usize,
    pub excluded_samples: usize,
    pub masked_joints: usize,
}

/// 2D and 3D errors of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mpjpe2d: f64,
    pub mpjpe3d: Option<f64>,
    pub per_joint_2d: Vec<Option<f64>>,
    pub per_joint_3d: Option<Vec<Option<f64>>>,
    pub sample_count: usize,
    pub masked_joint_count: usize,
}

impl EvalReport {
    pub fn new(report_2d: &MpjpeReport, report_3d: Option<&MpjpeReport>) -> Self {
        EvalReport {
            mpjpe2d: report_2d.mpjpe,
            mpjpe3d: report_3d.map(|r| r.mpjpe),
            per_joint_2d: report_2d.per_joint.clone(),
            per_joint_3d: report_3d.map(|r| r.per_joint.clone()),
            sample_count: report_2d.samples,
            masked_joint_count: report_2d.masked_joints
                + report_3d.map_or(0, |r| r.masked_joints),
        }
    }
}

fn mpjpe_generic<const D: usize>(
    preds: &[(&[[f64; D]], &[bool])],
    gts: &[(&[[f64; D]], &[bool])],
) -> Result<MpjpeReport> {
    if preds.is_empty() {
        return Err(Error::Empty("MPJPE input".into()));
    }
    if preds.len() != gts.len() {
        return Err(Error::Invalid(format!(
            "{} predictions but {} ground-truth skeletons",
            preds.len(),
            gts.len()
        )));
    }
    let joints = gts[0].0.len();
    let mut joint_sum = vec![0.0; joints];
    let mut joint_n = vec![0usize; joints];
    let mut per_sample = Vec::with_capacity(preds.len());
    let mut masked = 0;
    for (i, ((pj, pv), (gj, gv))) in preds.iter().zip(gts).enumerate() {
        if pj.len() != joints || gj.len() != joints {
            return Err(Error::Invalid(format!("sample {i} has mismatched joint count")));
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for j in 0..joints {
            if !(pv[j] && gv[j]) {
                masked += 1;
                continue;
            }
            let d = (0..D)
                .map(|a| (pj[j][a] - gj[j][a]).powi(2))
                .sum::<f64>()
                .sqrt();
            sum += d;
            n += 1;
            joint_sum[j] += d;
            joint_n[j] += 1;
        }
        per_sample.push((n > 0).then(|| sum / n as f64));
    }
    let scored: Vec<f64> = per_sample.iter().flatten().copied().collect();
    let mpjpe = if scored.is_empty() {
        f64::NAN
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    };
    Ok(MpjpeReport {
        mpjpe,
        samples: scored.len(),
        excluded_samples: per_sample.len() - scored.len(),
        per_sample,
        per_joint: joint_sum
            .iter()
            .zip(&joint_n)
            .map(|(s, &n)| (n > 0).then(|| s / n as f64))
            .collect(),
        masked_joints: masked,
    })
}

pub fn mpjpe_2d(preds: &[Skeleton2D], gts: &[Skeleton2D]) -> Result<MpjpeReport> {
    let p: Vec<_> = preds.iter().map(|s| (&s.joints[..], &s.valid[..])).collect();
    let g: Vec<_> = gts.iter().map(|s| (&s.joints[..], &s.valid[..])).collect();
    mpjpe_generic(&p, &g)
}

pub fn mpjpe_3d(preds: &[Skeleton3D], gts: &[Skeleton3D]) -> Result<MpjpeReport> {
    let p: Vec<_> = preds.iter().map(|s| (&s.joints[..], &s.valid[..])).collect();
    let g: Vec<_> = gts.iter().map(|s| (&s.joints[..], &s.valid[..])).collect();
    mpjpe_generic(&p, &g)
}
