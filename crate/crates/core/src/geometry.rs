//! Two-view linear triangulation.
//!
//! Each view contributes the rows `x * P3 - P1` and `y * P3 - P2` of a 4x4
//! homogeneous system. Rows are scaled to unit norm, then the system is solved
//! by SVD: the solution is the right singular vector of the smallest singular
//! value. The system counts as rank-deficient (parallel rays, zero baseline)
//! when the third singular value falls below `1e-10` times the largest.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::events::{CameraGeometry, Skeleton2D, Skeleton3D};

pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct StereoRig {
    pub cam_a: CameraGeometry,
    pub cam_b: CameraGeometry,
}

impl StereoRig {
    /// Rejects rigs whose camera centers coincide.
    pub fn new(cam_a: CameraGeometry, cam_b: CameraGeometry) -> Result<Self> {
        let ca = cam_a.center();
        let cb = cam_b.center();
        let baseline = (0..3).map(|i| (ca[i] - cb[i]).powi(2)).sum::<f64>().sqrt();
        if !(baseline > 0.0) {
            return Err(Error::DegenerateGeometry("camera centers coincide".into()));
        }
        Ok(StereoRig { cam_a, cam_b })
    }

    pub fn baseline(&self) -> f64 {
        let ca = self.cam_a.center();
        let cb = self.cam_b.center();
        (0..3).map(|i| (ca[i] - cb[i]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn swapped(&self) -> StereoRig {
        StereoRig {
            cam_a: self.cam_b.clone(),
            cam_b: self.cam_a.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    pub point: [f64; 3],
    /// RMS over both views of the Euclidean reprojection error, in pixels.
    pub residual: f64,
}

fn dlt_rows(cam: &CameraGeometry, uv: [f64; 2]) -> [[f64; 4]; 2] {
    let p = &cam.projection;
    let mut rows = [[0.0; 4]; 2];
    for c in 0..4 {
        rows[0][c] = uv[0] * p[2][c] - p[0][c];
        rows[1][c] = uv[1] * p[2][c] - p[1][c];
    }
    for r in &mut rows {
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            r.iter_mut().for_each(|v| *v /= n);
        }
    }
    rows
}

/// RMS reprojection error of `point` against both observations.
pub fn reprojection_residual(rig: &StereoRig, point: [f64; 3], pa: [f64; 2], pb: [f64; 2]) -> Option<f64> {
    let ra = rig.cam_a.project(point)?;
    let rb = rig.cam_b.project(point)?;
    let ea = (ra[0] - pa[0]).powi(2) + (ra[1] - pa[1]).powi(2);
    let eb = (rb[0] - pb[0]).powi(2) + (rb[1] - pb[1]).powi(2);
    Some(((ea + eb) / 2.0).sqrt())
}

pub fn triangulate(rig: &StereoRig, pa: [f64; 2], pb: [f64; 2]) -> Result<Triangulation> {
    if pa.iter().chain(&pb).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite image coordinate".into()));
    }
    let ra = dlt_rows(&rig.cam_a, pa);
    let rb = dlt_rows(&rig.cam_b, pb);
    let a = Matrix4::from_fn(|r, c| match r {
        0 | 1 => ra[r][c],
        _ => rb[r - 2][c],
    });
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateGeometry("SVD did not converge".into()))?;
    let mut order = [0usize, 1, 2, 3];
    let sv = svd.singular_values;
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let largest = sv[order[0]];
    if !(largest > 0.0) || sv[order[2]] < RANK_TOLERANCE * largest {
        return Err(Error::DegenerateGeometry(
            "rays are parallel: DLT system is rank-deficient".into(),
        ));
    }
    let h: Vector4<f64> = v_t.row(order[3]).transpose();
    if h[3].abs() < f64::EPSILON * h.norm() {
        return Err(Error::DegenerateGeometry("point at infinity".into()));
    }
    let point = [h[0] / h[3], h[1] / h[3], h[2] / h[3]];
    let residual = reprojection_residual(rig, point, pa, pb)
        .ok_or_else(|| Error::DegenerateGeometry("point behind a camera".into()))?;
    Ok(Triangulation { point, residual })
}

/// Per-joint triangulation result with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTriangulation {
    pub skeleton: Skeleton3D,
    pub residuals: Vec<Option<f64>>,
    /// Why a joint is masked, when triangulation itself failed.
    pub diagnostics: Vec<Option<String>>,
}

/// Triangulates every joint valid in both views. Failures mask the joint and
/// leave a diagnostic instead of aborting.
pub fn skeleton_to_3d(rig: &StereoRig, sa: &Skeleton2D, sb: &Skeleton2D) -> Result<SkeletonTriangulation> {
    if sa.len() != sb.len() {
        return Err(Error::Invalid(format!(
            "joint count mismatch: {} vs {}",
            sa.len(),
            sb.len()
        )));
    }
    let n = sa.len();
    let mut out = SkeletonTriangulation {
        skeleton: Skeleton3D::new(vec![[0.0; 3]; n]),
        residuals: vec![None; n],
        diagnostics: vec![None; n],
    };
    for j in 0..n {
        if !(sa.valid[j] && sb.valid[j]) {
            out.skeleton.valid[j] = false;
            continue;
        }
        match triangulate(rig, sa.joints[j], sb.joints[j]) {
            Ok(t) => {
                out.skeleton.joints[j] = t.point;
                out.residuals[j] = Some(t.residual);
            }
            Err(e) => {
                out.skeleton.valid[j] = false;
                out.diagnostics[j] = Some(e.to_string());
            }
        }
    }
    Ok(out)
}

/// Reads a `joint,x,y,valid` prediction file.
pub fn read_prediction_csv(path: &Path) -> Result<Skeleton2D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(usize, [f64; 2], bool)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("joint")) {
            continue;
        }
        let loc = format!("{}:{}", path.display(), i + 1);
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(Error::parse(&loc, "expected joint,x,y,valid"));
        }
        let bad = |w: &str| Error::parse(&loc, format!("bad {w}"));
        let valid = match f[3] {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad("valid")),
        };
        rows.push((
            f[0].parse().map_err(|_| bad("joint"))?,
            [f[1].parse().map_err(|_| bad("x"))?, f[2].parse().map_err(|_| bad("y"))?],
            valid,
        ));
    }
    let n = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let mut s = Skeleton2D::new(vec![[0.0; 2]; n]);
    s.valid = vec![false; n];
    for (j, xy, v) in rows {
        s.joints[j] = xy;
        s.valid[j] = v;
    }
    Ok(s)
}

pub fn write_prediction_csv(path: &Path, s: &Skeleton2D) -> Result<()> {
    let mut out = String::from("joint,x,y,valid\n");
    for (j, (xy, v)) in s.joints.iter().zip(&s.valid).enumerate() {
        out.push_str(&format!("{j},{:?},{:?},{}\n", xy[0], xy[1], u8::from(*v)));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `joint,X,Y,Z,valid,residual`.
pub fn write_joints3d_csv(path: &Path, t: &SkeletonTriangulation) -> Result<()> {
    let mut out = String::from("joint,X,Y,Z,valid,residual\n");
    for (j, xyz) in t.skeleton.joints.iter().enumerate() {
        let valid = t.skeleton.valid[j];
        let residual = t.residuals[j].map_or(String::new(), |r| format!("{r:?}"));
        out.push_str(&format!(
            "{j},{:?},{:?},{:?},{},{residual}\n",
            xyz[0],
            xyz[1],
            xyz[2],
            u8::from(valid)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
