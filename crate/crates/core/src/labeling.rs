//! Ground-truth generation from a low-rate 3D label track.
//!
//! Two policies are supported:
//!
//! * **Mean**: average every track skeleton whose timestamp falls between the
//!   first and last event of a merged multi-camera window. The result is shared
//!   by all cameras.
//! * **Last**: take the track skeleton nearest to the last event of a
//!   per-camera window. Equidistant candidates resolve to the later timestamp.
//!
//! Both yield a 3D skeleton, which [`project_to_2d`] turns into per-camera
//! sub-pixel labels.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::events::{CameraGeometry, EventWindow, Skeleton2D, Skeleton3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelPolicy {
    Mean,
    Last,
}

impl FromStr for LabelPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(LabelPolicy::Mean),
            "last" => Ok(LabelPolicy::Last),
            other => Err(Error::Invalid(format!("unknown label policy {other:?}"))),
        }
    }
}

impl std::fmt::Display for LabelPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelPolicy::Mean => "mean",
            LabelPolicy::Last => "last",
        })
    }
}

/// Timestamped 3D skeletons (microseconds, millimeters).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    timestamps: Vec<u64>,
    skeletons: Vec<Skeleton3D>,
    /// Nominal label period in microseconds. Informational only: averaging
    /// always uses the actual timestamps.
    pub period_us: u64,
}

impl LabelTrack {
    pub fn new(timestamps: Vec<u64>, skeletons: Vec<Skeleton3D>, period_us: u64) -> Result<Self> {
        if timestamps.len() != skeletons.len() {
            return Err(Error::Invalid(format!(
                "{} timestamps but {} skeletons",
                timestamps.len(),
                skeletons.len()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Ordering {
                index: i + 1,
                prev: timestamps[i],
                current: timestamps[i + 1],
            });
        }
        Ok(LabelTrack {
            timestamps,
            skeletons,
            period_us,
        })
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn skeletons(&self) -> &[Skeleton3D] {
        &self.skeletons
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Index range of labels with `lo <= T <= hi`.
    fn range(&self, lo: u64, hi: u64) -> std::ops::Range<usize> {
        let start = self.timestamps.partition_point(|&t| t < lo);
        let end = self.timestamps.partition_point(|&t| t <= hi);
        start..end.max(start)
    }

    /// Index of the label nearest `t`; ties go to the later label.
    fn nearest(&self, t: u64) -> Option<usize> {
        if self.timestamps.is_empty() {
            return None;
        }
        let after = self.timestamps.partition_point(|&s| s < t);
        if after == self.timestamps.len() {
            return Some(after - 1);
        }
        if after == 0 {
            return Some(0);
        }
        let d_after = self.timestamps[after] - t;
        let d_before = t - self.timestamps[after - 1];
        Some(if d_after <= d_before { after } else { after - 1 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowLabel {
    pub skeleton: Skeleton3D,
    /// True when no label fell inside the window and the label nearest the
    /// window midpoint was used instead.
    pub fallback: bool,
    /// Number of track labels averaged.
    pub used: usize,
}

/// Per-joint mean of all labels with timestamps between the first and last
/// event of `window`.
pub fn mean_label(window: &EventWindow, track: &LabelTrack) -> Result<WindowLabel> {
    let lo = window.first_event_t();
    let hi = window.last_event_t();
    let range = track.range(lo, hi);
    if range.is_empty() {
        let mid = lo + (hi - lo) / 2;
        let idx = track
            .nearest(mid)
            .ok_or_else(|| Error::Empty("label track".into()))?;
        return Ok(WindowLabel {
            skeleton: track.skeletons[idx].clone(),
            fallback: true,
            used: 1,
        });
    }
    let used = range.len();
    let skeletons = &track.skeletons[range];
    let joints = skeletons[0].len();
    let mut sum = vec![[0.0f64; 3]; joints];
    let mut count = vec![0usize; joints];
    for s in skeletons {
        if s.len() != joints {
            return Err(Error::Invalid("label track mixes joint counts".into()));
        }
        for j in 0..joints {
            if s.valid[j] {
                for a in 0..3 {
                    sum[j][a] += s.joints[j][a];
                }
                count[j] += 1;
            }
        }
    }
    let mut out = Skeleton3D::new(vec![[0.0; 3]; joints]);
    for j in 0..joints {
        if count[j] == 0 {
            out.valid[j] = false;
        } else {
            let n = count[j] as f64;
            out.joints[j] = [sum[j][0] / n, sum[j][1] / n, sum[j][2] / n];
        }
    }
    Ok(WindowLabel {
        skeleton: out,
        fallback: false,
        used,
    })
}

/// Track label nearest to the last event of `window`.
pub fn last_label(window: &EventWindow, track: &LabelTrack) -> Result<Skeleton3D> {
    let idx = track
        .nearest(window.last_event_t())
        .ok_or_else(|| Error::Empty("label track".into()))?;
    Ok(track.skeletons[idx].clone())
}

/// Projects through `cam`. Joints behind the camera or outside the sensor are
/// masked invalid.
pub fn project_to_2d(skeleton: &Skeleton3D, cam: &CameraGeometry) -> Skeleton2D {
    let mut out = Skeleton2D::new(vec![[0.0; 2]; skeleton.len()]);
    for (j, joint) in skeleton.joints.iter().enumerate() {
        if !skeleton.valid[j] {
            out.valid[j] = false;
            continue;
        }
        match cam.project(*joint) {
            Some(uv) if cam.in_frame(uv) => out.joints[j] = uv,
            Some(uv) => {
                out.joints[j] = uv;
                out.valid[j] = false;
            }
            None => out.valid[j] = false,
        }
    }
    out
}

/// Reads a `t,joint,X,Y,Z` track. Joints missing at a timestamp are masked.
pub fn read_label_track(path: &Path) -> Result<LabelTrack> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows: BTreeMap<u64, BTreeMap<usize, [f64; 3]>> = BTreeMap::new();
    let mut max_joint = 0usize;
    let mut last_t = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with('t')) {
            continue;
        }
        let loc = format!("{}:{}", path.display(), i + 1);
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::parse(&loc, "expected t,joint,X,Y,Z"));
        }
        let bad = |what: &str| Error::parse(&loc, format!("bad {what}"));
        let t: u64 = f[0].parse().map_err(|_| bad("t"))?;
        let joint: usize = f[1].parse().map_err(|_| bad("joint"))?;
        let xyz = [
            f[2].parse().map_err(|_| bad("X"))?,
            f[3].parse().map_err(|_| bad("Y"))?,
            f[4].parse().map_err(|_| bad("Z"))?,
        ];
        if let Some(prev) = last_t {
            if t < prev {
                return Err(Error::Ordering {
                    index: i,
                    prev,
                    current: t,
                });
            }
        }
        last_t = Some(t);
        max_joint = max_joint.max(joint);
        rows.entry(t).or_default().insert(joint, xyz);
    }
    let joints = if rows.is_empty() { 0 } else { max_joint + 1 };
    let mut timestamps = Vec::with_capacity(rows.len());
    let mut skeletons = Vec::with_capacity(rows.len());
    for (t, row) in rows {
        let mut s = Skeleton3D::new(vec![[0.0; 3]; joints]);
        for j in 0..joints {
            match row.get(&j) {
                Some(xyz) => s.joints[j] = *xyz,
                None => s.valid[j] = false,
            }
        }
        timestamps.push(t);
        skeletons.push(s);
    }
    let period = median_step(&timestamps);
    LabelTrack::new(timestamps, skeletons, period)
}

fn median_step(ts: &[u64]) -> u64 {
    let mut d: Vec<u64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return 0;
    }
    d.sort_unstable();
    d[d.len() / 2]
}

pub fn write_label_track(path: &Path, track: &LabelTrack) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "t,joint,X,Y,Z").map_err(io)?;
    for (t, s) in track.timestamps.iter().zip(&track.skeletons) {
        for (j, xyz) in s.joints.iter().enumerate() {
            if s.valid[j] {
                writeln!(w, "{t},{j},{:?},{:?},{:?}", xyz[0], xyz[1], xyz[2]).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}
