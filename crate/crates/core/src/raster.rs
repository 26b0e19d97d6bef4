//! Rasterization of an event window into an event point cloud.
//!
//! The window span `[t_min, t_max]` is cut into `K` equal slices. Inside each
//! slice, all events on one pixel collapse into a single point carrying the mean
//! normalized timestamp, the signed polarity sum and the event count.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::events::{EventWindow, RasterizedPoint};

/// Which channels the model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelSet {
    /// x, y, t_avg
    Xyt,
    /// x, y, t_avg, p_acc
    Xytp,
    /// x, y, t_avg, p_acc, e_cnt
    Xytpc,
}

impl ChannelSet {
    pub const ALL: [ChannelSet; 3] = [ChannelSet::Xyt, ChannelSet::Xytp, ChannelSet::Xytpc];

    pub fn channels(self) -> usize {
        match self {
            ChannelSet::Xyt => 3,
            ChannelSet::Xytp => 4,
            ChannelSet::Xytpc => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelSet::Xyt => "xyt",
            ChannelSet::Xytp => "xytp",
            ChannelSet::Xytpc => "xytpc",
        }
    }
}

impl FromStr for ChannelSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xyt" => Ok(ChannelSet::Xyt),
            "xytp" => Ok(ChannelSet::Xytp),
            "xytpc" => Ok(ChannelSet::Xytpc),
            other => Err(Error::Invalid(format!("unknown channel set {other:?}"))),
        }
    }
}

impl std::fmt::Display for ChannelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterConfig {
    pub k: usize,
    pub channels: ChannelSet,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            k: 4,
            channels: ChannelSet::Xytpc,
        }
    }
}

impl RasterConfig {
    pub fn new(k: usize, channels: ChannelSet) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid("K must be >= 1".into()));
        }
        if k > usize::from(u8::MAX) + 1 {
            return Err(Error::Invalid(format!("K = {k} exceeds 256 slices")));
        }
        Ok(RasterConfig { k, channels })
    }
}

/// Affine map of `[t_min, t_max]` onto `[0, 1]`. A zero-duration window maps
/// every event to 0.
pub fn normalize_timestamps(window: &EventWindow) -> Vec<f64> {
    let t_min = window.t_min();
    let span = window.t_max() - t_min;
    if span == 0 {
        return vec![0.0; window.len()];
    }
    let span = span as f64;
    window
        .events()
        .iter()
        .map(|e| (e.t - t_min) as f64 / span)
        .collect()
}

/// Slice index of a timestamp: `floor(K * t_norm)` evaluated in integer
/// arithmetic, with `t_norm = 1` folded into the last slice.
#[inline]
pub fn slice_of(t: u64, t_min: u64, span: u64, k: usize) -> usize {
    if span == 0 {
        return 0;
    }
    let dt = t - t_min;
    let s = match dt.checked_mul(k as u64) {
        Some(num) => (num / span) as usize,
        None => (u128::from(dt) * k as u128 / u128::from(span)) as usize,
    };
    s.min(k - 1)
}

/// Reusable rasterizer. Keeps its scratch buffers between calls so that a
/// per-camera stream can be processed without reallocating.
#[derive(Debug, Default)]
pub struct Rasterizer {
    keyed: Vec<(u64, u32)>,
}

impl Rasterizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Output is sorted by `(slice, y, x)`.
    pub fn rasterize(&mut self, window: &EventWindow, cfg: &RasterConfig) -> Vec<RasterizedPoint> {
        let k = cfg.k.max(1);
        let events = window.events();
        let t_min = window.t_min();
        let span = window.t_max() - t_min;
        let inv_span = if span == 0 { 0.0 } else { 1.0 / span as f64 };

        self.keyed.clear();
        self.keyed.reserve(events.len());
        for (i, e) in events.iter().enumerate() {
            let slice = slice_of(e.t, t_min, span, k) as u64;
            let key = (slice << 32) | (u64::from(e.y) << 16) | u64::from(e.x);
            self.keyed.push((key, i as u32));
        }
        // ties broken by event index keep each cell's events in time order
        self.keyed.sort_unstable();

        let mut out = Vec::new();
        let mut idx = 0;
        while idx < self.keyed.len() {
            let key = self.keyed[idx].0;
            let mut t_sum = 0.0;
            let mut p_acc = 0i32;
            let mut count = 0u32;
            while idx < self.keyed.len() && self.keyed[idx].0 == key {
                let e = &events[self.keyed[idx].1 as usize];
                t_sum += (e.t - t_min) as f64 * inv_span;
                p_acc += e.signed_polarity();
                count += 1;
                idx += 1;
            }
            out.push(RasterizedPoint {
                x: (key & 0xffff) as u16,
                y: ((key >> 16) & 0xffff) as u16,
                t_avg: t_sum / f64::from(count),
                p_acc,
                e_cnt: count,
                slice: (key >> 32) as u8,
            });
        }
        out
    }
}

pub fn rasterize(window: &EventWindow, cfg: &RasterConfig) -> Vec<RasterizedPoint> {
    Rasterizer::new().rasterize(window, cfg)
}

/// Zeroes the fields a channel set does not expose: `Xyt` clears `p_acc` and
/// `e_cnt`, `Xytp` clears `e_cnt`.
pub fn mask_channels(points: &mut [RasterizedPoint], channels: ChannelSet) {
    for p in points {
        match channels {
            ChannelSet::Xyt => {
                p.p_acc = 0;
                p.e_cnt = 0;
            }
            ChannelSet::Xytp => p.e_cnt = 0,
            ChannelSet::Xytpc => {}
        }
    }
}

const POINT_MAGIC: &[u8; 4] = b"EVPR";
const POINT_VERSION: u8 = 1;
const POINT_RECORD_LEN: usize = 2 + 2 + 4 + 4 + 4 + 1;

/// Writes points as `EVPR`, version u8, count u64, then packed records
/// `{x: u16, y: u16, t_avg: f32, p_acc: i32, e_cnt: u32, slice: u8}`, all
/// little-endian.
pub fn write_points(path: &Path, points: &[RasterizedPoint]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(POINT_MAGIC).map_err(io)?;
    w.write_all(&[POINT_VERSION]).map_err(io)?;
    w.write_all(&(points.len() as u64).to_le_bytes()).map_err(io)?;
    let mut rec = [0u8; POINT_RECORD_LEN];
    for p in points {
        rec[0..2].copy_from_slice(&p.x.to_le_bytes());
        rec[2..4].copy_from_slice(&p.y.to_le_bytes());
        rec[4..8].copy_from_slice(&(p.t_avg as f32).to_le_bytes());
        rec[8..12].copy_from_slice(&p.p_acc.to_le_bytes());
        rec[12..16].copy_from_slice(&p.e_cnt.to_le_bytes());
        rec[16] = p.slice;
        w.write_all(&rec).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_points(path: &Path) -> Result<Vec<RasterizedPoint>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 13 || &bytes[0..4] != POINT_MAGIC {
        return Err(Error::parse("offset 0", "bad point file header"));
    }
    if bytes[4] != POINT_VERSION {
        return Err(Error::parse("offset 4", "unsupported point file version"));
    }
    let count = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
    let body = &bytes[13..];
    if count.checked_mul(POINT_RECORD_LEN) != Some(body.len()) {
        return Err(Error::parse("offset 13", "record count does not match file size"));
    }
    Ok(body
        .chunks_exact(POINT_RECORD_LEN)
        .map(|r| RasterizedPoint {
            x: u16::from_le_bytes([r[0], r[1]]),
            y: u16::from_le_bytes([r[2], r[3]]),
            t_avg: f64::from(f32::from_le_bytes(r[4..8].try_into().unwrap())),
            p_acc: i32::from_le_bytes(r[8..12].try_into().unwrap()),
            e_cnt: u32::from_le_bytes(r[12..16].try_into().unwrap()),
            slice: r[16],
        })
        .collect())
}
