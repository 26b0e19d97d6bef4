//! Domain types shared by every stage of the pipeline: raw events, constant-count
//! windows, rasterized points, skeletons and pinhole camera geometry.

mod io;

pub use io::{
    read_camera, read_event_stream, write_camera, write_event_stream, EventStream, StreamFormat,
};

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

pub const DEFAULT_WIDTH: u32 = 346;
pub const DEFAULT_HEIGHT: u32 = 260;
pub const DEFAULT_JOINTS: usize = 13;

/// One asynchronous brightness-change event. Polarity is stored as sensor
/// convention: 0 for a decrease, 1 for an increase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub p: u8,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: u8) -> Self {
        Event { x, y, t, p }
    }

    /// Polarity mapped to -1 / +1.
    #[inline]
    pub fn signed_polarity(&self) -> i32 {
        if self.p == 0 {
            -1
        } else {
            1
        }
    }
}

/// An event tagged with the camera that produced it, as found in a merged
/// multi-camera stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggedEvent {
    pub camera: u32,
    pub event: Event,
}

/// Checks the stream invariants: coordinates inside the sensor, polarity in
/// {0, 1}, timestamps non-decreasing.
pub fn validate_stream(events: &[Event], width: u32, height: u32) -> Result<()> {
    let mut prev = 0u64;
    for (index, e) in events.iter().enumerate() {
        if u32::from(e.x) >= width || u32::from(e.y) >= height {
            return Err(Error::OutOfBounds {
                index,
                x: e.x.into(),
                y: e.y.into(),
                width,
                height,
            });
        }
        if e.p > 1 {
            return Err(Error::Invalid(format!(
                "event {index} has polarity {}, expected 0 or 1",
                e.p
            )));
        }
        if index > 0 && e.t < prev {
            return Err(Error::Ordering {
                index,
                prev,
                current: e.t,
            });
        }
        prev = e.t;
    }
    Ok(())
}

/// A non-empty, time-ordered run of events from one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWindow {
    events: Vec<Event>,
    camera_id: u32,
    t_min: u64,
    t_max: u64,
}

impl EventWindow {
    pub fn new(events: Vec<Event>, camera_id: u32, t_min: u64, t_max: u64) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::Empty("event window".into()));
        }
        if t_min > t_max {
            return Err(Error::Invalid(format!(
                "window bounds reversed: t_min {t_min} > t_max {t_max}"
            )));
        }
        let mut prev = t_min;
        for (index, e) in events.iter().enumerate() {
            if e.t < prev {
                return Err(Error::Ordering {
                    index,
                    prev,
                    current: e.t,
                });
            }
            if e.t > t_max {
                return Err(Error::Invalid(format!(
                    "event {index} at t={} beyond window end {t_max}",
                    e.t
                )));
            }
            prev = e.t;
        }
        Ok(EventWindow {
            events,
            camera_id,
            t_min,
            t_max,
        })
    }

    /// Window whose bounds are the first and last event timestamps.
    pub fn from_events(events: Vec<Event>, camera_id: u32) -> Result<Self> {
        let (t_min, t_max) = match (events.first(), events.last()) {
            (Some(a), Some(_)) => (a.t, events.iter().map(|e| e.t).max().unwrap_or(a.t)),
            _ => return Err(Error::Empty("event window".into())),
        };
        Self::new(events, camera_id, t_min, t_max)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn camera_id(&self) -> u32 {
        self.camera_id
    }

    pub fn t_min(&self) -> u64 {
        self.t_min
    }

    pub fn t_max(&self) -> u64 {
        self.t_max
    }

    pub fn first_event_t(&self) -> u64 {
        self.events[0].t
    }

    pub fn last_event_t(&self) -> u64 {
        self.events[self.events.len() - 1].t
    }
}

/// How a stream is cut into constant-count windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    /// Windows of exactly `n` events for each camera independently.
    CountPerCamera(usize),
    /// Windows of exactly `n` events over the merged stream, then split per camera.
    CountTotal(usize),
}

/// One constant-count window. In `CountTotal` mode it holds one sub-window per
/// camera that contributed events; in `CountPerCamera` mode exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGroup {
    pub t_min: u64,
    pub t_max: u64,
    pub windows: Vec<EventWindow>,
}

impl WindowGroup {
    pub fn event_count(&self) -> usize {
        self.windows.iter().map(EventWindow::len).sum()
    }

    /// All events of the group merged back into one camera-agnostic window,
    /// used for label generation over the shared window.
    pub fn merged(&self) -> EventWindow {
        let mut events: Vec<Event> = self
            .windows
            .iter()
            .flat_map(|w| w.events().iter().copied())
            .collect();
        events.sort_by_key(|e| e.t);
        EventWindow {
            events,
            camera_id: u32::MAX,
            t_min: self.t_min,
            t_max: self.t_max,
        }
    }
}

/// Cuts a merged, time-ordered stream into constant-count windows. Events from
/// cameras outside `cameras` are ignored and the trailing partial window is
/// dropped.
pub fn slice_windows(
    stream: &[TaggedEvent],
    mode: WindowMode,
    cameras: &BTreeSet<u32>,
) -> Result<Vec<WindowGroup>> {
    let selected = stream.iter().filter(|e| cameras.contains(&e.camera));
    match mode {
        WindowMode::CountTotal(n) => {
            if n == 0 {
                return Err(Error::Invalid("window count must be >= 1".into()));
            }
            let selected: Vec<&TaggedEvent> = selected.collect();
            let mut groups = Vec::with_capacity(selected.len() / n);
            for chunk in selected.chunks_exact(n) {
                let t_min = chunk[0].event.t;
                let t_max = chunk[n - 1].event.t;
                let mut per_camera: BTreeMap<u32, Vec<Event>> = BTreeMap::new();
                for e in chunk {
                    per_camera.entry(e.camera).or_default().push(e.event);
                }
                let windows = per_camera
                    .into_iter()
                    .map(|(cam, events)| EventWindow::new(events, cam, t_min, t_max))
                    .collect::<Result<Vec<_>>>()?;
                groups.push(WindowGroup {
                    t_min,
                    t_max,
                    windows,
                });
            }
            Ok(groups)
        }
        WindowMode::CountPerCamera(n) => {
            if n == 0 {
                return Err(Error::Invalid("window count must be >= 1".into()));
            }
            let mut per_camera: BTreeMap<u32, Vec<Event>> = BTreeMap::new();
            for e in selected {
                per_camera.entry(e.camera).or_default().push(e.event);
            }
            let mut groups = Vec::new();
            for (cam, events) in per_camera {
                for chunk in events.chunks_exact(n) {
                    let w = EventWindow::from_events(chunk.to_vec(), cam)?;
                    groups.push(WindowGroup {
                        t_min: w.t_min(),
                        t_max: w.t_max(),
                        windows: vec![w],
                    });
                }
            }
            // interleave cameras in time for downstream consumers
            groups.sort_by_key(|g| (g.t_min, g.windows[0].camera_id()));
            Ok(groups)
        }
    }
}

/// Aggregated per-pixel, per-slice point: (x, y, t_avg, p_acc, e_cnt).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterizedPoint {
    pub x: u16,
    pub y: u16,
    pub t_avg: f64,
    pub p_acc: i32,
    pub e_cnt: u32,
    pub slice: u8,
}

/// 2D skeleton in sub-pixel image coordinates with a per-joint validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton2D {
    pub joints: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
}

impl Skeleton2D {
    pub fn new(joints: Vec<[f64; 2]>) -> Self {
        let valid = vec![true; joints.len()];
        Skeleton2D { joints, valid }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Masks joints outside `[0, width) x [0, height)` or with non-finite
    /// coordinates.
    pub fn mask_out_of_frame(&mut self, width: u32, height: u32) {
        for (j, v) in self.joints.iter().zip(self.valid.iter_mut()) {
            let inside = j[0].is_finite()
                && j[1].is_finite()
                && j[0] >= 0.0
                && j[1] >= 0.0
                && j[0] < f64::from(width)
                && j[1] < f64::from(height);
            *v = *v && inside;
        }
    }
}

/// 3D skeleton in millimeters with a per-joint validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton3D {
    pub joints: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

impl Skeleton3D {
    pub fn new(joints: Vec<[f64; 3]>) -> Self {
        let valid = vec![true; joints.len()];
        Skeleton3D { joints, valid }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }
}

/// Pinhole camera: 3x4 projection matrix plus sensor size.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraGeometry {
    pub projection: [[f64; 4]; 3],
    pub width: u32,
    pub height: u32,
}

impl CameraGeometry {
    pub fn new(projection: [[f64; 4]; 3], width: u32, height: u32) -> Result<Self> {
        let cam = CameraGeometry {
            projection,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid("camera sensor size must be positive".into()));
        }
        if self.projection.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("projection matrix has non-finite entries".into()));
        }
        let det = self.rotation_block_det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Invalid(
                "projection matrix has singular left 3x3 block".into(),
            ));
        }
        Ok(())
    }

    fn rotation_block_det(&self) -> f64 {
        let m = &self.projection;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Builds `K [R | -R c]` for a camera at `center` looking at `target`,
    /// with image y pointing along world `-up`.
    pub fn look_at(
        focal: f64,
        center: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let cross = |a: [f64; 3], b: [f64; 3]| {
            [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ]
        };
        let norm = |a: [f64; 3]| {
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            [a[0] / n, a[1] / n, a[2] / n]
        };
        let forward = norm(sub(target, center));
        let right = norm(cross(forward, up));
        let down = cross(forward, right);
        let rot = [right, down, forward];
        let cx = f64::from(width) / 2.0;
        let cy = f64::from(height) / 2.0;
        let k = [[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]];
        let mut projection = [[0.0; 4]; 3];
        for r in 0..3 {
            for c in 0..3 {
                projection[r][c] = (0..3).map(|i| k[r][i] * rot[i][c]).sum();
            }
            let t: f64 = (0..3)
                .map(|i| {
                    let rc: f64 = (0..3).map(|j| rot[i][j] * center[j]).sum();
                    -k[r][i] * rc
                })
                .sum();
            projection[r][3] = t;
        }
        Self::new(projection, width, height)
    }

    /// Homogeneous projection. Returns `None` when the point lies on or behind
    /// the camera plane (w <= 0).
    pub fn project(&self, point: [f64; 3]) -> Option<[f64; 2]> {
        let h = [point[0], point[1], point[2], 1.0];
        let row = |r: usize| -> f64 { (0..4).map(|c| self.projection[r][c] * h[c]).sum() };
        let w = row(2);
        if !(w > 0.0) {
            return None;
        }
        Some([row(0) / w, row(1) / w])
    }

    /// Camera center: the right null vector of P.
    pub fn center(&self) -> [f64; 3] {
        let m = &self.projection;
        let minor = |skip: usize| -> f64 {
            let cols: Vec<usize> = (0..4).filter(|&c| c != skip).collect();
            let a = |r: usize, i: usize| m[r][cols[i]];
            a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
        };
        let x = minor(0);
        let y = -minor(1);
        let z = minor(2);
        let w = -minor(3);
        [x / w, y / w, z / w]
    }

    pub fn in_frame(&self, uv: [f64; 2]) -> bool {
        uv[0] >= 0.0
            && uv[1] >= 0.0
            && uv[0] < f64::from(self.width)
            && uv[1] < f64::from(self.height)
    }
}

/// Fixed-size point set with its 2D label, ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub points: Vec<RasterizedPoint>,
    pub label: Skeleton2D,
    pub camera_id: u32,
    pub t_min: u64,
    pub t_max: u64,
    pub raw_event_count: usize,
    /// Rasterized point count before sampling to the fixed size.
    pub raw_point_count: usize,
    /// Set when the label came from a fallback policy rather than the
    /// requested one.
    pub label_fallback: bool,
    /// Index of the source window, shared by the per-camera samples of one
    /// merged window.
    pub window_index: usize,
}
