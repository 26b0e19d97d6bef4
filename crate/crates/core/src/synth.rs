//! Synthetic stick-figure scenes for end-to-end checks.
//!
//! Each window holds a figure whose joints move on straight lines from a start
//! pose to an end pose. Events are drawn along every bone as a Poisson process
//! (uniform timestamps), projected through each camera of a stereo rig and
//! floored to pixels. Labels are sampled from the same piecewise-linear
//! trajectory on a fixed grid, so with window length and gap on that grid the
//! Mean Label of a window is exactly its mid-trajectory pose.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::events::{CameraGeometry, Event, EventWindow, Skeleton3D, WindowGroup, DEFAULT_HEIGHT, DEFAULT_WIDTH};
use crate::geometry::StereoRig;
use crate::labeling::LabelTrack;
use crate::sampler::derive_rng;

/// Joint order: head, shoulders (r, l), elbows (r, l), hips (l, r), hands
/// (r, l), knees (r, l), feet (r, l).
pub const JOINT_NAMES: [&str; 13] = [
    "head", "shoulder_r", "shoulder_l", "elbow_r", "elbow_l", "hip_l", "hip_r", "hand_r", "hand_l",
    "knee_r", "knee_l", "foot_r", "foot_l",
];

pub const STICK_BONES: [(usize, usize); 14] = [
    (0, 1),
    (0, 2),
    (1, 2),
    (1, 3),
    (3, 7),
    (2, 4),
    (4, 8),
    (1, 6),
    (2, 5),
    (5, 6),
    (6, 9),
    (9, 11),
    (5, 10),
    (10, 12),
];

// key poses are snapped to this grid (mm) so sums of a few thousand copies stay exact
const POSE_QUANTUM: f64 = 1.0 / 1024.0;

/// Pose parameters of the stick figure. Angles in radians, lengths in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams {
    pub root: [f64; 3],
    pub yaw: f64,
    /// Per arm (right, left): swing about the body's lateral axis.
    pub arm_swing: [f64; 2],
    pub arm_raise: [f64; 2],
    pub elbow: [f64; 2],
    pub hip_swing: [f64; 2],
    pub knee: [f64; 2],
}

impl PoseParams {
    pub fn neutral() -> Self {
        PoseParams {
            root: [0.0; 3],
            yaw: 0.0,
            arm_swing: [0.0; 2],
            arm_raise: [0.2; 2],
            elbow: [0.3; 2],
            hip_swing: [0.0; 2],
            knee: [0.1; 2],
        }
    }

    /// Joint positions in world millimeters, y up.
    pub fn joints(&self) -> Vec<[f64; 3]> {
        let (s, c) = self.yaw.sin_cos();
        let place = |p: [f64; 3]| -> [f64; 3] {
            [
                self.root[0] + c * p[0] + s * p[2],
                self.root[1] + p[1],
                self.root[2] - s * p[0] + c * p[2],
            ]
        };
        // direction hanging down, swung forward by `swing` and outward by `raise`
        let limb = |swing: f64, raise: f64, side: f64| -> [f64; 3] {
            let (ss, cs) = swing.sin_cos();
            let (sr, cr) = raise.sin_cos();
            [side * sr, -cr * cs, -cr * ss]
        };
        let add = |a: [f64; 3], d: [f64; 3], len: f64| [a[0] + d[0] * len, a[1] + d[1] * len, a[2] + d[2] * len];

        let head = [0.0, 650.0, 0.0];
        let mut body = vec![[0.0; 3]; 13];
        body[0] = head;
        for (i, side) in [(0usize, -1.0f64), (1, 1.0)] {
            let shoulder = [side * 180.0, 450.0, 0.0];
            let upper = limb(self.arm_swing[i], self.arm_raise[i], side);
            let elbow = add(shoulder, upper, 280.0);
            let fore = limb(self.arm_swing[i] + self.elbow[i], self.arm_raise[i], side);
            let hand = add(elbow, fore, 260.0);
            let hip = [side * 100.0, 0.0, 0.0];
            let thigh = limb(self.hip_swing[i], 0.05, side);
            let knee = add(hip, thigh, 420.0);
            let shin = limb(self.hip_swing[i] - self.knee[i], 0.05, side);
            let foot = add(knee, shin, 420.0);
            let (sh, el, ha, hi, kn, fo) = if i == 0 { (1, 3, 7, 6, 9, 11) } else { (2, 4, 8, 5, 10, 12) };
            body[sh] = shoulder;
            body[el] = elbow;
            body[ha] = hand;
            body[hi] = hip;
            body[kn] = knee;
            body[fo] = foot;
        }
        body.into_iter().map(place).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneConfig {
    pub bones: Vec<(usize, usize)>,
    /// Largest per-window joint displacement, in pixels at the rig's working
    /// distance.
    pub amplitude_px: f64,
    /// Events per millisecond per bone and camera.
    pub edge_rate: f64,
    /// Background events per millisecond per camera, uniform over the sensor.
    pub noise_rate: f64,
    pub window_ms: u64,
    /// Quiet time between windows.
    pub gap_ms: u64,
    pub label_period_ms: u64,
    /// Half-range of the root translation on the ground plane (mm).
    pub spread_mm: f64,
    /// Scales every joint-angle range; 0 keeps the neutral posture.
    pub pose_variation: f64,
    pub rig: StereoRig,
    pub seed: u64,
}

impl SyntheticSceneConfig {
    pub fn new(rig: StereoRig, seed: u64) -> Self {
        SyntheticSceneConfig {
            bones: STICK_BONES.to_vec(),
            amplitude_px: 4.0,
            edge_rate: 8.0,
            noise_rate: 2.0,
            window_ms: 50,
            gap_ms: 10,
            label_period_ms: 10,
            spread_mm: 200.0,
            pose_variation: 0.0,
            rig,
            seed,
        }
    }

    /// Zero motion and no noise.
    pub fn stationary(mut self) -> Self {
        self.amplitude_px = 0.0;
        self.noise_rate = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.rig.cam_a.width.min(self.rig.cam_b.width);
        let h = self.rig.cam_a.height.min(self.rig.cam_b.height);
        let limit = f64::from(w.min(h)) / 4.0;
        if !(self.amplitude_px >= 0.0 && self.amplitude_px < limit) {
            return Err(Error::Invalid(format!(
                "motion amplitude {} px must lie in [0, {limit})",
                self.amplitude_px
            )));
        }
        for (name, v) in [
            ("edge rate", self.edge_rate),
            ("noise rate", self.noise_rate),
            ("spread", self.spread_mm),
            ("pose variation", self.pose_variation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.window_ms == 0 || self.label_period_ms == 0 {
            return Err(Error::Invalid("window length and label period must be positive".into()));
        }
        if self.bones.iter().any(|&(a, b)| a >= 13 || b >= 13) {
            return Err(Error::Invalid("bone references a joint outside the 13-joint figure".into()));
        }
        Ok(())
    }
}

/// The two-camera rig used by the synthetic scenes: focal length 300 px,
/// cameras about 3.3 m from the origin, 346x260 sensors.
pub fn default_rig() -> StereoRig {
    let up = [0.0, 1.0, 0.0];
    let cam = |c: [f64; 3]| {
        CameraGeometry::look_at(300.0, c, [0.0, 0.0, 0.0], up, DEFAULT_WIDTH, DEFAULT_HEIGHT)
            .expect("fixed rig is valid")
    };
    StereoRig::new(cam([-1200.0, 200.0, -3200.0]), cam([1500.0, 100.0, -2800.0])).expect("distinct centers")
}

/// One generated window: per-camera events plus the analytic mid pose.
#[derive(Debug, Clone)]
pub struct SyntheticWindow {
    pub index: usize,
    pub t_min: u64,
    pub t_max: u64,
    /// Events per camera, camera id = position.
    pub events: Vec<Vec<Event>>,
    pub start_pose: Skeleton3D,
    pub end_pose: Skeleton3D,
    /// Pose at the temporal midpoint of the window.
    pub mid_pose: Skeleton3D,
}

impl SyntheticWindow {
    pub fn group(&self) -> Result<WindowGroup> {
        let windows = self
            .events
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.is_empty())
            .map(|(c, e)| EventWindow::new(e.clone(), c as u32, self.t_min, self.t_max))
            .collect::<Result<Vec<_>>>()?;
        Ok(WindowGroup {
            t_min: self.t_min,
            t_max: self.t_max,
            windows,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub windows: Vec<SyntheticWindow>,
    pub track: LabelTrack,
    pub rig: StereoRig,
}

impl SyntheticScene {
    pub fn cameras(&self) -> Vec<CameraGeometry> {
        vec![self.rig.cam_a.clone(), self.rig.cam_b.clone()]
    }

    /// Full per-camera streams, windows back to back.
    pub fn streams(&self) -> Vec<Vec<Event>> {
        let mut out = vec![Vec::new(); 2];
        for w in &self.windows {
            for (c, e) in w.events.iter().enumerate() {
                out[c].extend_from_slice(e);
            }
        }
        out
    }
}

fn quantize(joints: Vec<[f64; 3]>) -> Skeleton3D {
    Skeleton3D::new(
        joints
            .into_iter()
            .map(|j| j.map(|v| (v / POSE_QUANTUM).round() * POSE_QUANTUM))
            .collect(),
    )
}

fn lerp_pose(a: &Skeleton3D, b: &Skeleton3D, s: f64) -> Vec<[f64; 3]> {
    a.joints
        .iter()
        .zip(&b.joints)
        .map(|(p, q)| [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1]), p[2] + s * (q[2] - p[2])])
        .collect()
}

/// Millimeters per pixel at the working distance of camera `cam`.
fn mm_per_px(cam: &CameraGeometry) -> f64 {
    let p = &cam.projection;
    let n = |r: usize| (p[r][0] * p[r][0] + p[r][1] * p[r][1] + p[r][2] * p[r][2]).sqrt();
    let focal = n(0) / n(2);
    let c = cam.center();
    (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt() / focal
}

fn random_pose(cfg: &SyntheticSceneConfig, rng: &mut ChaCha8Rng) -> PoseParams {
    let v = cfg.pose_variation;
    let mut sym = |r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
    let n = PoseParams::neutral();
    PoseParams {
        root: [sym(cfg.spread_mm), 0.0, sym(cfg.spread_mm)],
        yaw: sym(0.3 * v),
        arm_swing: [sym(0.8 * v), sym(0.8 * v)],
        arm_raise: [n.arm_raise[0] + 0.3 * v + sym(0.3 * v), n.arm_raise[1] + 0.3 * v + sym(0.3 * v)],
        elbow: [n.elbow[0] + 0.5 * v + sym(0.5 * v), n.elbow[1] + 0.5 * v + sym(0.5 * v)],
        hip_swing: [sym(0.35 * v), sym(0.35 * v)],
        knee: [n.knee[0] + 0.2 * v + sym(0.2 * v), n.knee[1] + 0.2 * v + sym(0.2 * v)],
    }
}

/// Moves every joint of `start` by at most `amplitude` mm: a shared
/// translation plus a per-joint offset, each at most half the amplitude.
fn displaced(start: &Skeleton3D, amplitude: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let unit = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        loop {
            let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-3 && n <= 1.0 {
                return v.map(|x| x / n);
            }
        }
    };
    let shared = unit(rng);
    start
        .joints
        .iter()
        .map(|j| {
            let own = unit(rng);
            let s: f64 = rng.random_range(0.0..=1.0);
            std::array::from_fn(|a| j[a] + 0.5 * amplitude * (shared[a] + s * own[a]))
        })
        .collect()
}

/// Poisson arrival times on `[0, span)` at `rate` per unit time.
fn poisson_times(rate: f64, span: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::new();
    if rate <= 0.0 || span <= 0.0 {
        return out;
    }
    let mut t = 0.0;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / rate;
        if t >= span {
            return out;
        }
        out.push(t);
    }
}

fn window_events(
    cfg: &SyntheticSceneConfig,
    cam: &CameraGeometry,
    start: &Skeleton3D,
    end: &Skeleton3D,
    t0: u64,
    rng: &mut ChaCha8Rng,
) -> Vec<Event> {
    let span_us = cfg.window_ms * 1000;
    let span_ms = cfg.window_ms as f64;
    let to_us = |t_ms: f64| t0 + ((t_ms * 1000.0).floor() as u64).min(span_us);
    let mut events = Vec::new();
    for &(a, b) in &cfg.bones {
        for t in poisson_times(cfg.edge_rate, span_ms, rng) {
            let s = t / span_ms;
            let u: f64 = rng.random();
            let p: [f64; 3] = std::array::from_fn(|k| {
                let ja = start.joints[a][k] + s * (end.joints[a][k] - start.joints[a][k]);
                let jb = start.joints[b][k] + s * (end.joints[b][k] - start.joints[b][k]);
                ja + u * (jb - ja)
            });
            if let Some(uv) = cam.project(p) {
                if cam.in_frame(uv) {
                    events.push(Event::new(uv[0] as u16, uv[1] as u16, to_us(t), rng.random_range(0..2)));
                }
            }
        }
    }
    for t in poisson_times(cfg.noise_rate, span_ms, rng) {
        let x = rng.random_range(0..cam.width) as u16;
        let y = rng.random_range(0..cam.height) as u16;
        events.push(Event::new(x, y, to_us(t), rng.random_range(0..2)));
    }
    events.sort_by_key(|e| e.t);
    // pin the extremes to the window bounds so the labeled span is the whole window
    if events.len() >= 2 {
        events[0].t = t0;
        let last = events.len() - 1;
        events[last].t = t0 + span_us;
    }
    events
}

/// Generates `num_windows` windows and the label track covering them.
/// Deterministic given `cfg.seed`.
pub fn gen_scene(cfg: &SyntheticSceneConfig, num_windows: usize) -> Result<SyntheticScene> {
    cfg.validate()?;
    let amplitude_mm = cfg.amplitude_px * mm_per_px(&cfg.rig.cam_a).max(mm_per_px(&cfg.rig.cam_b));
    let cams = [&cfg.rig.cam_a, &cfg.rig.cam_b];
    let stride_us = (cfg.window_ms + cfg.gap_ms) * 1000;
    let mut windows = Vec::with_capacity(num_windows);
    for w in 0..num_windows {
        let mut rng = derive_rng(cfg.seed, w as u64);
        let start = quantize(random_pose(cfg, &mut rng).joints());
        let end = quantize(displaced(&start, amplitude_mm, &mut rng));
        let t_min = w as u64 * stride_us;
        let t_max = t_min + cfg.window_ms * 1000;
        let events = cams
            .iter()
            .map(|cam| window_events(cfg, cam, &start, &end, t_min, &mut rng))
            .collect();
        windows.push(SyntheticWindow {
            index: w,
            t_min,
            t_max,
            events,
            mid_pose: Skeleton3D::new(lerp_pose(&start, &end, 0.5)),
            start_pose: start,
            end_pose: end,
        });
    }

    let period = cfg.label_period_ms * 1000;
    let total = (num_windows as u64).saturating_mul(stride_us);
    let mut stamps = Vec::new();
    let mut skeletons = Vec::new();
    let mut t = 0;
    while t <= total && !windows.is_empty() {
        stamps.push(t);
        skeletons.push(pose_at(&windows, stride_us, t));
        t += period;
    }
    let track = LabelTrack::new(stamps, skeletons, period)?;
    Ok(SyntheticScene {
        windows,
        track,
        rig: cfg.rig.clone(),
    })
}

/// Trajectory pose at time `t`: linear inside each window, linear from the
/// end pose of one window to the start pose of the next across the gap.
fn pose_at(windows: &[SyntheticWindow], stride_us: u64, t: u64) -> Skeleton3D {
    let w = ((t / stride_us) as usize).min(windows.len() - 1);
    let win = &windows[w];
    if t <= win.t_min {
        return win.start_pose.clone();
    }
    if t <= win.t_max {
        if t == win.t_max {
            return win.end_pose.clone();
        }
        let s = (t - win.t_min) as f64 / (win.t_max - win.t_min) as f64;
        return Skeleton3D::new(lerp_pose(&win.start_pose, &win.end_pose, s));
    }
    match windows.get(w + 1) {
        Some(next) => {
            let s = (t - win.t_max) as f64 / (next.t_min - win.t_max) as f64;
            Skeleton3D::new(lerp_pose(&win.end_pose, &next.start_pose, s))
        }
        None => win.end_pose.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::validate_stream;
    use crate::geometry::skeleton_to_3d;
    use crate::labeling::{last_label, mean_label, project_to_2d};

    fn cfg() -> SyntheticSceneConfig {
        SyntheticSceneConfig::new(default_rig(), 11)
    }

    #[test]
    fn neutral_figure_fits_both_sensors() {
        let rig = default_rig();
        let pose = Skeleton3D::new(PoseParams::neutral().joints());
        for cam in [&rig.cam_a, &rig.cam_b] {
            let s = project_to_2d(&pose, cam);
            assert!(s.valid.iter().all(|&v| v));
            let ys: Vec<f64> = s.joints.iter().map(|j| j[1]).collect();
            let tall = ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min);
            assert!(tall > 100.0 && tall < 250.0, "{tall}");
        }
    }

    #[test]
    fn generated_streams_are_valid_and_deterministic() {
        let a = gen_scene(&cfg(), 4).unwrap();
        let b = gen_scene(&cfg(), 4).unwrap();
        for (wa, wb) in a.windows.iter().zip(&b.windows) {
            assert_eq!(wa.events, wb.events);
        }
        for s in a.streams() {
            validate_stream(&s, DEFAULT_WIDTH, DEFAULT_HEIGHT).unwrap();
        }
    }

    #[test]
    fn rate_accounting() {
        let mut c = cfg();
        c.noise_rate = 0.0;
        c.amplitude_px = 0.0;
        c.window_ms = 10;
        c.spread_mm = 0.0;
        c.pose_variation = 0.0;
        c.edge_rate = 20.0;
        let n = 200;
        let scene = gen_scene(&c, n).unwrap();
        let total: usize = scene.windows.iter().map(|w| w.events[0].len()).sum();
        let expected = c.edge_rate * 10.0 * c.bones.len() as f64 * n as f64;
        // Poisson: variance equals the mean
        assert!((total as f64 - expected).abs() < 4.0 * expected.sqrt(), "{total} vs {expected}");
    }

    #[test]
    fn stationary_mean_equals_last() {
        let scene = gen_scene(&cfg().stationary(), 5).unwrap();
        for w in &scene.windows {
            assert_eq!(w.start_pose, w.end_pose);
            let g = w.group().unwrap();
            let mean = mean_label(&g.merged(), &scene.track).unwrap();
            assert!(!mean.fallback);
            for v in &g.windows {
                assert_eq!(mean.skeleton, last_label(v, &scene.track).unwrap());
            }
        }
    }

    #[test]
    fn moving_mean_is_mid_pose() {
        let scene = gen_scene(&cfg(), 5).unwrap();
        for w in &scene.windows {
            let g = w.group().unwrap();
            let mean = mean_label(&g.merged(), &scene.track).unwrap().skeleton;
            for cam in scene.cameras() {
                let a = project_to_2d(&mean, &cam);
                let b = project_to_2d(&w.mid_pose, &cam);
                for (p, q) in a.joints.iter().zip(&b.joints) {
                    assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn track_survives_projection_and_triangulation() {
        let scene = gen_scene(&cfg(), 3).unwrap();
        for s in scene.track.skeletons() {
            let a = project_to_2d(s, &scene.rig.cam_a);
            let b = project_to_2d(s, &scene.rig.cam_b);
            let t = skeleton_to_3d(&scene.rig, &a, &b).unwrap();
            for (p, q) in t.skeleton.joints.iter().zip(&s.joints) {
                let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
                assert!(d < 1e-6, "{d}");
            }
        }
    }

    #[test]
    fn amplitude_limit_enforced() {
        let mut c = cfg();
        c.amplitude_px = 65.0;
        assert!(gen_scene(&c, 1).is_err());
    }
}
