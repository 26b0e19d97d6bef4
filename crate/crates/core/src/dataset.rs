//! Labeled windows from synthetic scenes or recordings on disk.
//!
//! A recording directory holds one stream per camera (`cam0.evpc`,
//! `cam1.evpc`, ...), each with its projection sidecar (`cam0.cam`, ...), and a
//! shared label track `labels.csv`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::events::{
    read_event_stream, slice_windows, EventStream, StreamFormat, write_event_stream, CameraGeometry, Event, LabeledSample,
    Skeleton3D, TaggedEvent, WindowGroup, WindowMode,
};
use crate::geometry::StereoRig;
use crate::labeling::{
    last_label, mean_label, project_to_2d, read_label_track, write_label_track, LabelPolicy, LabelTrack,
};
use crate::events::RasterizedPoint;
use crate::raster::{RasterConfig, Rasterizer};
use crate::sampler::{derive_rng, sample_points_with, SamplerConfig};
use crate::synth::SyntheticScene;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub raster: RasterConfig,
    pub sampler: SamplerConfig,
    pub policy: LabelPolicy,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            raster: RasterConfig::default(),
            sampler: SamplerConfig::default(),
            policy: LabelPolicy::Mean,
        }
    }
}

/// All views of one window with a shared 3D label.
#[derive(Debug, Clone)]
pub struct LabeledWindow {
    pub index: usize,
    /// One sample per camera, in camera-id order.
    pub views: Vec<LabeledSample>,
    /// Mean Label of the merged window, or the label nearest its last event.
    pub label3d: Skeleton3D,
    /// Every rasterized point of each view before sampling, parallel to
    /// `views`.
    pub rasters: Vec<Vec<RasterizedPoint>>,
}

/// Rasterizes, samples and labels every view of `group`.
pub fn label_group(
    group: &WindowGroup,
    index: usize,
    cameras: &[CameraGeometry],
    track: &LabelTrack,
    cfg: &DatasetConfig,
    rasterizer: &mut Rasterizer,
) -> Result<LabeledWindow> {
    let merged = group.merged();
    let (label3d, fallback) = match cfg.policy {
        LabelPolicy::Mean => {
            let l = mean_label(&merged, track)?;
            (l.skeleton, l.fallback)
        }
        LabelPolicy::Last => (last_label(&merged, track)?, false),
    };
    let mut views = Vec::with_capacity(group.windows.len());
    let mut rasters = Vec::with_capacity(group.windows.len());
    for w in &group.windows {
        let cam = cameras
            .get(w.camera_id() as usize)
            .ok_or_else(|| Error::Invalid(format!("no geometry for camera {}", w.camera_id())))?;
        let label3 = match cfg.policy {
            LabelPolicy::Mean => label3d.clone(),
            LabelPolicy::Last => last_label(w, track)?,
        };
        let points = rasterizer.rasterize(w, &cfg.raster);
        let stream = (index * cameras.len() + w.camera_id() as usize) as u64;
        let sampled = sample_points_with(
            &points,
            cfg.sampler.target_count,
            &mut derive_rng(cfg.sampler.seed, stream),
        )?;
        views.push(LabeledSample {
            points: sampled,
            label: project_to_2d(&label3, cam),
            camera_id: w.camera_id(),
            t_min: w.t_min(),
            t_max: w.t_max(),
            raw_event_count: w.len(),
            raw_point_count: points.len(),
            label_fallback: fallback,
            window_index: index,
        });
        rasters.push(points);
    }
    Ok(LabeledWindow {
        index,
        views,
        label3d,
        rasters,
    })
}

/// Labeled windows of a synthetic scene, one per generated window.
pub fn scene_windows(scene: &SyntheticScene, cfg: &DatasetConfig) -> Result<Vec<LabeledWindow>> {
    let cams = scene.cameras();
    let mut rasterizer = Rasterizer::new();
    scene
        .windows
        .iter()
        .map(|w| label_group(&w.group()?, w.index, &cams, &scene.track, cfg, &mut rasterizer))
        .collect()
}

/// Flattens windows into per-view samples.
pub fn flatten(windows: &[LabeledWindow]) -> Vec<LabeledSample> {
    windows.iter().flat_map(|w| w.views.iter().cloned()).collect()
}

#[derive(Debug, Clone)]
pub struct Recording {
    /// Per-camera event streams, camera id = position.
    pub streams: Vec<Vec<Event>>,
    pub cameras: Vec<CameraGeometry>,
    pub track: LabelTrack,
}

impl Recording {
    pub fn from_scene(scene: &SyntheticScene) -> Self {
        Recording {
            streams: scene.streams(),
            cameras: scene.cameras(),
            track: scene.track.clone(),
        }
    }

    pub fn rig(&self) -> Result<StereoRig> {
        match self.cameras.as_slice() {
            [a, b, ..] => StereoRig::new(a.clone(), b.clone()),
            _ => Err(Error::Invalid("a stereo rig needs two cameras".into())),
        }
    }

    /// Interleaves all cameras by timestamp (ties in camera order).
    pub fn tagged(&self) -> Vec<TaggedEvent> {
        let mut out: Vec<TaggedEvent> = self
            .streams
            .iter()
            .enumerate()
            .flat_map(|(c, s)| s.iter().map(move |&event| TaggedEvent { camera: c as u32, event }))
            .collect();
        out.sort_by_key(|e| (e.event.t, e.camera));
        out
    }

    /// Constant-count windows over all cameras, labeled.
    pub fn windows(&self, mode: WindowMode, cfg: &DatasetConfig) -> Result<Vec<LabeledWindow>> {
        let cams = (0..self.streams.len() as u32).collect();
        let groups = slice_windows(&self.tagged(), mode, &cams)?;
        let mut rasterizer = Rasterizer::new();
        groups
            .iter()
            .enumerate()
            .map(|(i, g)| label_group(g, i, &self.cameras, &self.track, cfg, &mut rasterizer))
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (c, (s, cam)) in self.streams.iter().zip(&self.cameras).enumerate() {
            let stream = EventStream {
                events: s.clone(),
                width: cam.width,
                height: cam.height,
                camera: Some(cam.clone()),
            };
            write_event_stream(&dir.join(format!("cam{c}.evpc")), StreamFormat::Binary, &stream)?;
        }
        write_label_track(&dir.join("labels.csv"), &self.track)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let mut streams = Vec::new();
        let mut cameras = Vec::new();
        for c in 0.. {
            let path = dir.join(format!("cam{c}.evpc"));
            if !path.exists() {
                break;
            }
            let s = read_event_stream(&path, StreamFormat::Binary)?;
            let cam = s.camera.ok_or_else(|| {
                Error::Invalid(format!("{} has no camera sidecar", path.display()))
            })?;
            streams.push(s.events);
            cameras.push(cam);
        }
        if streams.is_empty() {
            return Err(Error::Empty(format!("no cam0.evpc in {}", dir.display())));
        }
        let track = read_label_track(&dir.join("labels.csv"))?;
        Ok(Recording {
            streams,
            cameras,
            track,
        })
    }
}
