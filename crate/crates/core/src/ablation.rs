//! Parameter sweeps: every cell retrains from the same seed on the same
//! corpus, then reports test error and pipeline latency.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiment::{evaluate, measure_latency, run_training, Corpus};
use crate::labeling::LabelPolicy;
use crate::raster::ChannelSet;
use crate::sampler::DEFAULT_POINT_COUNTS;

pub const SIGMA_VALUES: [f64; 5] = [2.0, 4.0, 6.0, 8.0, 10.0];
pub const K_VALUES: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Channels,
    Points,
    Sigma,
    K,
    Labels,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "channels" => Ok(Sweep::Channels),
            "points" => Ok(Sweep::Points),
            "sigma" => Ok(Sweep::Sigma),
            "k" => Ok(Sweep::K),
            "labels" => Ok(Sweep::Labels),
            other => Err(Error::Invalid(format!(
                "unknown sweep {other:?} (channels, points, sigma, k, labels)"
            ))),
        }
    }
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::Channels => "channels",
            Sweep::Points => "points",
            Sweep::Sigma => "sigma",
            Sweep::K => "k",
            Sweep::Labels => "labels",
        }
    }

    /// Settings in row order, as config values.
    pub fn settings(self) -> Vec<String> {
        match self {
            Sweep::Channels => ChannelSet::ALL.iter().map(|c| c.to_string()).collect(),
            Sweep::Points => DEFAULT_POINT_COUNTS.iter().map(|p| p.to_string()).collect(),
            Sweep::Sigma => SIGMA_VALUES.iter().map(|s| s.to_string()).collect(),
            Sweep::K => K_VALUES.iter().map(|k| k.to_string()).collect(),
            Sweep::Labels => [LabelPolicy::Mean, LabelPolicy::Last].iter().map(|l| l.to_string()).collect(),
        }
    }

    fn key(self) -> &'static str {
        match self {
            Sweep::Channels => "channels",
            Sweep::Points => "points",
            Sweep::Sigma => "sigma",
            Sweep::K => "k",
            Sweep::Labels => "labels",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub sweep: Sweep,
    pub setting: String,
    pub mpjpe2d: f64,
    pub mpjpe3d: f64,
    pub latency_ms: f64,
    /// `None` on success, otherwise the reason the cell failed.
    pub failure: Option<String>,
}

pub const CSV_HEADER: &str = "sweep,setting,mpjpe2d_px,mpjpe3d_mm,latency_ms,status";

impl AblationRow {
    pub fn csv(&self) -> String {
        let status = match &self.failure {
            None => "ok".to_string(),
            Some(m) => format!("failed: {}", m.replace([',', '\n'], ";")),
        };
        format!(
            "{},{},{:.4},{:.4},{:.4},{}",
            self.sweep.name(),
            self.setting,
            self.mpjpe2d,
            self.mpjpe3d,
            self.latency_ms,
            status
        )
    }
}

fn run_cell(corpus: &Corpus, cfg: &RunConfig) -> Result<(f64, f64, f64)> {
    let (out, test) = run_training(corpus, cfg)?;
    let report = evaluate(&out.params, &test, &corpus.rig, cfg)?;
    let latency = measure_latency(&out.params, corpus, cfg)?;
    Ok((
        report.mpjpe2d,
        report.mpjpe3d.unwrap_or(f64::NAN),
        latency.end_to_end.mean_us / 1000.0,
    ))
}

/// Runs every setting of `sweep` on top of `base`. A failing cell yields a
/// row marked failed and the sweep continues. `on_row` sees each row as soon
/// as it is finished.
pub fn run_ablation_with(
    sweep: Sweep,
    base: &RunConfig,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let corpus = Corpus::load(base)?;
    let mut rows = Vec::new();
    for setting in sweep.settings() {
        let mut cfg = base.clone();
        let result = cfg
            .set(sweep.key(), &setting)
            .and_then(|()| run_cell(&corpus, &cfg));
        let row = match result {
            Ok((e2, e3, lat)) => AblationRow {
                sweep,
                setting,
                mpjpe2d: e2,
                mpjpe3d: e3,
                latency_ms: lat,
                failure: None,
            },
            Err(e) => AblationRow {
                sweep,
                setting,
                mpjpe2d: f64::NAN,
                mpjpe3d: f64::NAN,
                latency_ms: f64::NAN,
                failure: Some(e.to_string()),
            },
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub fn run_ablation(sweep: Sweep, base: &RunConfig) -> Result<Vec<AblationRow>> {
    run_ablation_with(sweep, base, |_| {})
}

pub fn to_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv());
    }
    s
}
