use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evpc::ablation::{run_ablation_with, Sweep, CSV_HEADER};
use evpc::config::RunConfig;
use evpc::dataset::Recording;
use evpc::events::{read_camera, read_event_stream, write_event_stream, EventWindow, StreamFormat};
use evpc::experiment::{evaluate, measure_latency, run_training, Corpus};
use evpc::geometry::{read_prediction_csv, skeleton_to_3d, write_joints3d_csv, StereoRig};
use evpc::model::{read_checkpoint, write_checkpoint};
use evpc::raster::{rasterize, write_points, ChannelSet, RasterConfig};
use evpc::synth::gen_scene;
use evpc::{Error, Result};

#[derive(Parser)]
#[command(name = "evpc", version, about = "Event point-cloud pose estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Run settings shared by the data-driven subcommands.
#[derive(Args, Default)]
struct RunArgs {
    /// Flat key = value run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set epochs=5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_points: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    channels: Option<ChannelSet>,
    /// Feed unscaled channel values to the model.
    #[arg(long)]
    raw_features: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(v) = self.points {
            cfg.points = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.min_points {
            cfg.min_points = v;
        }
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.channels {
            cfg.channels = v;
        }
        if self.raw_features {
            cfg.raw_features = true;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert an event stream between CSV and binary (chosen by extension).
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rasterize a stream (whole file, or windows of N events) into points.
    Rasterize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value = "xytpc")]
        channels: ChannelSet,
        #[arg(long)]
        out: PathBuf,
        /// Split into constant-count windows, writing `<stem>_<i>.<ext>`.
        #[arg(long)]
        window_events: Option<usize>,
    },
    /// Write a synthetic recording directory (cam*.evpc, cam*.cam, labels.csv).
    Synth {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; also writes `<out>.curve.csv`.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a recording directory (or the synthetic test split).
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Triangulate two per-view prediction CSVs.
    Triangulate {
        #[arg(long)]
        pred_a: PathBuf,
        #[arg(long)]
        pred_b: PathBuf,
        #[arg(long)]
        cam_a: PathBuf,
        #[arg(long)]
        cam_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage-wise latency of the full two-view pipeline at batch size 1.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        threshold_us: Option<f64>,
        /// Write the JSON report here (printed to stdout otherwise).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Retrain and evaluate across one parameter sweep.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        sweep: Sweep,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_stem_suffix(path: &Path, i: usize) -> PathBuf {
    let stem = path.file_stem().map_or("points".into(), |s| s.to_string_lossy().into_owned());
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{i}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{i}"),
    };
    path.with_file_name(name)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Convert { input, out } => {
            let stream = read_event_stream(&input, StreamFormat::from_path(&input))?;
            write_event_stream(&out, StreamFormat::from_path(&out), &stream)?;
            eprintln!("{} events -> {}", stream.events.len(), out.display());
        }
        Cmd::Rasterize {
            input,
            k,
            channels,
            out,
            window_events,
        } => {
            let cfg = RasterConfig::new(k, channels)?;
            let stream = read_event_stream(&input, StreamFormat::from_path(&input))?;
            let chunks: Vec<Vec<_>> = match window_events {
                Some(0) => return Err(Error::Invalid("--window-events must be positive".into())),
                // the trailing partial window is dropped, as in windowing
                Some(n) => stream.events.chunks_exact(n).map(<[_]>::to_vec).collect(),
                None => vec![stream.events],
            };
            for (i, events) in chunks.into_iter().enumerate() {
                let mut points = rasterize(&EventWindow::from_events(events, 0)?, &cfg);
                evpc::raster::mask_channels(&mut points, channels);
                let path = if window_events.is_some() {
                    with_stem_suffix(&out, i)
                } else {
                    out.clone()
                };
                write_points(&path, &points)?;
                eprintln!("{} points -> {}", points.len(), path.display());
            }
        }
        Cmd::Synth { run, out } => {
            let cfg = run.resolve()?;
            let scene = gen_scene(&cfg.scene(), cfg.train_windows + cfg.test_windows)?;
            Recording::from_scene(&scene).write(&out)?;
            eprintln!("{} windows -> {}", scene.windows.len(), out.display());
        }
        Cmd::Train { run, out } => {
            let cfg = run.resolve()?;
            let corpus = Corpus::load(&cfg)?;
            let (outcome, _) = run_training(&corpus, &cfg)?;
            write_checkpoint(&out, &outcome.params)?;
            let curve = PathBuf::from(format!("{}.curve.csv", out.display()));
            outcome.write_curve_csv(&curve)?;
            eprintln!(
                "{:?}: loss {:.4} -> {:.4}, val MPJPE_2D {:.3} px; wrote {} and {}",
                outcome.status,
                outcome.initial_loss(),
                outcome.final_loss(),
                outcome.final_mpjpe2d(),
                out.display(),
                curve.display()
            );
        }
        Cmd::Eval {
            run,
            model,
            data,
            report,
        } => {
            let mut cfg = run.resolve()?;
            let params = read_checkpoint(&model)?;
            cfg.channels = channels_for(params.config().in_channels)?;
            let (windows, rig) = match data {
                Some(dir) => {
                    let corpus = Corpus::from_recording(&Recording::read(&dir)?, cfg.window_events)?;
                    (corpus.label(&cfg, 0..corpus.groups.len())?, corpus.rig)
                }
                None => {
                    let corpus = Corpus::load(&cfg)?;
                    (corpus.split(&cfg)?.1, corpus.rig)
                }
            };
            let r = evaluate(&params, &windows, &rig, &cfg)?;
            let json = serde_json::to_string_pretty(&r).expect("report serializes");
            match report {
                Some(p) => write(&p, &json)?,
                None => println!("{json}"),
            }
            eprintln!("MPJPE_2D {:.3} px, MPJPE_3D {:.2} mm", r.mpjpe2d, r.mpjpe3d.unwrap_or(f64::NAN));
        }
        Cmd::Triangulate {
            pred_a,
            pred_b,
            cam_a,
            cam_b,
            out,
        } => {
            let rig = StereoRig::new(read_camera(&cam_a)?, read_camera(&cam_b)?)?;
            let t = skeleton_to_3d(&rig, &read_prediction_csv(&pred_a)?, &read_prediction_csv(&pred_b)?)?;
            for (j, d) in t.diagnostics.iter().enumerate() {
                if let Some(d) = d {
                    eprintln!("joint {j}: {d}");
                }
            }
            write_joints3d_csv(&out, &t)?;
        }
        Cmd::Bench {
            run,
            model,
            reps,
            warmup,
            threshold_us,
            report,
        } => {
            let mut cfg = run.resolve()?;
            if let Some(v) = reps {
                cfg.bench_reps = v;
            }
            if let Some(v) = warmup {
                cfg.bench_warmup = v;
            }
            if let Some(v) = threshold_us {
                cfg.threshold_us = v;
            }
            let params = read_checkpoint(&model)?;
            cfg.channels = channels_for(params.config().in_channels)?;
            // only the test groups are needed as inputs
            let mut data_cfg = cfg.clone();
            data_cfg.train_windows = 0;
            data_cfg.test_windows = cfg.test_windows.max(1);
            let corpus = Corpus::load(&data_cfg)?;
            let r = measure_latency(&params, &corpus, &data_cfg)?;
            eprint!("{}", r.to_csv());
            eprintln!(
                "end-to-end mean {:.1} us vs threshold {:.0} us: {}",
                r.end_to_end.mean_us,
                r.threshold_us,
                if r.pass { "PASS" } else { "FAIL" }
            );
            match report {
                Some(p) => write(&p, &r.to_json())?,
                None => println!("{}", r.to_json()),
            }
        }
        Cmd::Ablate { run, sweep, out } => {
            use std::io::Write;
            let cfg = run.resolve()?;
            let file = std::fs::File::create(&out).map_err(|e| Error::io(&out, e))?;
            let mut w = std::io::LineWriter::new(file);
            writeln!(w, "{CSV_HEADER}").map_err(|e| Error::io(&out, e))?;
            let mut io_err = None;
            run_ablation_with(sweep, &cfg, |row| {
                eprintln!("{}", row.csv());
                if let Err(e) = writeln!(w, "{}", row.csv()) {
                    io_err.get_or_insert(e);
                }
            })?;
            if let Some(e) = io_err {
                return Err(Error::io(&out, e));
            }
        }
    }
    Ok(())
}

fn channels_for(in_channels: usize) -> Result<ChannelSet> {
    ChannelSet::ALL
        .into_iter()
        .find(|c| c.channels() == in_channels)
        .ok_or_else(|| Error::Invalid(format!("checkpoint has {in_channels} input channels")))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
