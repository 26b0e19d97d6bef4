//! Acceptance criteria 1-11, run in order on one thread so the timed ones are
//! not competing with each other. Each prints one PASS/FAIL line; the test
//! fails if any criterion does.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use common::{
    compare_raster, fd_check, generic_params, mpjpe_oracle, nearest_oracle, project_oracle, random_point,
    random_points, random_rig, random_targets, random_window, raster_oracle, rng,
};
use evpc::config::RunConfig;
use evpc::events::{Event, EventWindow, Skeleton2D, Skeleton3D};
use evpc::experiment::{run_training, Corpus};
use evpc::geometry::triangulate;
use evpc::labeling::{last_label, mean_label, project_to_2d};
use evpc::metrics::{mpjpe_2d, mpjpe_3d};
use evpc::model::{forward, ModelConfig, ModelParams, Tensor2D};
use evpc::raster::{rasterize, ChannelSet, RasterConfig};
use evpc::simdr::{decode, encode, CodecConfig};
use evpc::synth::{default_rig, gen_scene, SyntheticSceneConfig};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn raster_conservation() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut failures = 0;
    let mut first = None;
    for i in 0..1000 {
        let n = r.random_range(1..=5000);
        let w = random_window(&mut r, n, 346, 260);
        let k = [1, 2, 4, 8][i % 4];
        let pts = rasterize(&w, &RasterConfig::new(k, ChannelSet::Xytpc).unwrap());
        let total: u64 = pts.iter().map(|p| u64::from(p.e_cnt)).sum();
        let res = if total != w.len() as u64 {
            Err(format!("window {i}: sum e_cnt {total} vs {} events", w.len()))
        } else {
            compare_raster(&pts, &raster_oracle(&w, k), 1e-12).map_err(|e| format!("window {i}: {e}"))
        };
        if let Err(e) = res {
            failures += 1;
            first.get_or_insert(e);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        failures == 0 && secs < 10.0,
        format!("1000 windows, {failures} mismatches, {secs:.2} s (limit 10 s){}", first.map_or(String::new(), |e| format!("; {e}"))),
    )
}

fn raster_reduction() -> Outcome {
    let mut r = rng(2);
    let mut ts: Vec<u64> = (0..30_000).map(|_| r.random_range(0..50_000)).collect();
    ts.sort_unstable();
    // a few blobs of 20 x 20 pixels
    let centers = [(60u16, 50u16), (170, 130), (280, 200)];
    let events = ts
        .into_iter()
        .map(|t| {
            let (cx, cy) = centers[r.random_range(0..centers.len())];
            Event::new(cx + r.random_range(0..20), cy + r.random_range(0..20), t, r.random_range(0..2))
        })
        .collect();
    let w = EventWindow::from_events(events, 0).unwrap();
    let pts = rasterize(&w, &RasterConfig::new(4, ChannelSet::Xytpc).unwrap());
    let oracle = raster_oracle(&w, 4).len();
    check(
        pts.len() < w.len() && pts.len() == oracle,
        format!("{} events -> {} points (distinct cells {oracle})", w.len(), pts.len()),
    )
}

fn codec_round_trip() -> Outcome {
    let start = Instant::now();
    let cfg = CodecConfig::default();
    let mut failures = 0usize;
    let mut cases = 0usize;
    for xi in 0..346 * 4 {
        let x = xi as f64 * 0.25;
        for yi in 0..260 * 4 {
            let y = yi as f64 * 0.25;
            let got = decode(&encode([x, y], 0, &cfg).unwrap()).unwrap();
            if got != (nearest_oracle(x, 346), nearest_oracle(y, 260)) {
                failures += 1;
            }
            cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        failures == 0 && secs < 60.0,
        format!("{cases} grid points, {failures} failures, {secs:.1} s (limit 60 s)"),
    )
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        in_channels: 5,
        widths: [4, 8, 8, 16],
        joints: 2,
        width: 10,
        height: 10,
        raw_features: false,
    }
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    let mut complete = 0;
    let cases = 10;
    for _ in 0..cases {
        let p = generic_params(&tiny_model(), &mut r);
        let x = random_points(&mut r, 8, 5);
        let t = random_targets(&mut r, 2, 10, 10);
        let fd = fd_check(&p, &x, &t, 1e-4, 1e-6);
        worst = worst.max(fd.max_error);
        if fd.kinks == 0 {
            complete += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-4 && complete > 0 && secs < 120.0,
        format!(
            "{cases} cases ({complete} with every parameter on a smooth stencil), max relative error {worst:.2e}, {secs:.1} s"
        ),
    )
}

fn permutation_invariance() -> Outcome {
    let cfg = ModelConfig::default();
    let mut r = rng(5);
    let params = ModelParams::init(&cfg, &mut r).unwrap();
    let mut failures = 0;
    for _ in 0..200 {
        let n = r.random_range(1..=300);
        let x = random_points(&mut r, n, 5);
        let base = forward(&x, &params).unwrap();
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut r);
            let rows: Vec<Vec<f64>> = perm.iter().map(|&i| x.row(i).to_vec()).collect();
            let out = forward(&Tensor2D::from_rows(&rows).unwrap(), &params).unwrap();
            if out.logits_x.data() != base.logits_x.data() || out.logits_y.data() != base.logits_y.data() {
                failures += 1;
            }
        }
    }
    check(failures == 0, format!("200 sets x 5 permutations, {failures} differ"))
}

fn triangulation_round_trip() -> Outcome {
    let start = Instant::now();
    let mut r = rng(6);
    let mut worst_mm: f64 = 0.0;
    let mut worst_px: f64 = 0.0;
    for _ in 0..1000 {
        let rig = random_rig(&mut r);
        let x = random_point(&mut r);
        let t = triangulate(&rig, project_oracle(&rig.cam_a, x), project_oracle(&rig.cam_b, x)).unwrap();
        let d = ((t.point[0] - x[0]).powi(2) + (t.point[1] - x[1]).powi(2) + (t.point[2] - x[2]).powi(2)).sqrt();
        worst_mm = worst_mm.max(d);
        worst_px = worst_px.max(t.residual);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_mm <= 1e-6 && worst_px <= 1e-9 && secs < 5.0,
        format!("1000 configurations, max error {worst_mm:.2e} mm, max residual {worst_px:.2e} px, {secs:.2} s"),
    )
}

fn mpjpe_equivalence() -> Outcome {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let j = r.random_range(1..=13);
        let n = r.random_range(1..=8);
        let make = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<(Vec<[f64; 3]>, Vec<bool>)> {
            (0..n)
                .map(|_| {
                    let joints = (0..j)
                        .map(|_| std::array::from_fn(|_| r.random_range(-1000.0..1000.0)))
                        .collect();
                    (joints, (0..j).map(|_| r.random_bool(0.9)).collect())
                })
                .collect()
        };
        let (p, g) = (make(&mut r), make(&mut r));
        let oracle = mpjpe_oracle(&p, &g);
        let to = |v: &[(Vec<[f64; 3]>, Vec<bool>)]| -> Vec<Skeleton3D> {
            v.iter()
                .map(|(j, m)| Skeleton3D {
                    joints: j.clone(),
                    valid: m.clone(),
                })
                .collect()
        };
        let got = mpjpe_3d(&to(&p), &to(&g)).unwrap().mpjpe;
        if oracle.is_nan() != got.is_nan() {
            return Err(format!("oracle {oracle}, got {got}"));
        }
        if !oracle.is_nan() {
            worst = worst.max((got - oracle).abs());
        }
    }
    let single = mpjpe_2d(&[Skeleton2D::new(vec![[3.0, 4.0]])], &[Skeleton2D::new(vec![[0.0, 0.0]])])
        .unwrap()
        .mpjpe;
    check(
        worst <= 1e-9 && single == 5.0,
        format!("100 pairs, max deviation {worst:.2e}; (3,4) -> {single}"),
    )
}

fn desk_learning() -> Outcome {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.seed = 8;
    cfg.train_windows = 250;
    cfg.test_windows = 50;
    cfg.points = 1024;
    cfg.min_points = 0;
    let corpus = Corpus::load(&cfg).unwrap();
    let (out, test) = run_training(&corpus, &cfg).map_err(|e| e.to_string())?;
    let (train, _) = corpus.split(&cfg).map_err(|e| e.to_string())?;
    let baseline = mean_pose_baseline(&train, &test);
    let secs = start.elapsed().as_secs_f64();
    let ratio = out.final_loss() / out.initial_loss();
    let mpjpe = out.final_mpjpe2d();
    let views: usize = test.iter().map(|w| w.views.len()).sum();
    check(
        mpjpe < 3.0 && ratio < 0.2 && secs < 600.0,
        format!(
            "{views} test samples, {:?}, final MPJPE_2D {mpjpe:.3} px (limit 3, per-camera mean pose {baseline:.3} px), loss ratio {ratio:.3} (limit 0.2), {secs:.0} s (limit 600 s)",
            out.status
        ),
    )
}

/// MPJPE_2D of predicting each camera's mean training pose.
fn mean_pose_baseline(train: &[evpc::dataset::LabeledWindow], test: &[evpc::dataset::LabeledWindow]) -> f64 {
    let mut sums: std::collections::BTreeMap<u32, (Vec<[f64; 2]>, f64)> = Default::default();
    for v in train.iter().flat_map(|w| &w.views) {
        let (acc, n) = sums
            .entry(v.camera_id)
            .or_insert_with(|| (vec![[0.0; 2]; v.label.joints.len()], 0.0));
        for (a, p) in acc.iter_mut().zip(&v.label.joints) {
            a[0] += p[0];
            a[1] += p[1];
        }
        *n += 1.0;
    }
    let (pred, gt): (Vec<_>, Vec<_>) = test
        .iter()
        .flat_map(|w| &w.views)
        .map(|v| {
            let (acc, n) = &sums[&v.camera_id];
            let mean = acc.iter().map(|a| [a[0] / n, a[1] / n]).collect();
            (Skeleton2D::new(mean), v.label.clone())
        })
        .unzip();
    mpjpe_2d(&pred, &gt).map_or(f64::NAN, |m| m.mpjpe)
}

fn label_policies() -> Outcome {
    let mut cfg = SyntheticSceneConfig::new(default_rig(), 9);
    let still = gen_scene(&cfg.clone().stationary(), 20).unwrap();
    let mut still_failures = 0;
    for w in &still.windows {
        let g = w.group().unwrap();
        let mean = mean_label(&g.merged(), &still.track).unwrap().skeleton;
        for v in &g.windows {
            if mean != last_label(v, &still.track).unwrap() {
                still_failures += 1;
            }
        }
    }
    cfg.amplitude_px = 20.0;
    let moving = gen_scene(&cfg, 20).unwrap();
    let mut worst: f64 = 0.0;
    for w in &moving.windows {
        let g = w.group().unwrap();
        let mean = mean_label(&g.merged(), &moving.track).unwrap().skeleton;
        for cam in moving.cameras() {
            let a = project_to_2d(&mean, &cam);
            // analytic mid-trajectory pose, projected by the test's own oracle
            for (j, p) in a.joints.iter().enumerate() {
                let start = w.start_pose.joints[j];
                let end = w.end_pose.joints[j];
                let mid = std::array::from_fn(|k| 0.5 * (start[k] + end[k]));
                let q = project_oracle(&cam, mid);
                worst = worst.max((p[0] - q[0]).abs()).max((p[1] - q[1]).abs());
            }
        }
    }
    check(
        still_failures == 0 && worst <= 1e-9,
        format!("stationary: {still_failures} mean/last mismatches; moving: max deviation from mid pose {worst:.2e} px"),
    )
}

fn ablation_structure() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut lines = Vec::new();
    let mut rows_by_sweep = Vec::new();
    for sweep in ["points", "channels", "k"] {
        let out = dir.path().join(format!("{sweep}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_evpc"))
            .args(["ablate", "--sweep", sweep, "--out"])
            .arg(&out)
            .args(["--set", "train_windows=4", "--set", "test_windows=3", "--set", "epochs=1"])
            .args(["--set", "min_points=0", "--set", "bench_reps=30", "--set", "bench_warmup=5"])
            .output()
            .unwrap();
        if !status.status.success() {
            return Err(format!("ablate {sweep}: {}", String::from_utf8_lossy(&status.stderr)));
        }
        let text = std::fs::read_to_string(&out).unwrap();
        let rows: Vec<Vec<String>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        rows_by_sweep.push((sweep, rows));
    }
    let settings = |rows: &[Vec<String>]| rows.iter().map(|r| r[1].clone()).collect::<Vec<_>>();
    let (_, points) = &rows_by_sweep[0];
    let latency: Vec<f64> = points.iter().map(|r| r[4].parse().unwrap()).collect();
    let monotone = latency.windows(2).all(|w| w[0] <= w[1]);
    let expect = [
        vec!["1024", "2048", "4096", "7500"],
        vec!["xyt", "xytp", "xytpc"],
        vec!["1", "2", "4", "8"],
    ];
    let mut ok = monotone;
    for ((sweep, rows), want) in rows_by_sweep.iter().zip(&expect) {
        let got = settings(rows);
        let all_ok = rows.iter().all(|r| r[5] == "ok");
        ok &= got == *want && all_ok;
        lines.push(format!("{sweep} {got:?}{}", if all_ok { "" } else { " (failed cells)" }));
    }
    check(
        ok,
        format!(
            "{}; points latency ms {:?} {}",
            lines.join(", "),
            latency,
            if monotone { "monotone" } else { "NOT monotone" }
        ),
    )
}

fn raster_throughput() -> Outcome {
    let mut r = rng(11);
    let mut ts: Vec<u64> = (0..30_000).map(|_| r.random_range(0..33_000)).collect();
    ts.sort_unstable();
    let events = ts
        .into_iter()
        .map(|t| Event::new(r.random_range(0..346), r.random_range(0..260), t, r.random_range(0..2)))
        .collect();
    let w = EventWindow::from_events(events, 0).unwrap();
    let cfg = RasterConfig::new(4, ChannelSet::Xytpc).unwrap();
    for _ in 0..10 {
        std::hint::black_box(rasterize(&w, &cfg));
    }
    let reps = 100;
    let start = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(rasterize(std::hint::black_box(&w), &cfg));
    }
    let mean_ms = start.elapsed().as_secs_f64() * 1000.0 / reps as f64;
    check(mean_ms < 5.0, format!("30000 events, K=4: mean {mean_ms:.3} ms over {reps} runs (limit 5 ms)"))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("rasterization conservation", raster_conservation),
        ("rasterization reduction", raster_reduction),
        ("codec round trip", codec_round_trip),
        ("gradient correctness", gradient_check),
        ("permutation invariance", permutation_invariance),
        ("triangulation round trip", triangulation_round_trip),
        ("MPJPE oracle equivalence", mpjpe_equivalence),
        ("desk-scale learning", desk_learning),
        ("label-policy equivalence", label_policies),
        ("ablation harness structure", ablation_structure),
        ("rasterization throughput", raster_throughput),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let line = match outcome {
            Ok(d) => format!("criterion {n:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed.push(n);
                format!("criterion {n:>2} FAIL  {name}: {d}")
            }
        };
        // Written to the raw handle so the verdicts survive output capture.
        let _ = writeln!(std::io::stderr(), "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
