//! Trains the desk-scale model on a synthetic stick-figure scene and prints
//! the loss curve.
//!
//! cargo run --release --example train_synthetic -- [train_windows] [test_windows] [epochs]

use std::time::Instant;

use evpc::dataset::{flatten, scene_windows, DatasetConfig};
use evpc::model::{prepare_sample, train, ModelConfig, TrainConfig};
use evpc::sampler::SamplerConfig;
use evpc::simdr::CodecConfig;
use evpc::synth::{default_rig, gen_scene, SyntheticSceneConfig};

fn main() -> evpc::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let train_windows = args.first().copied().unwrap_or(250);
    let test_windows = args.get(1).copied().unwrap_or(50);
    let epochs = args.get(2).copied().unwrap_or(30);

    let scene = gen_scene(&SyntheticSceneConfig::new(default_rig(), 7), train_windows + test_windows)?;
    let ds = DatasetConfig {
        sampler: SamplerConfig {
            target_count: 1024,
            ..SamplerConfig::default()
        },
        ..DatasetConfig::default()
    };
    let windows = scene_windows(&scene, &ds)?;
    let (train_w, test_w) = windows.split_at(train_windows);
    let model = ModelConfig::default().for_channels(ds.raster.channels);
    let codec = CodecConfig::default();
    let prep = |w| -> evpc::Result<Vec<_>> {
        flatten(w)
            .iter()
            .map(|s| prepare_sample(s, ds.raster.channels, &model, &codec))
            .collect()
    };
    let train_set = prep(train_w)?;
    let test_set = prep(test_w)?;
    println!("{} train samples, {} test samples", train_set.len(), test_set.len());

    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = train(&train_set, &test_set, &model, &cfg)?;
    println!("epoch,step,loss,mpjpe2d");
    for r in &out.curve {
        println!("{},{},{:.4},{:.3}", r.epoch, r.step, r.loss, r.mpjpe2d);
    }
    println!(
        "status {:?}, loss ratio {:.3}, {:.1} s",
        out.status,
        out.final_loss() / out.initial_loss(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
