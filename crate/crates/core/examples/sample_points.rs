//! Fixed-size point sampling: without replacement when enough points exist,
//! with replacement otherwise, reproducible from a seed.
//!
//! cargo run --release --example sample_points

use evpc::raster::{rasterize, RasterConfig};
use evpc::sampler::{sample_points, SamplerConfig};
use evpc::synth::{default_rig, gen_scene, SyntheticSceneConfig};

fn main() -> evpc::Result<()> {
    let scene = gen_scene(&SyntheticSceneConfig::new(default_rig(), 3), 1)?;
    let window = &scene.windows[0].group()?.windows[0];
    let points = rasterize(window, &RasterConfig::default());
    println!("{} rasterized points", points.len());

    for target in [256, points.len(), 4 * points.len()] {
        let cfg = SamplerConfig {
            target_count: target,
            seed: 11,
            min_points: 0,
        };
        let a = sample_points(&points, &cfg)?;
        let b = sample_points(&points, &cfg)?;
        let mut distinct: Vec<_> = a.iter().map(|p| (p.x, p.y, p.slice)).collect();
        distinct.sort_unstable();
        distinct.dedup();
        println!(
            "target {target}: {} drawn, {} distinct, same seed reproduces: {}",
            a.len(),
            distinct.len(),
            a == b
        );
    }
    Ok(())
}
