//! Projects a 3D point through a two-camera rig, triangulates it back and
//! shows how pixel noise turns into 3D error.
//!
//! cargo run --release --example triangulate_rig

use evpc::geometry::triangulate;
use evpc::sampler::derive_rng;
use evpc::synth::default_rig;
use rand::Rng;

fn main() -> evpc::Result<()> {
    let rig = default_rig();
    println!("baseline {:.1} mm", rig.baseline());
    let point = [150.0, -400.0, 220.0];
    let pa = rig.cam_a.project(point).expect("in front of camera a");
    let pb = rig.cam_b.project(point).expect("in front of camera b");
    let t = triangulate(&rig, pa, pb)?;
    let err = |p: [f64; 3]| (0..3).map(|i| (p[i] - point[i]).powi(2)).sum::<f64>().sqrt();
    println!("exact views: error {:.2e} mm, residual {:.2e} px", err(t.point), t.residual);

    let mut rng = derive_rng(5, 0);
    let mut jitter = |p: [f64; 2]| [p[0] + rng.random_range(-1.0..1.0), p[1] + rng.random_range(-1.0..1.0)];
    let errors: Vec<f64> = (0..1000)
        .map(|_| triangulate(&rig, jitter(pa), jitter(pb)).map(|t| err(t.point)))
        .collect::<evpc::Result<_>>()?;
    println!(
        "+-1 px noise: mean 3D error {:.2} mm over {} trials",
        errors.iter().sum::<f64>() / errors.len() as f64,
        errors.len()
    );
    Ok(())
}
