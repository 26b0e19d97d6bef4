//! Mean Label versus Last Label on a stationary and a moving scene.
//!
//! cargo run --release --example label_policies

use evpc::labeling::{last_label, mean_label, project_to_2d};
use evpc::synth::{default_rig, gen_scene, SyntheticSceneConfig};

fn main() -> evpc::Result<()> {
    for (name, cfg) in [
        ("stationary", SyntheticSceneConfig::new(default_rig(), 4).stationary()),
        ("moving", {
            let mut c = SyntheticSceneConfig::new(default_rig(), 4);
            c.amplitude_px = 20.0;
            c
        }),
    ] {
        let scene = gen_scene(&cfg, 3)?;
        let cam = &scene.rig.cam_a;
        for w in &scene.windows {
            let window = &w.group()?.windows[0];
            let mean = mean_label(window, &scene.track)?;
            let last = last_label(window, &scene.track)?;
            let (m, l, mid) = (
                project_to_2d(&mean.skeleton, cam),
                project_to_2d(&last, cam),
                project_to_2d(&w.mid_pose, cam),
            );
            let gap = |a: &[[f64; 2]], b: &[[f64; 2]]| {
                a.iter().zip(b).map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1])).fold(0.0, f64::max)
            };
            println!(
                "{name} window {}: {} labels averaged, |mean - last| {:.3} px, |mean - mid pose| {:.2e} px",
                w.index,
                mean.used,
                gap(&m.joints, &l.joints),
                gap(&m.joints, &mid.joints)
            );
        }
    }
    Ok(())
}
