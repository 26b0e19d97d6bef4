//! Rasterizes a hand-made window and a dense synthetic one into K time slices
//! of per-pixel points.
//!
//! cargo run --release --example rasterize_window

use evpc::events::{Event, EventWindow};
use evpc::raster::{rasterize, ChannelSet, RasterConfig};
use evpc::synth::{default_rig, gen_scene, SyntheticSceneConfig};

fn main() -> evpc::Result<()> {
    // three events on one pixel at 0.1, 0.2 and 0.3 s, K = 1: one point
    let events = vec![Event::new(5, 7, 100_000, 1), Event::new(5, 7, 200_000, 0), Event::new(5, 7, 300_000, 1)];
    let window = EventWindow::from_events(events, 0)?;
    for p in rasterize(&window, &RasterConfig::new(1, ChannelSet::Xytpc)?) {
        println!("{p:?}");
    }

    // a synthetic window: many events fall on the same pixel and slice
    let scene = gen_scene(&SyntheticSceneConfig::new(default_rig(), 2), 1)?;
    let group = scene.windows[0].group()?;
    for k in [1, 2, 4, 8] {
        let cfg = RasterConfig::new(k, ChannelSet::Xytpc)?;
        let points: usize = group.windows.iter().map(|w| rasterize(w, &cfg).len()).sum();
        println!("K = {k}: {} events -> {points} points", group.event_count());
    }
    Ok(())
}
