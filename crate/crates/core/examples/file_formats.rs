//! Writes a synthetic recording to disk, converts one stream between the CSV
//! and packed binary formats and reads everything back.
//!
//! cargo run --release --example file_formats

use evpc::dataset::Recording;
use evpc::events::{read_event_stream, write_event_stream, StreamFormat};
use evpc::synth::{default_rig, gen_scene, SyntheticSceneConfig};

fn main() -> evpc::Result<()> {
    let scene = gen_scene(&SyntheticSceneConfig::new(default_rig(), 1), 4)?;
    let dir = std::env::temp_dir().join("evpc_file_formats");
    Recording::from_scene(&scene).write(&dir)?;
    println!("recording written to {}", dir.display());

    let bin = dir.join("cam0.evpc");
    let stream = read_event_stream(&bin, StreamFormat::Binary)?;
    println!(
        "cam0: {} events on a {}x{} sensor, projection sidecar {}",
        stream.events.len(),
        stream.width,
        stream.height,
        if stream.camera.is_some() { "present" } else { "missing" }
    );

    let csv = dir.join("cam0.csv");
    write_event_stream(&csv, StreamFormat::Csv, &stream)?;
    let back = read_event_stream(&csv, StreamFormat::Csv)?;
    assert_eq!(back.events, stream.events);
    let size = |p: &std::path::Path| std::fs::metadata(p).map(|m| m.len()).unwrap_or(0);
    println!("csv round trip exact: {} bytes csv vs {} bytes binary", size(&csv), size(&bin));

    let rec = Recording::read(&dir)?;
    println!("read back {} streams and {} labels", rec.streams.len(), rec.track.len());
    Ok(())
}
