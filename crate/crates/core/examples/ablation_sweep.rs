//! Retrains a small model for each setting of one sweep and prints the CSV
//! rows.
//!
//! cargo run --release --example ablation_sweep -- [channels|points|sigma|k|labels]

use evpc::ablation::{run_ablation_with, Sweep, CSV_HEADER};
use evpc::config::RunConfig;

fn main() -> evpc::Result<()> {
    let sweep: Sweep = std::env::args().nth(1).as_deref().unwrap_or("k").parse()?;
    let mut cfg = RunConfig {
        train_windows: 20,
        test_windows: 5,
        epochs: 2,
        bench_reps: 10,
        bench_warmup: 2,
        ..RunConfig::default()
    };
    cfg.lr_schedule = vec![(0, 1e-3)];
    println!("{CSV_HEADER}");
    run_ablation_with(sweep, &cfg, |row| println!("{}", row.csv()))?;
    Ok(())
}
