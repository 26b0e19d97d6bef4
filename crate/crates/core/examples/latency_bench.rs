//! Stage-wise latency of the two-view pipeline with a freshly initialized
//! desk-scale model.
//!
//! cargo run --release --example latency_bench -- [reps]

use evpc::config::RunConfig;
use evpc::experiment::{measure_latency, Corpus};
use evpc::model::ModelParams;
use evpc::sampler::derive_rng;

fn main() -> evpc::Result<()> {
    let reps = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let cfg = RunConfig {
        train_windows: 0,
        test_windows: 8,
        bench_reps: reps,
        ..RunConfig::default()
    };
    let params = ModelParams::init(&cfg.model(), &mut derive_rng(cfg.seed, 0))?;
    let corpus = Corpus::load(&cfg)?;
    let report = measure_latency(&params, &corpus, &cfg)?;
    print!("{}", report.to_csv());
    println!(
        "end-to-end {:.1} us, threshold {:.0} us: {}",
        report.end_to_end.mean_us,
        report.threshold_us,
        if report.pass { "real time" } else { "too slow" }
    );
    Ok(())
}
