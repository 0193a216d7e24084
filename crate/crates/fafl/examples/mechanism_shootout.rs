//! Run all six aggregation mechanisms on one heterogeneous configuration
//! and compare final accuracy and cost.
//!
//! ```sh
//! cargo run --release --example mechanism_shootout
//! ```

use fafl::config::ExperimentConfig;
use fafl::engine::run_experiment;
use fafl::fairness::MechanismKind;

fn main() -> fafl::Result<()> {
    println!(
        "{:<20} {:>8} {:>8} {:>12} {:>12} {:>10}",
        "scheme", "final", "last10", "bytes", "latency ms", "crypto ms"
    );
    for kind in MechanismKind::ALL {
        let mut cfg = ExperimentConfig::default();
        cfg.mechanism = kind;
        cfg.alpha = 0.7;
        cfg.max_labels = 1;
        cfg.rounds = 60;
        cfg.seed = 4;
        cfg.eval_every = 5;
        let series = run_experiment(&cfg, 0)?;
        println!(
            "{:<20} {:>8.3} {:>8.3} {:>12} {:>12.1} {:>10.2}",
            series.scheme,
            series.final_accuracy(),
            series.last10_mean_accuracy(),
            series.total_bytes,
            series.total_sim_latency_ms,
            series.crypto_time_ms
        );
    }
    println!("\n(alpha = 0.7, one restricted label per client, {} rounds, AES-GCM on)", 60);
    Ok(())
}
