//! Produce the benchmark artifacts: a cached sweep across heterogeneity
//! levels, the summary CSV, and the per-alpha accuracy panels as SVG.
//!
//! ```sh
//! cargo run --release --example benchmark_panels
//! ```
//!
//! Outputs land in `target/benchmark-demo/`. Re-running reuses the cache.

use fafl::config::ExperimentConfig;
use fafl::engine::sweep::run_sweep;
use fafl::fairness::MechanismKind;
use fafl::report::{build_report, emit_csv, emit_panels, sweep_to_csv};

fn main() -> fafl::Result<()> {
    let out_dir = std::path::Path::new("target/benchmark-demo");
    let cache = out_dir.join("cache");
    std::fs::create_dir_all(out_dir)?;

    let mut base = ExperimentConfig::default();
    base.rounds = 40;
    base.adversaries = 1; // reputation runs as the A = 1 scheme
    base.eval_every = 2;
    base.train.local_epochs = 2;
    base.train.learning_rate = 0.05;

    let mechanisms = [MechanismKind::FedAvg, MechanismKind::Ltf, MechanismKind::Reputation];
    let alphas = [0.2, 0.4, 0.7];
    let seeds = [1, 2];

    let (cells, computed) = run_sweep(&base, &mechanisms, &alphas, &seeds, &cache, 0)?;
    println!("{} cells ready ({computed} computed, {} from cache)\n", cells.len(), cells.len() - computed);

    let report = build_report(&cells);
    print!("{}", sweep_to_csv(&report)?);

    let csv_path = out_dir.join("sweep.csv");
    let svg_path = out_dir.join("panels.svg");
    emit_csv(&report, &csv_path)?;
    emit_panels(&cells, &svg_path)?;
    println!("\nwrote {} and {}", csv_path.display(), svg_path.display());
    Ok(())
}
