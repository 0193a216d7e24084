//! Sweep the non-IID fraction and watch shard label distributions drift
//! apart, measured by mean pairwise total-variation distance.
//!
//! ```sh
//! cargo run --example heterogeneity
//! ```

use fafl::data::{generate_synthetic, partition_noniid, shard_stats, PartitionSpec};

fn main() -> fafl::Result<()> {
    let data = generate_synthetic(5, 4, 5000, 2.0, 11)?;
    println!("pool: {} samples, {} classes\n", data.n(), data.class_count());

    for max_labels in [1usize, 2] {
        println!("== at most {max_labels} restricted label(s) per client ==");
        println!("{:>6} {:>10}  label histograms (client 0..4)", "alpha", "mean TV");
        for alpha in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let spec = PartitionSpec { alpha, max_labels, num_clients: 5, seed: 9 };
            let outcome = partition_noniid(&data, &spec)?;
            let report = shard_stats(&outcome.shards, outcome.replacement_draws)?;
            let hists: Vec<String> = report
                .histograms
                .iter()
                .map(|h| format!("{h:?}"))
                .collect();
            println!(
                "{alpha:>6.1} {:>10.4}  {}",
                report.mean_pairwise_tv,
                hists.join(" ")
            );
            if report.replacement_draws > 0 {
                println!("        ({} draws fell back to replacement)", report.replacement_draws);
            }
        }
        println!();
    }
    Ok(())
}
