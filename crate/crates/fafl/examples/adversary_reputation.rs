//! A label-flipping adversary joins the federation: plain averaging
//! absorbs the poison, reputation thresholding isolates it.
//!
//! ```sh
//! cargo run --release --example adversary_reputation
//! ```

use fafl::config::ExperimentConfig;
use fafl::engine::run_experiment;
use fafl::fairness::MechanismKind;

fn main() -> fafl::Result<()> {
    let base = |mechanism: MechanismKind, adversaries: usize| {
        let mut cfg = ExperimentConfig::default();
        cfg.clients = 5;
        cfg.mechanism = mechanism;
        cfg.alpha = 0.4;
        cfg.max_labels = 1;
        cfg.adversaries = adversaries;
        cfg.rounds = 80;
        cfg.seed = 1;
        cfg.train.local_epochs = 3;
        cfg.train.learning_rate = 0.05;
        cfg.eval_every = 10;
        cfg
    };

    for (label, mechanism, adversaries) in [
        ("FedAvg, honest", MechanismKind::FedAvg, 0),
        ("FedAvg, 1 adversary", MechanismKind::FedAvg, 1),
        ("Reputation A = 0", MechanismKind::Reputation, 0),
        ("Reputation A = 1", MechanismKind::Reputation, 1),
    ] {
        let series = run_experiment(&base(mechanism, adversaries), 0)?;
        println!("== {label}: final accuracy {:.3} ==", series.final_accuracy());
        if mechanism == MechanismKind::Reputation {
            for checkpoint in [9, 39, 79] {
                let record = &series.records[checkpoint];
                let reps: Vec<String> =
                    record.reputations.iter().map(|r| format!("{r:.2}")).collect();
                println!("   round {:>2}: reputations [{}]", record.round, reps.join(", "));
            }
            if adversaries == 1 {
                println!("   (client 4 is the adversary; it trains on rotated labels)");
            }
        }
    }
    Ok(())
}
