//! Train the built-in classifiers on a synthetic task and verify the
//! analytic gradients against finite differences.
//!
//! ```sh
//! cargo run --example local_training
//! ```

use fafl::data::generate_synthetic;
use fafl::model::{evaluate, init_model, local_train, loss_and_grad, Arch, TrainConfig};

fn main() -> fafl::Result<()> {
    let train = generate_synthetic(3, 8, 2400, 3.0, 7)?;
    let test = generate_synthetic(3, 8, 600, 3.0, 8)?;

    for arch in [Arch::linear(8, 3), Arch::mlp(8, 16, 3)] {
        let name = if arch.is_linear() { "softmax-linear" } else { "tanh MLP" };
        let mut w = init_model(&arch, 1)?;
        let cfg = TrainConfig {
            learning_rate: 0.05,
            decay: 0.995,
            batch_size: 64,
            local_epochs: 1,
            seed: 2,
        };

        println!("== {name} ({} parameters) ==", w.len());
        for round in 0..30 {
            let (next, _, loss_before) = local_train(&w, &train, &cfg, round)?;
            w = next;
            if round % 10 == 0 {
                let eval = evaluate(&w, &test, None)?;
                println!(
                    "round {round:>2}: train loss {loss_before:.4}, test accuracy {:.3}",
                    eval.accuracy
                );
            }
        }
        let eval = evaluate(&w, &test, None)?;
        println!("final: accuracy {:.3}, mean loss {:.4}", eval.accuracy, eval.mean_loss);

        // Spot-check the analytic gradient against central differences.
        let idx: Vec<usize> = (0..32).collect();
        let (_, grad) = loss_and_grad(&w, &train, &idx)?;
        let mut probe = w.clone();
        let mut worst = 0.0f64;
        for i in (0..w.len()).step_by(w.len() / 7) {
            let orig = probe.values[i];
            let eps = 1e-5;
            probe.values[i] = orig + eps;
            let hi = fafl::model::mean_loss(&probe, &train, &idx)?;
            probe.values[i] = orig - eps;
            let lo = fafl::model::mean_loss(&probe, &train, &idx)?;
            probe.values[i] = orig;
            let fd = (hi - lo) / (2.0 * eps);
            worst = worst.max((grad.values[i] - fd).abs());
        }
        println!("gradient check: max |analytic - finite difference| = {worst:.2e}\n");
    }
    Ok(())
}
