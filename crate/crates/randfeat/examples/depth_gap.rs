//! Desk-scale depth-separation sweep: random ReLU features, 2-layer nets,
//! and parameter-matched 3-layer nets on the oscillating sphere-product
//! regression task.
//!
//! The full protocol (budgets up to 5120, 10 trials) runs through the
//! `randfeat` binary with a depth config; this example keeps budgets small
//! so it finishes in about a minute.
//!
//! ```bash
//! cargo run --release -p randfeat --example depth_gap
//! ```

use randfeat::experiment::{run_depth_sweep, DatasetSelector, ExperimentConfig, Method};

fn main() -> randfeat::Result<()> {
    let cfg = ExperimentConfig {
        dataset: DatasetSelector::Daniely { d: 2, m: 6000 },
        method: Method::Rrf,
        bandwidths: vec![1.0],
        rates: vec![1e-3, 3e-3],
        feature_counts: vec![20],
        constraint_radius: 1e3,
        folds: 2,
        trials: 3,
        base_seed: 0,
        epochs: 40,
        batch: 128,
    };
    let budgets = [20usize, 80, 320];
    let records = run_depth_sweep(&cfg, &budgets, &[])?;

    println!("held-out mse, mean over {} trials (lower is better):", cfg.trials);
    println!(
        "{:>8}  {:>10}  {:>10}  {:>10}",
        "budget", "rrf", "dense2", "dense3"
    );
    for &budget in &budgets {
        let get = |name: &str| {
            records
                .iter()
                .find(|r| r.method == name && r.n_features == budget)
                .map(|r| r.metric_mean)
                .unwrap_or(f64::NAN)
        };
        println!(
            "{budget:>8}  {:>10.4}  {:>10.4}  {:>10.4}",
            get("rrf"),
            get("dense2"),
            get("dense3")
        );
    }
    let d3 = records
        .iter()
        .find(|r| r.method == "dense3" && r.n_features == *budgets.last().unwrap())
        .unwrap();
    println!();
    println!(
        "top budget uses a 3-layer width of {} ({} parameters matched to the shallow models)",
        d3.width, d3.budget
    );
    Ok(())
}
