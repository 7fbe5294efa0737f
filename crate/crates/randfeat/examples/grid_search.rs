//! Bandwidth × learning-rate grid search with cross-validation, comparing
//! random ReLU features against the random Fourier baseline.
//!
//! ```bash
//! cargo run --release -p randfeat --example grid_search
//! ```

use randfeat::data::Grid2dKind;
use randfeat::experiment::{
    emit_results, run_grid, DatasetSelector, ExperimentConfig, Method, OutputFormat,
};

fn main() -> randfeat::Result<()> {
    let base = ExperimentConfig {
        dataset: DatasetSelector::Grid2d {
            kind: Grid2dKind::Checkboard,
            m: 1500,
        },
        method: Method::Rrf,
        bandwidths: vec![0.25, 0.5, 1.0, 2.0],
        rates: vec![0.03, 0.1, 0.3],
        feature_counts: vec![100],
        constraint_radius: 1e3,
        folds: 5,
        trials: 1,
        base_seed: 0,
        epochs: 60,
        batch: 64,
    };

    let mut all = Vec::new();
    for method in [Method::Rrf, Method::Rff] {
        let mut cfg = base.clone();
        cfg.method = method;
        let records = run_grid(&cfg, &[])?;
        println!(
            "{}: best cv accuracy per bandwidth (max over learning rates)",
            method.name()
        );
        for r in records.iter().filter(|r| r.best_for_bandwidth) {
            println!(
                "  gamma {:>5}: accuracy {:.4} ± {:.4} at rate {} (zeros {:.2})",
                r.bandwidth.unwrap(),
                r.metric_mean,
                r.metric_std,
                r.learning_rate,
                r.zero_fraction.unwrap()
            );
        }
        all.extend(records);
    }

    let out = std::env::temp_dir().join("checkboard_grid.csv");
    emit_results(&all, &out, OutputFormat::Csv)?;
    println!();
    println!("full table ({} rows) written to {}", all.len(), out.display());
    Ok(())
}
