//! Training a norm-constrained random ReLU features classifier with
//! projected SGD, with theory-driven sizing and a model checkpoint.
//!
//! ```bash
//! cargo run --release -p randfeat --example train_features
//! ```

use randfeat::data::{gen_grid2d, kfold, Grid2dKind, SplitPlan};
use randfeat::features::{relu_features, FeatureBank, FeatureKind, FeatureSpec, WeightDistribution};
use randfeat::learn::{
    classification_accuracy, theory_counts, train_rrf, write_trace_csv, LossKind, Optimizer,
    RandomFeatureModel, TrainConfig,
};

fn main() -> randfeat::Result<()> {
    // How many samples/features would the generalization bounds ask for?
    let (m_bound, n_bound) = theory_counts(1.0, 1.0, 0.25, 0.05)?;
    println!("theory sizing for excess risk 3*0.25 at confidence 0.9: m >= {m_bound}, N >= {n_bound}");

    let data = gen_grid2d(Grid2dKind::Sine, 2000, 1)?;
    let spec = FeatureSpec {
        kind: FeatureKind::Relu,
        input_dim: data.dim(),
        count: 100,
        bandwidth: 1.0,
        distribution: WeightDistribution::UniformSphere,
        seed: 5,
    };
    let cfg = TrainConfig {
        learning_rate: 0.2,
        lr_decay: 1.0,
        batch: 64,
        epochs: 40,
        seed: 2,
        optimizer: Optimizer::SgdProjected { radius: 1e3 },
    };

    // 5-fold cross-validation by hand.
    let splits = kfold(
        &data,
        &SplitPlan {
            folds: 5,
            seed: 3,
            stratified: true,
        },
    )?;
    let bank = FeatureBank::from_spec(spec.clone())?;
    let phi = relu_features(data.x(), &bank)?;
    println!(
        "dataset {} (m = {}), {} relu features, zero fraction {:.3}",
        data.name(),
        data.len(),
        bank.count(),
        phi.zero_fraction()
    );

    let mut accs = Vec::new();
    let mut last = None;
    for (train_idx, val_idx) in &splits {
        let trained = randfeat::learn::train_rrf_on_features(
            &bank,
            phi.values(),
            &data,
            Some(train_idx),
            LossKind::Hinge,
            &cfg,
        )?;
        let mut phi_val = ndarray::Array2::zeros((val_idx.len(), bank.count()));
        for (row, &i) in val_idx.iter().enumerate() {
            phi_val.row_mut(row).assign(&phi.values().row(i));
        }
        let scores = trained.model.predict_features(phi_val.view())?;
        accs.push(classification_accuracy(scores.view(), &data, val_idx));
        last = Some(trained);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    println!("cv accuracy per fold: {accs:.4?}");
    println!("mean cv accuracy: {mean:.4}");

    // Checkpoint and trace of the last fold's run.
    let trained = last.expect("at least one fold");
    let model_path = std::env::temp_dir().join("rrf_sine_model.json");
    std::fs::write(&model_path, trained.model.to_json()?).expect("write checkpoint");
    let restored = RandomFeatureModel::from_json(&std::fs::read_to_string(&model_path).unwrap())?;
    assert_eq!(restored.outer(), trained.model.outer());
    let trace_path = std::env::temp_dir().join("rrf_sine_trace.csv");
    write_trace_csv(&trace_path, &trained.loss_trace, &trained.outer_norm_trace)?;
    println!("checkpoint: {}", model_path.display());
    println!("loss/norm trace: {}", trace_path.display());

    // A full retrain through the one-call entry point matches.
    let direct = train_rrf(&data, &spec, LossKind::Hinge, &cfg)?;
    println!(
        "full-data retrain: final loss {:.4}, outer norm {:.3}",
        direct.loss_trace.last().unwrap(),
        direct.model.outer_norm()
    );
    Ok(())
}
