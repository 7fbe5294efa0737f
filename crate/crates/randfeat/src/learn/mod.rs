//! Losses, the projected-SGD trainer for norm-constrained random-feature
//! models, dense ReLU-network baselines, and theory-driven sample/feature
//! count calculators.
//!
//! The random-feature trainer freezes a sampled [`FeatureBank`], then runs
//! minibatch SGD on the outer weights only, projecting onto the Frobenius
//! ball of radius `R` after every step. Training is a pure function of
//! `(dataset, spec, loss, config)`.

pub mod dense;

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::features::{relu_features, substream, FeatureBank, FeatureSpec};

pub use dense::{dense_forward, dense_train, DenseNet, DenseTraining};

/// Loss function selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Binary hinge on ±1 labels, predictions are a single score.
    Hinge,
    /// Softmax cross-entropy on class indices, predictions are logits.
    LogisticMulticlass,
    /// Squared error on real labels, single output.
    Squared,
}

/// Loss value and gradient with respect to the prediction vector.
///
/// Hinge uses the subgradient 0 at the kink `y·f = 1`.
pub fn loss_and_grad(
    kind: LossKind,
    pred: ArrayView1<f64>,
    label: f64,
) -> Result<(f64, Array1<f64>)> {
    match kind {
        LossKind::Hinge => {
            if pred.len() != 1 {
                return Err(Error::ShapeMismatch(
                    "hinge expects a single prediction".into(),
                ));
            }
            if label != 1.0 && label != -1.0 {
                return Err(Error::Label(format!("hinge label must be ±1, got {label}")));
            }
            let margin = label * pred[0];
            let mut grad = Array1::zeros(1);
            let loss = if margin < 1.0 {
                grad[0] = -label;
                1.0 - margin
            } else {
                0.0
            };
            Ok((loss, grad))
        }
        LossKind::LogisticMulticlass => {
            let k = pred.len();
            if k < 2 {
                return Err(Error::ShapeMismatch(
                    "logistic loss expects at least two logits".into(),
                ));
            }
            if label.fract() != 0.0 || label < 0.0 || label >= k as f64 {
                return Err(Error::Label(format!(
                    "class label must be an integer in [0, {k}), got {label}"
                )));
            }
            let y = label as usize;
            let max = pred.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v));
            let exps = pred.mapv(|v| (v - max).exp());
            let z = exps.sum();
            let loss = z.ln() + max - pred[y];
            let mut grad = exps.mapv(|e| e / z);
            grad[y] -= 1.0;
            Ok((loss, grad))
        }
        LossKind::Squared => {
            if pred.len() != 1 {
                return Err(Error::ShapeMismatch(
                    "squared loss expects a single prediction".into(),
                ));
            }
            if !label.is_finite() {
                return Err(Error::Label("squared loss needs a finite label".into()));
            }
            let diff = pred[0] - label;
            let mut grad = Array1::zeros(1);
            grad[0] = 2.0 * diff;
            Ok((diff * diff, grad))
        }
    }
}

/// Optimizer selector for training configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain SGD with a Frobenius-ball projection of radius `radius` after
    /// every step.
    SgdProjected { radius: f64 },
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    Adam,
}

/// Training hyperparameters. The learning rate is constant within an epoch
/// and multiplied by `lr_decay` after each epoch (1.0 keeps it constant).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.lr_decay.is_nan() || self.lr_decay <= 0.0 {
            return Err(Error::InvalidArgument("lr_decay must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Projects outer weights onto the Frobenius ball of radius `radius`:
/// returns `C` unchanged when `‖C‖_F <= radius`, else `C · radius / ‖C‖_F`.
pub fn project_ball(c: ArrayView2<f64>, radius: f64) -> Array2<f64> {
    let mut out = c.to_owned();
    project_ball_inplace(&mut out, radius);
    out
}

pub(crate) fn project_ball_inplace(c: &mut Array2<f64>, radius: f64) -> bool {
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > radius {
        let scale = radius / norm;
        c.mapv_inplace(|v| v * scale);
        true
    } else {
        false
    }
}

/// A frozen feature bank plus norm-constrained outer weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFeatureModel {
    bank: FeatureBank,
    outer: Array2<f64>,
    constraint_radius: f64,
}

impl RandomFeatureModel {
    pub fn new(bank: FeatureBank, outputs: usize, constraint_radius: f64) -> Result<Self> {
        if outputs == 0 {
            return Err(Error::InvalidArgument("outputs must be >= 1".into()));
        }
        if constraint_radius.is_nan() || constraint_radius <= 0.0 {
            return Err(Error::InvalidArgument(
                "constraint radius must be positive".into(),
            ));
        }
        let outer = Array2::zeros((bank.count(), outputs));
        Ok(RandomFeatureModel {
            bank,
            outer,
            constraint_radius,
        })
    }

    pub fn bank(&self) -> &FeatureBank {
        &self.bank
    }

    pub fn outer(&self) -> ArrayView2<'_, f64> {
        self.outer.view()
    }

    pub fn constraint_radius(&self) -> f64 {
        self.constraint_radius
    }

    pub fn outer_norm(&self) -> f64 {
        self.outer.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scores for rows of `x`: the bank's feature map times the outer
    /// weights.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let phi = match self.bank.kind() {
            crate::features::FeatureKind::Relu => relu_features(x, &self.bank)?,
            crate::features::FeatureKind::Fourier => {
                crate::features::fourier_features(x, &self.bank)?
            }
        };
        Ok(phi.values().dot(&self.outer))
    }

    /// Scores from a precomputed feature matrix.
    pub fn predict_features(&self, phi: ArrayView2<f64>) -> Result<Array2<f64>> {
        if phi.ncols() != self.bank.count() {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix has {} columns, expected {}",
                phi.ncols(),
                self.bank.count()
            )));
        }
        Ok(phi.dot(&self.outer))
    }

    /// Checkpoint in the same JSON text form used for assembled networks.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Trained model plus per-epoch traces.
#[derive(Debug, Clone)]
pub struct RrfTraining {
    pub model: RandomFeatureModel,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
    /// `‖C‖_F` at each epoch boundary.
    pub outer_norm_trace: Vec<f64>,
}

/// Number of score columns a loss/task combination trains.
pub fn output_dim(loss: LossKind, task: &Task) -> usize {
    match (loss, task) {
        (LossKind::LogisticMulticlass, Task::Multiclass { classes }) => *classes,
        (LossKind::LogisticMulticlass, _) => 2,
        _ => 1,
    }
}

/// Maps the label at row `i` of a dataset to the value `loss_and_grad`
/// expects.
pub(crate) fn loss_label_for(loss: LossKind, dataset: &Dataset, i: usize) -> f64 {
    loss_label(loss, dataset.task(), dataset.y()[i])
}

/// Maps a stored label to the value `loss_and_grad` expects.
fn loss_label(loss: LossKind, task: &Task, y: f64) -> f64 {
    match (loss, task) {
        // Binary ±1 labels become class indices for the softmax loss.
        (LossKind::LogisticMulticlass, Task::Binary) => {
            if y > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        _ => y,
    }
}

/// Trains outer weights on frozen ReLU random features by projected
/// minibatch SGD.
///
/// The bank is sampled once from `spec` and never updated; after every step
/// the outer weights are projected onto the Frobenius ball of the configured
/// radius.
pub fn train_rrf(
    dataset: &Dataset,
    spec: &FeatureSpec,
    loss: LossKind,
    cfg: &TrainConfig,
) -> Result<RrfTraining> {
    let bank = FeatureBank::from_spec(spec.clone())?;
    let phi = relu_features(dataset.x(), &bank)?.into_values();
    train_rrf_on_features(&bank, phi.view(), dataset, None, loss, cfg)
}

/// Same as [`train_rrf`] but with a precomputed feature matrix, so callers
/// doing cross-validation can reuse features across folds. `rows` selects
/// the training subset (all rows when `None`).
pub fn train_rrf_on_features(
    bank: &FeatureBank,
    phi: ArrayView2<f64>,
    dataset: &Dataset,
    rows: Option<&[usize]>,
    loss: LossKind,
    cfg: &TrainConfig,
) -> Result<RrfTraining> {
    cfg.validate()?;
    let Optimizer::SgdProjected { radius } = cfg.optimizer else {
        return Err(Error::InvalidArgument(
            "train_rrf requires the projected-SGD optimizer".into(),
        ));
    };
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::InvalidArgument(
            "projection radius must be positive".into(),
        ));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    if phi.nrows() != dataset.len() || phi.ncols() != bank.count() {
        return Err(Error::ShapeMismatch(format!(
            "feature matrix is {}x{}, expected {}x{}",
            phi.nrows(),
            phi.ncols(),
            dataset.len(),
            bank.count()
        )));
    }
    let k = output_dim(loss, dataset.task());
    let mut outer = Array2::<f64>::zeros((bank.count(), k));

    let mut indices: Vec<usize> = match rows {
        Some(r) => r.to_vec(),
        None => (0..dataset.len()).collect(),
    };
    if indices.is_empty() {
        return Err(Error::InvalidArgument("training subset is empty".into()));
    }
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut norm_trace = Vec::with_capacity(cfg.epochs);
    let mut lr = cfg.learning_rate;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut rng = substream(cfg.seed, epoch as u64);
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in indices.chunks(cfg.batch) {
            step += 1;
            let b = batch.len();
            let mut phi_b = Array2::<f64>::zeros((b, phi.ncols()));
            for (row, &i) in batch.iter().enumerate() {
                phi_b.row_mut(row).assign(&phi.row(i));
            }
            let preds = phi_b.dot(&outer);
            let mut grad_pred = Array2::<f64>::zeros((b, k));
            let mut batch_loss = 0.0;
            for (row, &i) in batch.iter().enumerate() {
                let label = loss_label(loss, dataset.task(), dataset.y()[i]);
                let (l, g) = loss_and_grad(loss, preds.row(row), label)?;
                batch_loss += l;
                grad_pred.row_mut(row).assign(&g);
            }
            batch_loss /= b as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    step,
                    message: format!("loss became {batch_loss}"),
                });
            }
            epoch_loss += batch_loss * b as f64;
            seen += b;
            let grad_outer = phi_b.t().dot(&grad_pred).mapv(|v| v / b as f64);
            outer.scaled_add(-lr, &grad_outer);
            project_ball_inplace(&mut outer, radius);
            if outer.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training {
                    step,
                    message: "outer weights became non-finite".into(),
                });
            }
            debug_assert!(
                outer.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius + 1e-9,
                "projection invariant violated"
            );
        }
        loss_trace.push(epoch_loss / seen as f64);
        norm_trace.push(outer.iter().map(|v| v * v).sum::<f64>().sqrt());
        lr *= cfg.lr_decay;
    }

    let model = RandomFeatureModel {
        bank: bank.clone(),
        outer,
        constraint_radius: radius,
    };
    Ok(RrfTraining {
        model,
        loss_trace,
        outer_norm_trace: norm_trace,
    })
}

/// Classification accuracy of score rows against the labels at `subset`.
pub fn classification_accuracy(
    scores: ArrayView2<f64>,
    dataset: &Dataset,
    subset: &[usize],
) -> f64 {
    let mut correct = 0usize;
    for (row, &i) in subset.iter().enumerate() {
        let y = dataset.y()[i];
        let hit = match dataset.task() {
            Task::Binary => {
                if scores.ncols() == 1 {
                    let pred = if scores[[row, 0]] >= 0.0 { 1.0 } else { -1.0 };
                    pred == y
                } else {
                    // Two-logit scores from the softmax loss.
                    let pred = if scores[[row, 1]] > scores[[row, 0]] {
                        1.0
                    } else {
                        -1.0
                    };
                    pred == y
                }
            }
            Task::Multiclass { .. } => {
                let mut best = 0usize;
                for j in 1..scores.ncols() {
                    if scores[[row, j]] > scores[[row, best]] {
                        best = j;
                    }
                }
                best as f64 == y
            }
            Task::Regression => false,
        };
        if hit {
            correct += 1;
        }
    }
    correct as f64 / subset.len() as f64
}

/// Mean squared error of single-column scores against the labels at `subset`.
pub fn mean_squared_error(scores: ArrayView2<f64>, dataset: &Dataset, subset: &[usize]) -> f64 {
    let mut acc = 0.0;
    for (row, &i) in subset.iter().enumerate() {
        let diff = scores[[row, 0]] - dataset.y()[i];
        acc += diff * diff;
    }
    acc / subset.len() as f64
}

/// Sample and feature counts sufficient for excess risk `3ε` at confidence
/// `1 − 2δ` when learning a function of RKHS norm at most `rkhs_norm` on
/// data of radius `radius`:
///
/// ```text
/// m >= [ (4 + 2 √(2 ln 1/δ)) · R (√(r²+1) + 1) / ε ]²
/// N >= (5 (r²+1) / ε²) · ln( 16 (r²+1) / (ε² δ) )
/// ```
pub fn theory_counts(rkhs_norm: f64, radius: f64, epsilon: f64, delta: f64) -> Result<(u64, u64)> {
    if rkhs_norm.is_nan()
        || rkhs_norm <= 0.0
        || radius.is_nan()
        || radius <= 0.0
        || epsilon.is_nan()
        || epsilon <= 0.0
    {
        return Err(Error::InvalidArgument(
            "rkhs_norm, radius, and epsilon must be positive".into(),
        ));
    }
    if delta.is_nan() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::InvalidArgument("delta must lie in (0, 1)".into()));
    }
    let r2p1 = radius * radius + 1.0;
    let m = ((4.0 + 2.0 * (2.0 * (1.0 / delta).ln()).sqrt()) * rkhs_norm * (r2p1.sqrt() + 1.0)
        / epsilon)
        .powi(2)
        .ceil() as u64;
    let n = (5.0 * r2p1 / (epsilon * epsilon) * (16.0 * r2p1 / (epsilon * epsilon * delta)).ln())
        .ceil() as u64;
    Ok((m, n))
}

/// Largest equal width `w` whose 3-layer parameter count
/// `(d+1)w + (w+1)w + (w+1)` stays within `param_budget`.
pub fn matched_width_3layer(param_budget: usize, d: usize) -> Result<usize> {
    let params = |w: usize| w * w + (d + 3) * w + 1;
    if param_budget < params(1) {
        return Err(Error::InvalidArgument(format!(
            "budget {param_budget} is below the minimal 3-layer size {}",
            params(1)
        )));
    }
    // Quadratic estimate, then fix up.
    let b = (d + 3) as f64;
    let mut w = ((-b + (b * b + 4.0 * (param_budget as f64 - 1.0)).sqrt()) / 2.0).floor() as usize;
    w = w.max(1);
    while params(w + 1) <= param_budget {
        w += 1;
    }
    while w > 1 && params(w) > param_budget {
        w -= 1;
    }
    Ok(w)
}

/// Parameter count of a width-`n` shallow model (random features or 2-layer
/// net): `n` nodes with `d` weights plus a bias, and `n` outer weights.
pub fn shallow_param_count(n: usize, d: usize) -> usize {
    n * (d + 2)
}

/// Writes a per-epoch trace as CSV with columns `epoch,loss,metric`.
pub fn write_trace_csv(path: impl AsRef<Path>, losses: &[f64], metrics: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,loss,metric\n");
    for (i, l) in losses.iter().enumerate() {
        let m = metrics.get(i).copied().unwrap_or(f64::NAN);
        writeln!(out, "{i},{l:?},{m:?}").expect("write to string");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;
    use crate::features::{FeatureKind, WeightDistribution};
    use crate::linalg::{cholesky, cholesky_solve};
    use ndarray::array;

    #[test]
    fn hinge_values() {
        let (l, g) = loss_and_grad(LossKind::Hinge, array![0.0].view(), 1.0).unwrap();
        assert_eq!((l, g[0]), (1.0, -1.0));
        // At the kink the subgradient is 0.
        let (l, g) = loss_and_grad(LossKind::Hinge, array![1.0].view(), 1.0).unwrap();
        assert_eq!((l, g[0]), (0.0, 0.0));
        let (l, g) = loss_and_grad(LossKind::Hinge, array![-2.0].view(), -1.0).unwrap();
        assert_eq!((l, g[0]), (0.0, 0.0));
        assert!(loss_and_grad(LossKind::Hinge, array![0.0].view(), 0.5).is_err());
    }

    #[test]
    fn squared_values() {
        let (l, g) = loss_and_grad(LossKind::Squared, array![2.0].view(), 2.0).unwrap();
        assert_eq!((l, g[0]), (0.0, 0.0));
        let (l, g) = loss_and_grad(LossKind::Squared, array![3.0].view(), 1.0).unwrap();
        assert_eq!((l, g[0]), (4.0, 4.0));
    }

    #[test]
    fn logistic_symmetric_logits() {
        let (l, g) =
            loss_and_grad(LossKind::LogisticMulticlass, array![0.0, 0.0].view(), 0.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g[0] + 0.5).abs() < 1e-12);
        assert!((g[1] - 0.5).abs() < 1e-12);
        assert!(loss_and_grad(LossKind::LogisticMulticlass, array![0.0, 0.0].view(), 2.0).is_err());
        assert!(loss_and_grad(LossKind::LogisticMulticlass, array![0.0, 0.0].view(), 0.5).is_err());
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let logits = array![0.3, -1.2, 0.7, 0.1];
        let label = 2.0;
        let (_, grad) = loss_and_grad(LossKind::LogisticMulticlass, logits.view(), label).unwrap();
        let h = 1e-6;
        for j in 0..logits.len() {
            let mut plus = logits.clone();
            plus[j] += h;
            let mut minus = logits.clone();
            minus[j] -= h;
            let (lp, _) = loss_and_grad(LossKind::LogisticMulticlass, plus.view(), label).unwrap();
            let (lm, _) = loss_and_grad(LossKind::LogisticMulticlass, minus.view(), label).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[j] - fd).abs() / (grad[j].abs() + fd.abs() + 1e-12);
            assert!(rel <= 1e-5, "coord {j}: {} vs {fd}", grad[j]);
        }
    }

    #[test]
    fn projection_cases() {
        let c = Array2::from_elem((4, 1), 1.0); // norm 2
        let p = project_ball(c.view(), 1.0);
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);

        let zero = Array2::<f64>::zeros((3, 2));
        assert_eq!(project_ball(zero.view(), 5.0), zero);

        let inside = Array2::from_elem((2, 1), 0.1);
        assert_eq!(project_ball(inside.view(), 1.0), inside);
    }

    #[test]
    fn theory_count_values() {
        // Frozen from the closed formulas at R=1, r=1, ε=0.5, δ=0.1.
        let (m, n) = theory_counts(1.0, 1.0, 0.5, 0.1).unwrap();
        assert_eq!(m, 1603);
        assert_eq!(n, 287);
        // Halving ε roughly quadruples m.
        let (m2, _) = theory_counts(1.0, 1.0, 0.25, 0.1).unwrap();
        let ratio = m2 as f64 / m as f64;
        assert!((ratio - 4.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn matched_width_against_integer_search() {
        let brute = |budget: usize, d: usize| -> Option<usize> {
            let mut best = None;
            for w in 1..=budget {
                let params = w * w + (d + 3) * w + 1;
                if params <= budget {
                    best = Some(w);
                } else {
                    break;
                }
            }
            best
        };
        assert_eq!(matched_width_3layer(120, 4).unwrap(), 7);
        for d in [2usize, 4, 10] {
            for budget in [d + 5, 40, 120, 480, 7680, 30720] {
                assert_eq!(
                    matched_width_3layer(budget, d).unwrap(),
                    brute(budget, d).unwrap()
                );
            }
        }
        assert!(matched_width_3layer(4, 4).is_err());
        // Doubling the budget never decreases the width.
        let mut last = 0;
        for k in 0..8 {
            let w = matched_width_3layer(120 << k, 4).unwrap();
            assert!(w >= last);
            last = w;
        }
    }

    fn blob_spec(n: usize, seed: u64) -> FeatureSpec {
        FeatureSpec {
            kind: FeatureKind::Relu,
            input_dim: 2,
            count: n,
            bandwidth: 1.0,
            distribution: WeightDistribution::UniformSphere,
            seed,
        }
    }

    #[test]
    fn separable_blobs_reach_high_training_accuracy() {
        let data = gen_blobs(2, 500, 2.0, 0.4, 3).unwrap();
        let spec = blob_spec(50, 7);

        // Oracle: exact regularized least squares on the same features shows
        // the classes are separated in feature space.
        let bank = FeatureBank::from_spec(spec.clone()).unwrap();
        let phi = relu_features(data.x(), &bank).unwrap().into_values();
        let mut gram = phi.t().dot(&phi);
        for i in 0..gram.nrows() {
            gram[[i, i]] += 1e-8;
        }
        let rhs = phi.t().dot(data.y());
        let l = cholesky(gram.view()).unwrap();
        let c = cholesky_solve(&l, rhs.view());
        let scores = phi.dot(&c);
        let oracle_acc = scores
            .iter()
            .zip(data.y().iter())
            .filter(|(s, y)| (**s >= 0.0) == (**y > 0.0))
            .count() as f64
            / data.len() as f64;
        assert!(oracle_acc >= 0.999, "oracle accuracy {oracle_acc}");

        let cfg = TrainConfig {
            learning_rate: 0.5,
            lr_decay: 1.0,
            batch: 64,
            epochs: 50,
            seed: 1,
            optimizer: Optimizer::SgdProjected { radius: 1e3 },
        };
        let trained = train_rrf(&data, &spec, LossKind::Hinge, &cfg).unwrap();
        let all: Vec<usize> = (0..data.len()).collect();
        let scores = trained.model.predict(data.x()).unwrap();
        let acc = classification_accuracy(scores.view(), &data, &all);
        assert!(acc >= 0.99, "training accuracy {acc}");
    }

    #[test]
    fn tiny_radius_binds_the_constraint() {
        let data = gen_blobs(2, 500, 2.0, 0.4, 3).unwrap();
        let spec = blob_spec(50, 7);
        let cfg = TrainConfig {
            learning_rate: 0.5,
            lr_decay: 1.0,
            batch: 64,
            epochs: 50,
            seed: 1,
            optimizer: Optimizer::SgdProjected { radius: 1e-4 },
        };
        let trained = train_rrf(&data, &spec, LossKind::Hinge, &cfg).unwrap();
        // Capacity limit: the hinge loss cannot descend below ~1 because
        // predictions are pinned near zero by the constraint.
        let final_loss = *trained.loss_trace.last().unwrap();
        assert!(final_loss > 0.9, "loss {final_loss}");
        assert!(trained.model.outer_norm() <= 1e-4 + 1e-9);

        // Oracle: exact least squares constrained to the same ball, found by
        // bisecting the ridge multiplier. The trained accuracy must agree
        // with the oracle's up to a small band.
        let bank = FeatureBank::from_spec(spec).unwrap();
        let phi = relu_features(data.x(), &bank).unwrap().into_values();
        let gram = phi.t().dot(&phi);
        let rhs = phi.t().dot(data.y());
        let solve = |lambda: f64| -> Array1<f64> {
            let mut sys = gram.clone();
            for i in 0..sys.nrows() {
                sys[[i, i]] += lambda;
            }
            let l = cholesky(sys.view()).unwrap();
            cholesky_solve(&l, rhs.view())
        };
        let norm = |c: &Array1<f64>| c.dot(c).sqrt();
        let mut lo = 1e-9;
        let mut hi = 1e12;
        let radius = 1e-4;
        let c = if norm(&solve(lo)) <= radius {
            solve(lo)
        } else {
            for _ in 0..200 {
                let mid = (lo * hi).sqrt();
                if norm(&solve(mid)) > radius {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            solve(hi)
        };
        assert!(norm(&c) <= radius * 1.01);
        let oracle_acc = phi
            .dot(&c)
            .iter()
            .zip(data.y().iter())
            .filter(|(s, y)| (**s >= 0.0) == (**y > 0.0))
            .count() as f64
            / data.len() as f64;
        let all: Vec<usize> = (0..data.len()).collect();
        let scores = trained.model.predict(data.x()).unwrap();
        let acc = classification_accuracy(scores.view(), &data, &all);
        assert!(
            (acc - oracle_acc).abs() <= 0.1,
            "trained {acc} vs constrained oracle {oracle_acc}"
        );
    }

    #[test]
    fn training_is_deterministic_and_freezes_features() {
        let data = gen_blobs(2, 200, 2.0, 0.5, 11).unwrap();
        let spec = blob_spec(20, 3);
        let bank_before = FeatureBank::from_spec(spec.clone()).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.2,
            lr_decay: 1.0,
            batch: 32,
            epochs: 5,
            seed: 9,
            optimizer: Optimizer::SgdProjected { radius: 100.0 },
        };
        let a = train_rrf(&data, &spec, LossKind::Hinge, &cfg).unwrap();
        let b = train_rrf(&data, &spec, LossKind::Hinge, &cfg).unwrap();
        assert_eq!(a.model.outer(), b.model.outer());
        // Inner weights are exactly the bank sampled from the spec.
        assert_eq!(a.model.bank().omegas(), bank_before.omegas());
    }

    #[test]
    fn projection_invariant_holds_each_epoch() {
        let data = gen_blobs(2, 300, 1.0, 0.6, 2).unwrap();
        let spec = blob_spec(30, 5);
        let radius = 0.05;
        let cfg = TrainConfig {
            learning_rate: 1.0,
            lr_decay: 1.0,
            batch: 16,
            epochs: 8,
            seed: 4,
            optimizer: Optimizer::SgdProjected { radius },
        };
        let trained = train_rrf(&data, &spec, LossKind::Hinge, &cfg).unwrap();
        for norm in &trained.outer_norm_trace {
            assert!(*norm <= radius + 1e-9);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let data = gen_blobs(2, 100, 2.0, 0.5, 1).unwrap();
        let spec = blob_spec(10, 2);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            lr_decay: 1.0,
            batch: 32,
            epochs: 2,
            seed: 0,
            optimizer: Optimizer::SgdProjected { radius: 10.0 },
        };
        let trained = train_rrf(&data, &spec, LossKind::Hinge, &cfg).unwrap();
        let restored = RandomFeatureModel::from_json(&trained.model.to_json().unwrap()).unwrap();
        assert_eq!(trained.model, restored);
    }
}
