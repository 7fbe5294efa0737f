//! Experiment runner: grid search over bandwidth and learning rate with
//! cross-validation, the depth-separation sweep, and machine-readable
//! result emission with resume support.
//!
//! Every grid cell is keyed by a stable hash of its full description, so
//! sweeps are resumable (cells whose hash already appears in the output are
//! skipped) and parallel execution produces the same records as serial:
//! all randomness is derived from the cell description, never from
//! execution order. Wall-clock timings cover training only; feature
//! generation is excluded.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    gen_daniely, gen_grid2d, kfold, load_libsvm, normalize, Dataset, Grid2dKind, NormalizeMode,
    SplitPlan, Task,
};
use crate::error::{Error, Result};
use crate::features::{
    fourier_features, relu_features, substream, FeatureBank, FeatureKind, FeatureSpec,
    WeightDistribution,
};
use crate::learn::{
    classification_accuracy, dense_train, matched_width_3layer, mean_squared_error,
    shallow_param_count, train_rrf_on_features, DenseNet, LossKind, Optimizer, TrainConfig,
};

/// Where the experiment's data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSelector {
    Grid2d { kind: Grid2dKind, m: usize },
    Daniely { d: usize, m: usize },
    Libsvm {
        path: String,
        dim: Option<usize>,
        normalize: Option<NormalizeMode>,
    },
}

impl DatasetSelector {
    /// Builds or loads the dataset. Generators key their draws off `seed`.
    pub fn realize(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetSelector::Grid2d { kind, m } => gen_grid2d(*kind, *m, seed),
            DatasetSelector::Daniely { d, m } => gen_daniely(*d, *m, seed),
            DatasetSelector::Libsvm {
                path,
                dim,
                normalize: mode,
            } => {
                let data = load_libsvm(path, *dim)?;
                Ok(match mode {
                    Some(mode) => normalize(&data, *mode),
                    None => data,
                })
            }
        }
    }

    fn label(&self) -> String {
        match self {
            DatasetSelector::Grid2d { kind, m } => format!("{}:{m}", kind.name()),
            DatasetSelector::Daniely { d, m } => format!("daniely{d}:{m}"),
            DatasetSelector::Libsvm { path, .. } => Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.clone()),
        }
    }
}

/// Model family a sweep trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Random ReLU features, outer weights trained by projected SGD.
    Rrf,
    /// Random Fourier features baseline, same trainer.
    Rff,
    /// 2-layer ReLU network, all weights trained with Adam.
    Dense2,
    /// 3-layer equal-width ReLU network, all weights trained with Adam.
    Dense3,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Rrf => "rrf",
            Method::Rff => "rff",
            Method::Dense2 => "dense2",
            Method::Dense3 => "dense3",
        }
    }
}

/// Full sweep description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSelector,
    pub method: Method,
    pub bandwidths: Vec<f64>,
    pub rates: Vec<f64>,
    /// Feature counts (or hidden widths) to sweep.
    pub feature_counts: Vec<usize>,
    /// Projection radius for the random-feature trainer.
    pub constraint_radius: f64,
    pub folds: usize,
    /// Number of independent repetitions; trial `t` uses seed
    /// `base_seed + t`.
    pub trials: usize,
    pub base_seed: u64,
    pub epochs: usize,
    pub batch: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() || self.rates.is_empty() || self.feature_counts.is_empty() {
            return Err(Error::Config(
                "bandwidth, rate, and feature-count grids must be nonempty".into(),
            ));
        }
        if self.bandwidths.iter().any(|g| g.is_nan() || *g <= 0.0) {
            return Err(Error::Config("bandwidths must be positive".into()));
        }
        if self.rates.iter().any(|r| r.is_nan() || *r <= 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.constraint_radius.is_nan() || self.constraint_radius <= 0.0 {
            return Err(Error::Config("constraint radius must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("need at least 2 folds".into()));
        }
        if self.trials == 0 || self.epochs == 0 || self.batch == 0 {
            return Err(Error::Config(
                "trials, epochs, and batch must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One grid cell or sweep point, with per-fold (or per-trial) metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub dataset: String,
    pub method: String,
    /// Bandwidth γ; absent for dense baselines.
    pub bandwidth: Option<f64>,
    pub learning_rate: f64,
    /// Feature count (random features) or hidden width (dense nets).
    pub n_features: usize,
    /// Equal width of the 3-layer net, when applicable.
    pub width: usize,
    /// Shallow parameter budget of a depth-sweep point (0 for grid cells).
    pub budget: usize,
    /// Trial index for grid cells; depth-sweep rows aggregate trials.
    pub trial: Option<u64>,
    /// "accuracy" or "mse".
    pub metric_kind: String,
    pub metrics: Vec<f64>,
    pub metric_mean: f64,
    pub metric_std: f64,
    /// Training-only wall-clock seconds.
    pub train_seconds: f64,
    /// Fraction of exactly-zero feature values (random features only).
    pub zero_fraction: Option<f64>,
    /// Best mean metric among the learning rates of its bandwidth group.
    pub best_for_bandwidth: bool,
    pub error: Option<String>,
}

/// FNV-1a hash of the canonical cell description.
fn config_hash(desc: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in desc.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn loss_for_task(task: &Task) -> LossKind {
    match task {
        Task::Binary => LossKind::Hinge,
        Task::Multiclass { .. } => LossKind::LogisticMulticlass,
        Task::Regression => LossKind::Squared,
    }
}

fn metric_kind_for_task(task: &Task) -> &'static str {
    match task {
        Task::Regression => "mse",
        _ => "accuracy",
    }
}

fn sanitize(message: String) -> String {
    message.replace([',', '\n'], ";")
}

struct GridCell {
    bandwidth: f64,
    rate: f64,
    n: usize,
    trial: u64,
}

/// Runs k-fold cross-validation over the full bandwidth × rate ×
/// feature-count × trial grid.
///
/// Cells whose config hash already appears in `existing` are carried over
/// unchanged. Training failures are recorded in the row's `error` field and
/// do not abort the sweep. Within each (trial, feature-count, bandwidth)
/// group the cell with the best mean metric over the learning rates is
/// flagged.
pub fn run_grid(cfg: &ExperimentConfig, existing: &[ResultRecord]) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    if matches!(cfg.method, Method::Dense2 | Method::Dense3) {
        return Err(Error::Config(
            "grid search sweeps the random-feature methods; use the depth sweep for dense nets"
                .into(),
        ));
    }
    let dataset = cfg.dataset.realize(cfg.base_seed)?;
    let stratified = !matches!(dataset.task(), Task::Regression);
    let splits = kfold(
        &dataset,
        &SplitPlan {
            folds: cfg.folds,
            seed: cfg.base_seed,
            stratified,
        },
    )?;
    let loss = loss_for_task(dataset.task());
    let metric_kind = metric_kind_for_task(dataset.task());
    let dataset_label = cfg.dataset.label();

    let mut cells = Vec::new();
    for trial in 0..cfg.trials {
        for &n in &cfg.feature_counts {
            for &bandwidth in &cfg.bandwidths {
                for &rate in &cfg.rates {
                    cells.push(GridCell {
                        bandwidth,
                        rate,
                        n,
                        trial: trial as u64,
                    });
                }
            }
        }
    }

    let mut records: Vec<ResultRecord> = cells
        .par_iter()
        .map(|cell| {
            let desc = format!(
                "grid|{}|{}|g{}|r{}|n{}|t{}|R{}|f{}|e{}|b{}|s{}",
                dataset_label,
                cfg.method.name(),
                cell.bandwidth,
                cell.rate,
                cell.n,
                cell.trial,
                cfg.constraint_radius,
                cfg.folds,
                cfg.epochs,
                cfg.batch,
                cfg.base_seed
            );
            let hash = config_hash(&desc);
            if let Some(prev) = existing.iter().find(|r| r.config_hash == hash) {
                return prev.clone();
            }
            let mut record = ResultRecord {
                config_hash: hash,
                dataset: dataset_label.clone(),
                method: cfg.method.name().into(),
                bandwidth: Some(cell.bandwidth),
                learning_rate: cell.rate,
                n_features: cell.n,
                width: 0,
                budget: 0,
                trial: Some(cell.trial),
                metric_kind: metric_kind.into(),
                metrics: Vec::new(),
                metric_mean: f64::NAN,
                metric_std: f64::NAN,
                train_seconds: 0.0,
                zero_fraction: None,
                best_for_bandwidth: false,
                error: None,
            };
            match run_grid_cell(cfg, &dataset, &splits, loss, cell) {
                Ok((metrics, seconds, zero_fraction)) => {
                    let (mean, std) = mean_std(&metrics);
                    record.metrics = metrics;
                    record.metric_mean = mean;
                    record.metric_std = std;
                    record.train_seconds = seconds;
                    record.zero_fraction = Some(zero_fraction);
                }
                Err(e) => record.error = Some(sanitize(e.to_string())),
            }
            record
        })
        .collect();

    flag_best_per_bandwidth(&mut records, metric_kind == "mse");
    Ok(records)
}

fn run_grid_cell(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    splits: &[(Vec<usize>, Vec<usize>)],
    loss: LossKind,
    cell: &GridCell,
) -> Result<(Vec<f64>, f64, f64)> {
    let bank_seed = fnv_seed(cfg.base_seed, cell.trial, cell.n);
    let spec = FeatureSpec {
        kind: match cfg.method {
            Method::Rrf => FeatureKind::Relu,
            Method::Rff => FeatureKind::Fourier,
            _ => unreachable!("grid methods are rrf/rff"),
        },
        input_dim: dataset.dim(),
        count: cell.n,
        bandwidth: cell.bandwidth,
        distribution: match cfg.method {
            Method::Rrf => WeightDistribution::UniformSphere,
            _ => WeightDistribution::Gaussian { scale: 1.0 },
        },
        seed: bank_seed,
    };
    let bank = FeatureBank::from_spec(spec)?;
    let phi = match cfg.method {
        Method::Rrf => relu_features(dataset.x(), &bank)?,
        _ => fourier_features(dataset.x(), &bank)?,
    };
    let zero_fraction = phi.zero_fraction();
    let phi = phi.into_values();

    let mut metrics = Vec::with_capacity(splits.len());
    let mut seconds = 0.0;
    for (fold, (train_idx, val_idx)) in splits.iter().enumerate() {
        let train_cfg = TrainConfig {
            learning_rate: cell.rate,
            lr_decay: 1.0,
            batch: cfg.batch,
            epochs: cfg.epochs,
            seed: fnv_seed(cfg.base_seed ^ 0x5eed, cell.trial, fold),
            optimizer: Optimizer::SgdProjected {
                radius: cfg.constraint_radius,
            },
        };
        let start = Instant::now();
        let trained =
            train_rrf_on_features(&bank, phi.view(), dataset, Some(train_idx), loss, &train_cfg)?;
        seconds += start.elapsed().as_secs_f64();

        let mut phi_val = Array2::<f64>::zeros((val_idx.len(), phi.ncols()));
        for (row, &i) in val_idx.iter().enumerate() {
            phi_val.row_mut(row).assign(&phi.row(i));
        }
        let scores = trained.model.predict_features(phi_val.view())?;
        let metric = match dataset.task() {
            Task::Regression => mean_squared_error(scores.view(), dataset, val_idx),
            _ => classification_accuracy(scores.view(), dataset, val_idx),
        };
        metrics.push(metric);
    }
    Ok((metrics, seconds, zero_fraction))
}

fn fnv_seed(base: u64, a: impl Into<u64>, b: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for v in [a.into(), b as u64] {
        for byte in v.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Marks, within every (trial, n, bandwidth) group, the record whose mean
/// metric is best across learning rates.
fn flag_best_per_bandwidth(records: &mut [ResultRecord], minimize: bool) {
    use std::collections::HashMap;
    let mut best: HashMap<(Option<u64>, usize, u64), (usize, f64)> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.error.is_some() || !r.metric_mean.is_finite() {
            continue;
        }
        let Some(bw) = r.bandwidth else { continue };
        let key = (r.trial, r.n_features, bw.to_bits());
        let better = match best.get(&key) {
            None => true,
            Some((_, cur)) => {
                if minimize {
                    r.metric_mean < *cur
                } else {
                    r.metric_mean > *cur
                }
            }
        };
        if better {
            best.insert(key, (i, r.metric_mean));
        }
    }
    for r in records.iter_mut() {
        r.best_for_bandwidth = false;
    }
    for (i, _) in best.values() {
        records[*i].best_for_bandwidth = true;
    }
}

/// One (budget, method) point of the depth sweep.
struct SweepPoint {
    budget: usize,
    method: Method,
}

/// Depth-separation sweep: for every shallow parameter budget trains random
/// ReLU features, a 2-layer net of the same width, and a 3-layer net of
/// matched parameter count, averaging held-out test MSE over trials.
///
/// The learning rate for each (method, budget) is screened over
/// `cfg.rates` on a validation split of the training data before the
/// trial runs. A held-out 20% test split is fixed across all points.
pub fn run_depth_sweep(
    cfg: &ExperimentConfig,
    budgets: &[usize],
    existing: &[ResultRecord],
) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    if budgets.is_empty() {
        return Err(Error::Config("budget list is empty".into()));
    }
    let dataset = cfg.dataset.realize(cfg.base_seed)?;
    if !matches!(dataset.task(), Task::Regression) {
        return Err(Error::Config("the depth sweep expects a regression dataset".into()));
    }
    let dataset_label = cfg.dataset.label();

    // Fixed 80/20 train/test split.
    let m = dataset.len();
    let mut order: Vec<usize> = (0..m).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut substream(cfg.base_seed, 0x7e57));
    let test_len = m / 5;
    let test_idx: Vec<usize> = order[..test_len].to_vec();
    let train_idx: Vec<usize> = order[test_len..].to_vec();
    // Screening split: last 10% of the training indices.
    let screen_val_len = train_idx.len() / 10;
    let screen_train: Vec<usize> = train_idx[..train_idx.len() - screen_val_len].to_vec();
    let screen_val: Vec<usize> = train_idx[train_idx.len() - screen_val_len..].to_vec();

    let mut points = Vec::new();
    for &budget in budgets {
        for method in [Method::Rrf, Method::Dense2, Method::Dense3] {
            points.push(SweepPoint { budget, method });
        }
    }

    let records: Vec<ResultRecord> = points
        .par_iter()
        .map(|point| {
            let desc = format!(
                "depth|{}|{}|b{}|R{}|t{}|e{}|bs{}|s{}|rates{:?}",
                dataset_label,
                point.method.name(),
                point.budget,
                cfg.constraint_radius,
                cfg.trials,
                cfg.epochs,
                cfg.batch,
                cfg.base_seed,
                cfg.rates,
            );
            let hash = config_hash(&desc);
            if let Some(prev) = existing.iter().find(|r| r.config_hash == hash) {
                return prev.clone();
            }
            let width = if point.method == Method::Dense3 {
                matched_width_3layer(shallow_param_count(point.budget, dataset.dim()), dataset.dim())
                    .unwrap_or(1)
            } else {
                0
            };
            let mut record = ResultRecord {
                config_hash: hash,
                dataset: dataset_label.clone(),
                method: point.method.name().into(),
                bandwidth: (point.method == Method::Rrf).then_some(1.0),
                learning_rate: f64::NAN,
                n_features: point.budget,
                width,
                budget: shallow_param_count(point.budget, dataset.dim()),
                trial: None,
                metric_kind: "mse".into(),
                metrics: Vec::new(),
                metric_mean: f64::NAN,
                metric_std: f64::NAN,
                train_seconds: 0.0,
                zero_fraction: None,
                best_for_bandwidth: false,
                error: None,
            };
            match run_sweep_point(
                cfg,
                &dataset,
                &train_idx,
                &test_idx,
                &screen_train,
                &screen_val,
                point,
            ) {
                Ok((rate, metrics, seconds, zero_fraction)) => {
                    let (mean, std) = mean_std(&metrics);
                    record.learning_rate = rate;
                    record.metrics = metrics;
                    record.metric_mean = mean;
                    record.metric_std = std;
                    record.train_seconds = seconds;
                    record.zero_fraction = zero_fraction;
                }
                Err(e) => record.error = Some(sanitize(e.to_string())),
            }
            record
        })
        .collect();

    Ok(records)
}

/// Trains one depth-sweep point: screens the learning rate, then runs all
/// trials at the winner. Returns `(rate, per-trial MSE, training seconds,
/// zero fraction)`.
#[allow(clippy::too_many_arguments)]
fn run_sweep_point(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    screen_train: &[usize],
    screen_val: &[usize],
    point: &SweepPoint,
) -> Result<(f64, Vec<f64>, f64, Option<f64>)> {
    let mut best_rate = cfg.rates[0];
    if cfg.rates.len() > 1 {
        let mut best_mse = f64::INFINITY;
        for &rate in &cfg.rates {
            let (mse, _, _) = train_eval_point(
                cfg,
                dataset,
                screen_train,
                screen_val,
                point,
                rate,
                0,
            )?;
            if mse < best_mse {
                best_mse = mse;
                best_rate = rate;
            }
        }
    }
    let mut metrics = Vec::with_capacity(cfg.trials);
    let mut seconds = 0.0;
    let mut zero_fraction = None;
    for trial in 0..cfg.trials {
        let (mse, secs, zf) = train_eval_point(
            cfg,
            dataset,
            train_idx,
            test_idx,
            point,
            best_rate,
            trial as u64,
        )?;
        metrics.push(mse);
        seconds += secs;
        if zero_fraction.is_none() {
            zero_fraction = zf;
        }
    }
    Ok((best_rate, metrics, seconds, zero_fraction))
}

/// One training run of a depth-sweep point; returns `(test MSE, training
/// seconds, zero fraction)`.
fn train_eval_point(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    train_idx: &[usize],
    eval_idx: &[usize],
    point: &SweepPoint,
    rate: f64,
    trial: u64,
) -> Result<(f64, f64, Option<f64>)> {
    let seed = fnv_seed(cfg.base_seed, trial, point.budget);
    match point.method {
        Method::Rrf => {
            let spec = FeatureSpec {
                kind: FeatureKind::Relu,
                input_dim: dataset.dim(),
                count: point.budget,
                bandwidth: 1.0,
                distribution: WeightDistribution::UniformSphere,
                seed,
            };
            let bank = FeatureBank::from_spec(spec)?;
            let phi = relu_features(dataset.x(), &bank)?;
            let zero_fraction = phi.zero_fraction();
            let phi = phi.into_values();
            let train_cfg = TrainConfig {
                learning_rate: rate,
                lr_decay: 1.0,
                batch: cfg.batch,
                epochs: cfg.epochs,
                seed: seed ^ 0xf00d,
                optimizer: Optimizer::SgdProjected {
                    radius: cfg.constraint_radius,
                },
            };
            let start = Instant::now();
            let trained = train_rrf_on_features(
                &bank,
                phi.view(),
                dataset,
                Some(train_idx),
                LossKind::Squared,
                &train_cfg,
            )?;
            let secs = start.elapsed().as_secs_f64();
            let mut phi_eval = Array2::<f64>::zeros((eval_idx.len(), phi.ncols()));
            for (row, &i) in eval_idx.iter().enumerate() {
                phi_eval.row_mut(row).assign(&phi.row(i));
            }
            let scores = trained.model.predict_features(phi_eval.view())?;
            Ok((
                mean_squared_error(scores.view(), dataset, eval_idx),
                secs,
                Some(zero_fraction),
            ))
        }
        Method::Dense2 | Method::Dense3 => {
            let d = dataset.dim();
            let net = if point.method == Method::Dense2 {
                DenseNet::two_layer(d, point.budget, 1, seed)?
            } else {
                let width = matched_width_3layer(shallow_param_count(point.budget, d), d)?;
                DenseNet::three_layer(d, width, 1, seed)?
            };
            let train_cfg = TrainConfig {
                learning_rate: rate,
                lr_decay: 1.0,
                batch: cfg.batch,
                epochs: cfg.epochs,
                seed: seed ^ 0xf00d,
                optimizer: Optimizer::Adam,
            };
            let start = Instant::now();
            let trained = dense_train(net, dataset, LossKind::Squared, &train_cfg, Some(train_idx))?;
            let secs = start.elapsed().as_secs_f64();
            let mut x_eval = Array2::<f64>::zeros((eval_idx.len(), d));
            for (row, &i) in eval_idx.iter().enumerate() {
                x_eval.row_mut(row).assign(&dataset.x().row(i));
            }
            let scores = trained.net.forward(x_eval.view())?;
            Ok((
                mean_squared_error(scores.view(), dataset, eval_idx),
                secs,
                None,
            ))
        }
        Method::Rff => Err(Error::Config(
            "the depth sweep compares rrf, dense2, and dense3".into(),
        )),
    }
}

/// Output format for result emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

const CSV_HEADER: &str = "config_hash,dataset,method,bandwidth,learning_rate,n_features,width,\
budget,trial,metric_kind,metric_mean,metric_std,metrics,train_seconds,zero_fraction,\
best_for_bandwidth,error";

/// Writes records with a deterministic column order, one row per record.
pub fn emit_results(
    records: &[ResultRecord],
    path: impl AsRef<Path>,
    format: OutputFormat,
) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        OutputFormat::Json => serde_json::to_string_pretty(records)?,
        OutputFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in records {
                let metrics: Vec<String> = r.metrics.iter().map(|v| format!("{v:?}")).collect();
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.config_hash,
                    r.dataset,
                    r.method,
                    r.bandwidth.map(|v| format!("{v:?}")).unwrap_or_default(),
                    format_f64(r.learning_rate),
                    r.n_features,
                    r.width,
                    r.budget,
                    r.trial.map(|t| t.to_string()).unwrap_or_default(),
                    r.metric_kind,
                    format_f64(r.metric_mean),
                    format_f64(r.metric_std),
                    metrics.join(";"),
                    format_f64(r.train_seconds),
                    r.zero_fraction.map(|v| format!("{v:?}")).unwrap_or_default(),
                    r.best_for_bandwidth,
                    r.error.clone().unwrap_or_default(),
                )
                .expect("write to string");
            }
            out
        }
    };
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

/// Reads records previously written by [`emit_results`].
pub fn read_results(path: impl AsRef<Path>, format: OutputFormat) -> Result<Vec<ResultRecord>> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    match format {
        OutputFormat::Json => Ok(serde_json::from_str(&text)?),
        OutputFormat::Csv => {
            let mut records = Vec::new();
            let mut lines = text.lines().enumerate();
            match lines.next() {
                Some((_, header)) if header == CSV_HEADER => {}
                _ => {
                    return Err(Error::Parse {
                        line: 1,
                        message: "unrecognized results header".into(),
                    })
                }
            }
            for (lineno, line) in lines {
                if line.is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 17 {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: format!("expected 17 fields, got {}", fields.len()),
                    });
                }
                let parse_f64 = |s: &str, what: &str| -> Result<f64> {
                    if s == "NaN" {
                        return Ok(f64::NAN);
                    }
                    s.parse().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        message: format!("bad {what} {s:?}"),
                    })
                };
                let metrics = if fields[12].is_empty() {
                    Vec::new()
                } else {
                    fields[12]
                        .split(';')
                        .map(|s| parse_f64(s, "metric"))
                        .collect::<Result<Vec<f64>>>()?
                };
                records.push(ResultRecord {
                    config_hash: fields[0].into(),
                    dataset: fields[1].into(),
                    method: fields[2].into(),
                    bandwidth: if fields[3].is_empty() {
                        None
                    } else {
                        Some(parse_f64(fields[3], "bandwidth")?)
                    },
                    learning_rate: parse_f64(fields[4], "learning rate")?,
                    n_features: fields[5].parse().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        message: "bad n_features".into(),
                    })?,
                    width: fields[6].parse().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        message: "bad width".into(),
                    })?,
                    budget: fields[7].parse().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        message: "bad budget".into(),
                    })?,
                    trial: if fields[8].is_empty() {
                        None
                    } else {
                        Some(fields[8].parse().map_err(|_| Error::Parse {
                            line: lineno + 1,
                            message: "bad trial".into(),
                        })?)
                    },
                    metric_kind: fields[9].into(),
                    metric_mean: parse_f64(fields[10], "metric mean")?,
                    metric_std: parse_f64(fields[11], "metric std")?,
                    metrics,
                    train_seconds: parse_f64(fields[13], "train seconds")?,
                    zero_fraction: if fields[14].is_empty() {
                        None
                    } else {
                        Some(parse_f64(fields[14], "zero fraction")?)
                    },
                    best_for_bandwidth: fields[15] == "true",
                    error: if fields[16].is_empty() {
                        None
                    } else {
                        Some(fields[16].into())
                    },
                });
            }
            Ok(records)
        }
    }
}

/// What a config file asks the runner to do.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentKind {
    Grid,
    Depth { budgets: Vec<usize> },
}

/// A parsed experiment file: the sweep kind plus the shared configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentFile {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
}

/// Parses the flat sectioned key-value config format:
///
/// ```text
/// [experiment]
/// kind = grid              # grid | depth
/// [dataset]
/// source = sine            # sine|strips|square|checkboard|daniely|libsvm
/// m = 2000
/// d = 2                    # daniely half-dimension
/// path = data/adult.libsvm # libsvm source
/// dim = 123                # optional explicit width
/// normalize = unit_ball    # optional
/// [method]
/// kind = rrf               # rrf | rff (grid sweeps)
/// radius = 1000.0
/// [grid]
/// bandwidths = 0.125,0.25,0.5,1,2,4,8
/// rates = 0.001,0.01,0.1,1
/// features = 20
/// [run]
/// folds = 5
/// trials = 10
/// epochs = 50
/// batch = 64
/// seed = 0
/// budgets = 20,40,80       # depth sweeps only
/// ```
///
/// `#` starts a comment; blank lines are ignored.
pub fn parse_config(text: &str) -> Result<ExperimentFile> {
    use std::collections::HashMap;
    let mut values: HashMap<String, String> = HashMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        values.insert(
            format!("{section}.{}", key.trim()),
            value.trim().to_string(),
        );
    }

    let get = |key: &str| values.get(key).map(|s| s.as_str());
    let require = |key: &str| {
        get(key).ok_or_else(|| Error::Config(format!("missing config key {key:?}")))
    };
    fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| Error::Config(format!("bad value for {key:?}: {value:?}")))
    }
    fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
        value
            .split(',')
            .map(|s| parse(key, s.trim()))
            .collect::<Result<Vec<T>>>()
    }

    let source = require("dataset.source")?;
    let dataset = match source {
        "sine" | "strips" | "square" | "checkboard" => {
            let kind = match source {
                "sine" => Grid2dKind::Sine,
                "strips" => Grid2dKind::Strips,
                "square" => Grid2dKind::Square,
                _ => Grid2dKind::Checkboard,
            };
            DatasetSelector::Grid2d {
                kind,
                m: parse("dataset.m", require("dataset.m")?)?,
            }
        }
        "daniely" => DatasetSelector::Daniely {
            d: parse("dataset.d", require("dataset.d")?)?,
            m: parse("dataset.m", require("dataset.m")?)?,
        },
        "libsvm" => DatasetSelector::Libsvm {
            path: require("dataset.path")?.to_string(),
            dim: match get("dataset.dim") {
                Some(v) => Some(parse("dataset.dim", v)?),
                None => None,
            },
            normalize: match get("dataset.normalize") {
                Some("unit_ball") => Some(NormalizeMode::UnitBall),
                Some("per_feature_standard") => Some(NormalizeMode::PerFeatureStandard),
                Some(other) => {
                    return Err(Error::Config(format!("unknown normalize mode {other:?}")))
                }
                None => None,
            },
        },
        other => return Err(Error::Config(format!("unknown dataset source {other:?}"))),
    };

    let method = match get("method.kind").unwrap_or("rrf") {
        "rrf" => Method::Rrf,
        "rff" => Method::Rff,
        "dense2" => Method::Dense2,
        "dense3" => Method::Dense3,
        other => return Err(Error::Config(format!("unknown method {other:?}"))),
    };

    let config = ExperimentConfig {
        dataset,
        method,
        bandwidths: match get("grid.bandwidths") {
            Some(v) => parse_list("grid.bandwidths", v)?,
            None => vec![0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
        },
        rates: match get("grid.rates") {
            Some(v) => parse_list("grid.rates", v)?,
            None => vec![1e-3, 1e-2, 1e-1, 1.0],
        },
        feature_counts: match get("grid.features") {
            Some(v) => parse_list("grid.features", v)?,
            None => vec![20],
        },
        constraint_radius: match get("method.radius") {
            Some(v) => parse("method.radius", v)?,
            None => 1e3,
        },
        folds: match get("run.folds") {
            Some(v) => parse("run.folds", v)?,
            None => 5,
        },
        trials: match get("run.trials") {
            Some(v) => parse("run.trials", v)?,
            None => 1,
        },
        base_seed: match get("run.seed") {
            Some(v) => parse("run.seed", v)?,
            None => 0,
        },
        epochs: match get("run.epochs") {
            Some(v) => parse("run.epochs", v)?,
            None => 50,
        },
        batch: match get("run.batch") {
            Some(v) => parse("run.batch", v)?,
            None => 64,
        },
    };

    let kind = match require("experiment.kind")? {
        "grid" => ExperimentKind::Grid,
        "depth" => ExperimentKind::Depth {
            budgets: match get("run.budgets") {
                Some(v) => parse_list("run.budgets", v)?,
                // Shallow node counts from 20 to 5120, each level doubling.
                None => (0..9).map(|k| 20 << k).collect(),
            },
        },
        other => return Err(Error::Config(format!("unknown experiment kind {other:?}"))),
    };

    Ok(ExperimentFile { kind, config })
}
