//! Synthetic dataset generators, LIBSVM ingestion, normalization, and
//! deterministic (stratified) k-fold splitting.
//!
//! All generators are pure functions of their parameters and a 64-bit seed;
//! sample `i` is drawn from substream `i`, so generated datasets are stable
//! prefixes of larger draws with the same seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::substream;

/// Kind of prediction problem the labels encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Labels are exactly ±1.
    Binary,
    /// Labels are class indices `0 .. classes`.
    Multiclass { classes: usize },
    /// Labels are reals.
    Regression,
}

/// An in-memory dataset: row-major samples, labels, task, and the max
/// Euclidean norm of the rows. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    x: Array2<f64>,
    y: Array1<f64>,
    task: Task,
    radius: f64,
    seed: Option<u64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Array2<f64>, y: Array1<f64>, task: Task) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one row".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("samples contain non-finite values".into()));
        }
        match task {
            Task::Binary => {
                if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
                    return Err(Error::Label("binary labels must be ±1".into()));
                }
            }
            Task::Multiclass { classes } => {
                if classes < 2 {
                    return Err(Error::Label("multiclass needs at least 2 classes".into()));
                }
                if y
                    .iter()
                    .any(|v| v.fract() != 0.0 || *v < 0.0 || *v >= classes as f64)
                {
                    return Err(Error::Label(format!(
                        "class labels must be integers in [0, {classes})"
                    )));
                }
            }
            Task::Regression => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Label("regression labels must be finite".into()));
                }
            }
        }
        let radius = x
            .axis_iter(Axis(0))
            .map(|row| row.dot(&row).sqrt())
            .fold(0.0f64, f64::max);
        Ok(Dataset {
            name: name.into(),
            x,
            y,
            task,
            radius,
            seed: None,
        })
    }

    fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// New dataset holding the rows at `indices`.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Dataset> {
        let mut x = Array2::<f64>::zeros((indices.len(), self.dim()));
        let mut y = Array1::<f64>::zeros(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            x.row_mut(row).assign(&self.x.row(i));
            y[row] = self.y[i];
        }
        Dataset::new(name, x, y, self.task)
    }

    /// JSON manifest: name, sample count, dimension, task, radius, seed.
    pub fn manifest_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            name: &'a str,
            samples: usize,
            dim: usize,
            task: &'a Task,
            radius: f64,
            seed: Option<u64>,
        }
        Ok(serde_json::to_string_pretty(&Manifest {
            name: &self.name,
            samples: self.len(),
            dim: self.dim(),
            task: &self.task,
            radius: self.radius,
            seed: self.seed,
        })?)
    }

    /// CSV with header `x0,..,x{d-1},y`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        let header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        writeln!(out, "{},y", header.join(",")).expect("write to string");
        for (row, y) in self.x.axis_iter(Axis(0)).zip(self.y.iter()) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{},{y:?}", cells.join(",")).expect("write to string");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// LIBSVM text format: label, then 1-based `index:value` pairs for the
    /// nonzero coordinates.
    pub fn write_libsvm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for (row, y) in self.x.axis_iter(Axis(0)).zip(self.y.iter()) {
            match self.task {
                Task::Binary | Task::Multiclass { .. } => {
                    write!(out, "{}", *y as i64).expect("write to string")
                }
                Task::Regression => write!(out, "{y:?}").expect("write to string"),
            }
            for (j, v) in row.iter().enumerate() {
                if *v != 0.0 {
                    write!(out, " {}:{v:?}", j + 1).expect("write to string");
                }
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Draws a unit vector in `R^dim` from the given rng.
fn unit_vector(dim: usize, rng: &mut impl Rng) -> Array1<f64> {
    let mut v = Array1::<f64>::zeros(dim);
    loop {
        let mut norm_sq = 0.0;
        for x in v.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = z;
            norm_sq += z * z;
        }
        if norm_sq > 0.0 {
            let inv = norm_sq.sqrt().recip();
            v.mapv_inplace(|x| x * inv);
            return v;
        }
    }
}

/// Regression data on the product of two unit spheres: `x = (u, v)` with
/// `u, v` i.i.d. uniform on `S^{d-1} ⊂ R^d`, labeled `y = sin(8π u·v)`.
pub fn gen_daniely(d: usize, m: usize, seed: u64) -> Result<Dataset> {
    if d < 2 {
        return Err(Error::InvalidArgument("gen_daniely needs d >= 2".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let mut x = Array2::<f64>::zeros((m, 2 * d));
    let mut y = Array1::<f64>::zeros(m);
    for i in 0..m {
        let mut rng = substream(seed, i as u64);
        let u = unit_vector(d, &mut rng);
        let v = unit_vector(d, &mut rng);
        let dot = u.dot(&v);
        x.slice_mut(ndarray::s![i, ..d]).assign(&u);
        x.slice_mut(ndarray::s![i, d..]).assign(&v);
        y[i] = (8.0 * std::f64::consts::PI * dot).sin();
    }
    Ok(Dataset::new(format!("daniely{d}"), x, y, Task::Regression)?.with_seed(seed))
}

/// The four 2-d binary benchmarks on `[-1, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid2dKind {
    /// Sign of the vertical offset from a sine wave.
    Sine,
    /// Vertical bands of alternating sign.
    Strips,
    /// +1 inside the centered square of half-width 0.5.
    Square,
    /// Alternating sign cells in both directions.
    Checkboard,
}

impl Grid2dKind {
    pub fn name(&self) -> &'static str {
        match self {
            Grid2dKind::Sine => "sine",
            Grid2dKind::Strips => "strips",
            Grid2dKind::Square => "square",
            Grid2dKind::Checkboard => "checkboard",
        }
    }

    /// Signed decision value; the label is its sign.
    fn decision(&self, x1: f64, x2: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            Grid2dKind::Sine => x2 - 0.5 * (2.0 * PI * x1).sin(),
            Grid2dKind::Strips => (3.0 * PI * x1).sin(),
            Grid2dKind::Square => 0.5 - x1.abs().max(x2.abs()),
            Grid2dKind::Checkboard => (3.0 * PI * x1).sin() * (3.0 * PI * x2).sin(),
        }
    }
}

/// Uniform samples on `[-1, 1]²` labeled by the kind's decision regions.
/// Points within `1e-12` of a decision boundary are resampled so labels are
/// stable under float noise.
pub fn gen_grid2d(kind: Grid2dKind, m: usize, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let mut x = Array2::<f64>::zeros((m, 2));
    let mut y = Array1::<f64>::zeros(m);
    for i in 0..m {
        let mut rng = substream(seed, i as u64);
        loop {
            let x1 = rng.gen::<f64>() * 2.0 - 1.0;
            let x2 = rng.gen::<f64>() * 2.0 - 1.0;
            let g = kind.decision(x1, x2);
            if g.abs() > 1e-12 {
                x[[i, 0]] = x1;
                x[[i, 1]] = x2;
                y[i] = if g > 0.0 { 1.0 } else { -1.0 };
                break;
            }
        }
    }
    Ok(Dataset::new(kind.name(), x, y, Task::Binary)?.with_seed(seed))
}

/// Two well-separated Gaussian blobs labeled ±1. Centers sit at
/// `±(offset/√d)·(1,…,1)` and points scatter with the given standard
/// deviation.
pub fn gen_blobs(d: usize, m: usize, offset: f64, std: f64, seed: u64) -> Result<Dataset> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidArgument("need d >= 1 and m >= 1".into()));
    }
    let c = offset / (d as f64).sqrt();
    let mut x = Array2::<f64>::zeros((m, d));
    let mut y = Array1::<f64>::zeros(m);
    for i in 0..m {
        let mut rng = substream(seed, i as u64);
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            x[[i, j]] = sign * c + std * z;
        }
        y[i] = sign;
    }
    Ok(Dataset::new("blobs", x, y, Task::Binary)?.with_seed(seed))
}

/// Rotation-invariant data with a piecewise-constant radial density.
///
/// `bins` lists `(upper_edge, weight)` pairs with ascending positive edges;
/// the radius is drawn from the bin chosen proportionally to the weights and
/// uniformly within it, the direction uniformly on the sphere, and the label
/// is `label_fn(radius)`.
pub fn gen_radial(
    d: usize,
    m: usize,
    bins: &[(f64, f64)],
    label_fn: impl Fn(f64) -> f64,
    seed: u64,
) -> Result<Dataset> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidArgument("need d >= 1 and m >= 1".into()));
    }
    if bins.is_empty() {
        return Err(Error::InvalidArgument("need at least one radial bin".into()));
    }
    let mut prev = 0.0;
    for (edge, weight) in bins {
        if edge.is_nan() || *edge <= prev || weight.is_nan() || *weight < 0.0 {
            return Err(Error::InvalidArgument(
                "bin edges must ascend from 0 with non-negative weights".into(),
            ));
        }
        prev = *edge;
    }
    let total: f64 = bins.iter().map(|(_, w)| w).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::InvalidArgument("bin weights sum to zero".into()));
    }
    let mut x = Array2::<f64>::zeros((m, d));
    let mut y = Array1::<f64>::zeros(m);
    for i in 0..m {
        let mut rng = substream(seed, i as u64);
        let mut pick = rng.gen::<f64>() * total;
        let mut lo = 0.0;
        let mut hi = bins[bins.len() - 1].0;
        for (edge, weight) in bins {
            if pick <= *weight {
                hi = *edge;
                break;
            }
            pick -= weight;
            lo = *edge;
        }
        let radius = lo + rng.gen::<f64>() * (hi - lo);
        let dir = unit_vector(d, &mut rng);
        for j in 0..d {
            x[[i, j]] = radius * dir[j];
        }
        y[i] = label_fn(radius);
    }
    Ok(Dataset::new("radial", x, y, Task::Regression)?.with_seed(seed))
}

/// Parses a LIBSVM text file: one sample per line, `label index:value ...`
/// with 1-based indices.
///
/// The width is the largest index seen unless `dim` forces a wider layout.
/// Integral labels with two distinct values map to ±1 (smaller value to
/// −1); more distinct integral values map to class indices in sorted order;
/// any non-integral label makes the task regression with labels kept as-is.
pub fn load_libsvm(path: impl AsRef<Path>, dim: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut raw_labels: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label: f64 = tokens
            .next()
            .expect("nonempty line has a first token")
            .parse()
            .map_err(|_| Error::Parse {
                line: lineno + 1,
                message: "bad label".into(),
            })?;
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: format!("expected index:value, got {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("bad index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: "indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("bad value {val:?}"),
            })?;
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        raw_labels.push(label);
        rows.push(entries);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "file has no samples".into(),
        });
    }
    let d = match dim {
        Some(d) => {
            if max_index > d {
                return Err(Error::InvalidArgument(format!(
                    "file has feature index {max_index} but dim {d} was requested"
                )));
            }
            d
        }
        None => max_index,
    };
    if d == 0 {
        return Err(Error::InvalidArgument(
            "no feature indices and no explicit dim".into(),
        ));
    }

    let mut x = Array2::<f64>::zeros((rows.len(), d));
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            x[[i, j]] = v;
        }
    }

    let all_integral = raw_labels.iter().all(|v| v.fract() == 0.0);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "libsvm".into());
    if all_integral {
        let mut distinct: Vec<i64> = raw_labels.iter().map(|v| *v as i64).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() == 2 {
            let lo = distinct[0];
            let y = raw_labels
                .iter()
                .map(|v| if *v as i64 == lo { -1.0 } else { 1.0 })
                .collect();
            return Dataset::new(name, x, y, Task::Binary);
        }
        if distinct.len() > 2 {
            let index: BTreeMap<i64, usize> =
                distinct.iter().enumerate().map(|(i, v)| (*v, i)).collect();
            let y = raw_labels
                .iter()
                .map(|v| index[&(*v as i64)] as f64)
                .collect();
            return Dataset::new(
                name,
                x,
                y,
                Task::Multiclass {
                    classes: distinct.len(),
                },
            );
        }
    }
    Dataset::new(name, x, Array1::from(raw_labels), Task::Regression)
}

/// Rescaling mode for [`normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    /// Scale all samples by `1/radius` so the new radius is 1.
    UnitBall,
    /// Zero mean and unit variance per coordinate; constant coordinates
    /// become all zeros.
    PerFeatureStandard,
}

/// Returns a rescaled copy of the dataset.
pub fn normalize(dataset: &Dataset, mode: NormalizeMode) -> Dataset {
    let mut x = dataset.x.clone();
    match mode {
        NormalizeMode::UnitBall => {
            if dataset.radius > 0.0 {
                let inv = dataset.radius.recip();
                x.mapv_inplace(|v| v * inv);
            }
        }
        NormalizeMode::PerFeatureStandard => {
            let m = x.nrows() as f64;
            for mut col in x.axis_iter_mut(Axis(1)) {
                let mean = col.sum() / m;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
                if var > 0.0 {
                    let inv = var.sqrt().recip();
                    col.mapv_inplace(|v| (v - mean) * inv);
                } else {
                    col.fill(0.0);
                }
            }
        }
    }
    let mut out = Dataset::new(dataset.name.clone(), x, dataset.y.clone(), dataset.task)
        .expect("rescaling keeps the dataset valid");
    out.seed = dataset.seed;
    out
}

/// Cross-validation plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: usize,
    pub seed: u64,
    pub stratified: bool,
}

/// Deterministic k-fold split: returns `(train, validation)` index lists per
/// fold. Validation folds are disjoint and cover all indices. Stratified
/// splits round-robin each class across folds (classification tasks only).
pub fn kfold(dataset: &Dataset, plan: &SplitPlan) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let m = dataset.len();
    if plan.folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    if plan.folds > m {
        return Err(Error::InvalidArgument(format!(
            "{} folds for {} samples",
            plan.folds, m
        )));
    }
    let mut fold_of = vec![0usize; m];
    let mut rng = substream(plan.seed, 0);
    let stratify = plan.stratified && !matches!(dataset.task, Task::Regression);
    if stratify {
        let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, y) in dataset.y.iter().enumerate() {
            by_class.entry(*y as i64).or_default().push(i);
        }
        let mut next_fold = 0usize;
        for (_, mut members) in by_class {
            members.shuffle(&mut rng);
            for i in members {
                fold_of[i] = next_fold;
                next_fold = (next_fold + 1) % plan.folds;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        for (pos, i) in order.into_iter().enumerate() {
            fold_of[i] = pos % plan.folds;
        }
    }
    let mut splits = Vec::with_capacity(plan.folds);
    for fold in 0..plan.folds {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, &f) in fold_of.iter().enumerate() {
            if f == fold {
                val.push(i);
            } else {
                train.push(i);
            }
        }
        splits.push((train, val));
    }
    Ok(splits)
}
