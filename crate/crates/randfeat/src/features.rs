//! Sampling of feature distributions and evaluation of random-feature maps
//! of neural-network type.
//!
//! A feature bank holds `n` inner-weight vectors `ω_j ∈ R^{d+1}` drawn from a
//! chosen distribution, plus uniform phases for the Fourier map. ReLU features
//! evaluate `max(0, ω_j · (x, 1/γ))`; Fourier features evaluate
//! `√2 · cos(ω_j · x / γ + b_j)`.
//!
//! All sampling is a pure function of `(spec, seed)`. Row `j` of a bank is
//! drawn from its own counter-based substream keyed by `(seed, j)`, so
//! sampling rows in parallel or extending a bank yields the same values as
//! sampling sequentially.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature map kind: ReLU node or cosine with phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Relu,
    Fourier,
}

/// Distribution of the inner weights `ω ∈ R^{d+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDistribution {
    /// Uniform on the unit sphere `S^d`.
    UniformSphere,
    /// Entries i.i.d. `Normal(0, scale²)`.
    Gaussian { scale: f64 },
    /// Uniform-sphere draws rescaled per coordinate by the given semi-axes,
    /// so the support is the ellipsoid surface.
    Ellipsoid { axes: Vec<f64> },
}

/// Everything needed to reconstruct a feature bank bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub input_dim: usize,
    pub count: usize,
    pub bandwidth: f64,
    pub distribution: WeightDistribution,
    pub seed: u64,
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be >= 1".into()));
        }
        if self.count == 0 {
            return Err(Error::InvalidArgument("count must be >= 1".into()));
        }
        if self.bandwidth.is_nan() || self.bandwidth <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        match &self.distribution {
            WeightDistribution::Gaussian { scale } if scale.is_nan() || *scale <= 0.0 => Err(
                Error::InvalidArgument(format!("gaussian scale must be positive, got {scale}")),
            ),
            WeightDistribution::Ellipsoid { axes } => {
                if axes.len() != self.input_dim + 1 {
                    return Err(Error::InvalidArgument(format!(
                        "ellipsoid needs {} axes, got {}",
                        self.input_dim + 1,
                        axes.len()
                    )));
                }
                if axes.iter().any(|a| a.is_nan() || *a <= 0.0) {
                    return Err(Error::InvalidArgument("all ellipsoid axes must be positive".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// RNG substream for row `j` of the sampling stream keyed by `seed`.
pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n × dim` matrix of unit rows, i.i.d. uniform on the sphere in `R^dim`.
/// Row `j` comes from substream `j`.
fn unit_rows(dim: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((n, dim));
    for (j, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let mut rng = substream(seed, j as u64);
        loop {
            let mut norm_sq = 0.0;
            for v in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = z;
                norm_sq += z * z;
            }
            if norm_sq > 0.0 {
                let inv = norm_sq.sqrt().recip();
                row.mapv_inplace(|v| v * inv);
                break;
            }
        }
    }
    out
}

/// Samples `n` points i.i.d. uniform on `S^d ⊂ R^{d+1}`; every row has unit
/// Euclidean norm.
pub fn sample_sphere(d: usize, n: usize, seed: u64) -> Result<Array2<f64>> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "sample_sphere requires d >= 1 and n >= 1".into(),
        ));
    }
    Ok(unit_rows(d + 1, n, seed))
}

/// Samples an `n × (d+1)` matrix with entries i.i.d. `Normal(0, scale²)`.
pub fn sample_gaussian(d: usize, n: usize, scale: f64, seed: u64) -> Result<Array2<f64>> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "sample_gaussian requires d >= 1 and n >= 1".into(),
        ));
    }
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let mut out = Array2::<f64>::zeros((n, d + 1));
    for (j, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let mut rng = substream(seed, j as u64);
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = scale * z;
        }
    }
    Ok(out)
}

/// Samples `n` points uniform in the ball of the given radius in `R^dim`.
pub fn sample_ball(dim: usize, n: usize, radius: f64, seed: u64) -> Result<Array2<f64>> {
    if dim == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "sample_ball requires dim >= 1 and n >= 1".into(),
        ));
    }
    if radius.is_nan() || radius < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "radius must be non-negative, got {radius}"
        )));
    }
    let mut out = Array2::<f64>::zeros((n, dim));
    for (j, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let mut rng = substream(seed, j as u64);
        loop {
            let mut norm_sq = 0.0;
            for v in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = z;
                norm_sq += z * z;
            }
            if norm_sq > 0.0 {
                let u: f64 = rng.gen::<f64>();
                let scale = radius * u.powf(1.0 / dim as f64) / norm_sq.sqrt();
                row.mapv_inplace(|v| v * scale);
                break;
            }
        }
    }
    Ok(out)
}

/// Sampled inner weights (and Fourier phases) defining a finite
/// random-feature map. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBank {
    spec: FeatureSpec,
    omegas: Array2<f64>,
    phases: Array1<f64>,
}

impl FeatureBank {
    /// Samples the bank determined by `spec`. Same spec (and hence seed)
    /// always yields the same bank.
    pub fn from_spec(spec: FeatureSpec) -> Result<Self> {
        spec.validate()?;
        let (d, n) = (spec.input_dim, spec.count);
        let omegas = match &spec.distribution {
            WeightDistribution::UniformSphere => unit_rows(d + 1, n, spec.seed),
            WeightDistribution::Gaussian { scale } => sample_gaussian(d, n, *scale, spec.seed)?,
            WeightDistribution::Ellipsoid { axes } => {
                let mut m = unit_rows(d + 1, n, spec.seed);
                for mut row in m.axis_iter_mut(Axis(0)) {
                    for (v, a) in row.iter_mut().zip(axes.iter()) {
                        *v *= a;
                    }
                }
                m
            }
        };
        let phases = match spec.kind {
            FeatureKind::Relu => Array1::zeros(0),
            FeatureKind::Fourier => {
                // Phase for row j comes from the same substream as its
                // weights, drawn after the d+1 coordinates.
                let mut p = Array1::<f64>::zeros(n);
                for (j, v) in p.iter_mut().enumerate() {
                    let mut rng = substream(spec.seed, j as u64);
                    for _ in 0..(d + 1) {
                        let _: f64 = rng.sample(StandardNormal);
                    }
                    *v = rng.gen::<f64>() * std::f64::consts::TAU;
                }
                p
            }
        };
        Ok(FeatureBank {
            spec,
            omegas,
            phases,
        })
    }

    /// Bank with explicitly provided weights; used by tests and by loaders.
    pub fn from_parts(spec: FeatureSpec, omegas: Array2<f64>, phases: Array1<f64>) -> Result<Self> {
        spec.validate()?;
        if omegas.nrows() != spec.count || omegas.ncols() != spec.input_dim + 1 {
            return Err(Error::ShapeMismatch(format!(
                "omegas must be {}x{}, got {}x{}",
                spec.count,
                spec.input_dim + 1,
                omegas.nrows(),
                omegas.ncols()
            )));
        }
        let expected_phases = match spec.kind {
            FeatureKind::Relu => 0,
            FeatureKind::Fourier => spec.count,
        };
        if phases.len() != expected_phases {
            return Err(Error::ShapeMismatch(format!(
                "expected {} phases, got {}",
                expected_phases,
                phases.len()
            )));
        }
        Ok(FeatureBank {
            spec,
            omegas,
            phases,
        })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn kind(&self) -> FeatureKind {
        self.spec.kind
    }

    pub fn count(&self) -> usize {
        self.spec.count
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn omegas(&self) -> ArrayView2<'_, f64> {
        self.omegas.view()
    }

    pub fn phases(&self) -> ArrayView1<'_, f64> {
        self.phases.view()
    }

    /// Flat CSV dump: a header line `kind,distribution,d,n,gamma,seed`, then
    /// one line per ω row, then one line per phase (Fourier only).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        let kind = match self.spec.kind {
            FeatureKind::Relu => "relu",
            FeatureKind::Fourier => "fourier",
        };
        let dist = match &self.spec.distribution {
            WeightDistribution::UniformSphere => "uniform_sphere".to_string(),
            WeightDistribution::Gaussian { scale } => format!("gaussian:{scale}"),
            WeightDistribution::Ellipsoid { axes } => {
                let axes: Vec<String> = axes.iter().map(|a| a.to_string()).collect();
                format!("ellipsoid:{}", axes.join(":"))
            }
        };
        writeln!(
            out,
            "{kind},{dist},{},{},{},{}",
            self.spec.input_dim, self.spec.count, self.spec.bandwidth, self.spec.seed
        )
        .expect("write to string");
        for row in self.omegas.axis_iter(Axis(0)) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", cells.join(",")).expect("write to string");
        }
        for p in self.phases.iter() {
            writeln!(out, "{p:?}").expect("write to string");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Reads a bank previously written by [`FeatureBank::write_csv`].
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty bank file".into(),
        })?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected 6 header fields, got {}", fields.len()),
            });
        }
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let kind = match fields[0] {
            "relu" => FeatureKind::Relu,
            "fourier" => FeatureKind::Fourier,
            other => return Err(parse_err(1, format!("unknown kind {other:?}"))),
        };
        let dist_parts: Vec<&str> = fields[1].split(':').collect();
        let distribution = match dist_parts[0] {
            "uniform_sphere" => WeightDistribution::UniformSphere,
            "gaussian" => WeightDistribution::Gaussian {
                scale: dist_parts
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(1, "bad gaussian scale".into()))?,
            },
            "ellipsoid" => {
                let axes: std::result::Result<Vec<f64>, _> =
                    dist_parts[1..].iter().map(|s| s.parse()).collect();
                WeightDistribution::Ellipsoid {
                    axes: axes.map_err(|_| parse_err(1, "bad ellipsoid axes".into()))?,
                }
            }
            other => return Err(parse_err(1, format!("unknown distribution {other:?}"))),
        };
        let input_dim: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(1, "bad input_dim".into()))?;
        let count: usize = fields[3]
            .parse()
            .map_err(|_| parse_err(1, "bad count".into()))?;
        let bandwidth: f64 = fields[4]
            .parse()
            .map_err(|_| parse_err(1, "bad bandwidth".into()))?;
        let seed: u64 = fields[5]
            .parse()
            .map_err(|_| parse_err(1, "bad seed".into()))?;
        let spec = FeatureSpec {
            kind,
            input_dim,
            count,
            bandwidth,
            distribution,
            seed,
        };

        let mut omegas = Array2::<f64>::zeros((count, input_dim + 1));
        for i in 0..count {
            let (lineno, line) = lines.next().ok_or_else(|| Error::Parse {
                line: i + 2,
                message: "missing omega row".into(),
            })?;
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|s| s.parse()).collect();
            let vals = vals.map_err(|_| parse_err(lineno + 1, "bad omega entry".into()))?;
            if vals.len() != input_dim + 1 {
                return Err(parse_err(
                    lineno + 1,
                    format!("expected {} entries, got {}", input_dim + 1, vals.len()),
                ));
            }
            for (j, v) in vals.into_iter().enumerate() {
                omegas[[i, j]] = v;
            }
        }
        let n_phases = if kind == FeatureKind::Fourier { count } else { 0 };
        let mut phases = Array1::<f64>::zeros(n_phases);
        for i in 0..n_phases {
            let (lineno, line) = lines.next().ok_or_else(|| Error::Parse {
                line: count + i + 2,
                message: "missing phase".into(),
            })?;
            phases[i] = line
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno + 1, "bad phase".into()))?;
        }
        FeatureBank::from_parts(spec, omegas, phases)
    }
}

/// Materialized feature values, one row per sample, one column per feature,
/// plus the spec of the bank that produced them.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    spec: FeatureSpec,
}

impl FeatureMatrix {
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn kind(&self) -> FeatureKind {
        self.spec.kind
    }

    /// Fraction of entries that are exactly zero.
    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.values.iter().filter(|v| **v == 0.0).count();
        zeros as f64 / self.values.len() as f64
    }
}

fn check_sample_dim(x: ArrayView2<f64>, bank: &FeatureBank) -> Result<()> {
    if x.ncols() != bank.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "samples have {} columns but the bank expects input_dim {}",
            x.ncols(),
            bank.input_dim()
        )));
    }
    Ok(())
}

/// ReLU feature matrix: `values[i][j] = max(0, ω_j · (x_i, 1/γ))`.
pub fn relu_features(x: ArrayView2<f64>, bank: &FeatureBank) -> Result<FeatureMatrix> {
    if bank.kind() != FeatureKind::Relu {
        return Err(Error::InvalidArgument(
            "relu_features requires a relu bank".into(),
        ));
    }
    check_sample_dim(x, bank)?;
    let d = bank.input_dim();
    // z = x · ω_{1:d}^T + (1/γ) ω_{d+1}
    let w = bank.omegas();
    let w_main = w.slice(ndarray::s![.., ..d]);
    let w_last = w.slice(ndarray::s![.., d]);
    let mut z = x.dot(&w_main.t());
    let inv_gamma = bank.spec().bandwidth.recip();
    for mut row in z.axis_iter_mut(Axis(0)) {
        for (v, wl) in row.iter_mut().zip(w_last.iter()) {
            *v = (*v + inv_gamma * wl).max(0.0);
        }
    }
    Ok(FeatureMatrix {
        values: z,
        spec: bank.spec().clone(),
    })
}

/// Fourier feature matrix: `values[i][j] = √2 · cos(ω_j · x_i / γ + b_j)`.
/// The trailing coordinate of ω is unused; the stored phase plays the bias
/// role.
pub fn fourier_features(x: ArrayView2<f64>, bank: &FeatureBank) -> Result<FeatureMatrix> {
    if bank.kind() != FeatureKind::Fourier {
        return Err(Error::InvalidArgument(
            "fourier_features requires a fourier bank".into(),
        ));
    }
    check_sample_dim(x, bank)?;
    let d = bank.input_dim();
    let w = bank.omegas();
    let w_main = w.slice(ndarray::s![.., ..d]);
    let mut z = x.dot(&w_main.t());
    let inv_gamma = bank.spec().bandwidth.recip();
    let sqrt2 = std::f64::consts::SQRT_2;
    let phases = bank.phases();
    for mut row in z.axis_iter_mut(Axis(0)) {
        for (v, b) in row.iter_mut().zip(phases.iter()) {
            *v = sqrt2 * (*v * inv_gamma + b).cos();
        }
    }
    Ok(FeatureMatrix {
        values: z,
        spec: bank.spec().clone(),
    })
}
