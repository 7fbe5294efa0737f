//! The arc-cosine kernel induced by uniform-sphere ReLU features: closed
//! form, Taylor/Mercer coefficients, Monte-Carlo estimation, RKHS-norm bound
//! calculators, and an empirical admissibility (leverage) score.
//!
//! For inputs on the unit sphere with inner product `s = x̃ · x̃'`, the kernel
//! is
//!
//! ```text
//! k(s) = (1 / (2 (d+1) π)) [ √(1 − s²) + (π − arccos s) s ]
//! ```
//!
//! For general bounded data, [`lift_to_sphere`] maps `x ↦ (x, 1) / √(‖x‖²+1)`
//! so the closed form applies to the lifted points.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::features::{FeatureBank, FeatureKind};
use crate::linalg::{cholesky, cholesky_solve};

/// Slack used when clamping inner products to `[-1, 1]`.
const CLAMP_SLACK: f64 = 1e-9;

/// First-order arc-cosine kernel on `S^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArcCosKernel {
    ambient_dim: usize,
}

impl ArcCosKernel {
    pub fn new(ambient_dim: usize) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::InvalidArgument("ambient_dim must be >= 1".into()));
        }
        Ok(ArcCosKernel { ambient_dim })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Kernel value at inner product `s`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        arccos_kernel(s, self.ambient_dim)
    }

    /// Gram matrix of the kernel on a set of unit-sphere points (rows).
    /// Entry `(i, j)` is `k(x_i · x_j)`; symmetry is exact because each entry
    /// is computed once from the same dot product.
    pub fn gram(&self, points: ArrayView2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.ambient_dim + 1 {
            return Err(Error::ShapeMismatch(format!(
                "points on S^{} must have {} coordinates, got {}",
                self.ambient_dim,
                self.ambient_dim + 1,
                points.ncols()
            )));
        }
        let m = points.nrows();
        let mut k = Array2::<f64>::zeros((m, m));
        for i in 0..m {
            for j in 0..=i {
                let s = points.row(i).dot(&points.row(j));
                let v = self.eval(s)?;
                k[[i, j]] = v;
                k[[j, i]] = v;
            }
        }
        Ok(k)
    }
}

/// Closed-form arc-cosine kernel at inner product `s` for inputs on `S^d`.
///
/// Inputs within `1e-9` of `[-1, 1]` are clamped to absorb floating-point
/// dot-product drift; anything farther out is a domain error.
pub fn arccos_kernel(s: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be >= 1".into()));
    }
    if !s.is_finite() || s.abs() > 1.0 + CLAMP_SLACK {
        return Err(Error::Domain(format!(
            "inner product {s} outside [-1, 1] beyond tolerance"
        )));
    }
    let s = s.clamp(-1.0, 1.0);
    let val = ((1.0 - s * s).sqrt() + (std::f64::consts::PI - s.acos()) * s)
        / (2.0 * (d as f64 + 1.0) * std::f64::consts::PI);
    Ok(val)
}

/// Taylor coefficients `a_0 .. a_J` of the arc-cosine kernel `k(s) = Σ a_j s^j`.
///
/// All coefficients are non-negative and the odd ones beyond `a_1` vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorCoeffs {
    d: usize,
    coeffs: Vec<f64>,
}

impl TaylorCoeffs {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Partial sum `Σ_{j <= J} a_j s^j`.
    pub fn eval(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for a in &self.coeffs {
            acc += a * pow;
            pow *= s;
        }
        acc
    }

    /// One coefficient per line.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("order,coefficient\n");
        for (j, a) in self.coeffs.iter().enumerate() {
            writeln!(out, "{j},{a:?}").expect("write to string");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Taylor coefficients of the arc-cosine kernel up to order `max_order`.
///
/// `a_0 = 1/(2(d+1)π)`, `a_1 = 1/(4(d+1))`, `a_2 = 1/(4(d+1)π)`, and for
/// `k >= 2`
///
/// ```text
/// a_{2k} = 1/(2(d+1)π) · (2k−3)!! / (2k)!! · 1/(2k−1) .
/// ```
///
/// The double-factorial ratio is carried iteratively, so no individual
/// factorial is ever materialized and there is no overflow at any order.
pub fn taylor_coeffs(d: usize, max_order: usize) -> Result<TaylorCoeffs> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be >= 1".into()));
    }
    let c = 1.0 / (2.0 * (d as f64 + 1.0) * std::f64::consts::PI);
    let mut coeffs = vec![0.0; max_order + 1];
    coeffs[0] = c;
    if max_order >= 1 {
        coeffs[1] = 1.0 / (4.0 * (d as f64 + 1.0));
    }
    if max_order >= 2 {
        coeffs[2] = c / 2.0;
    }
    // ratio_k = (2k-3)!! / (2k)!!, starting at k = 2 with 1!!/4!! = 1/8.
    let mut ratio = 1.0 / 8.0;
    let mut k = 2usize;
    while 2 * k <= max_order {
        coeffs[2 * k] = c * ratio / (2.0 * k as f64 - 1.0);
        ratio *= (2.0 * k as f64 - 1.0) / (2.0 * k as f64 + 2.0);
        k += 1;
    }
    Ok(TaylorCoeffs { d, coeffs })
}

/// Homogeneous lift `x ↦ (x, 1) / √(‖x‖² + 1)` onto the unit sphere.
pub fn lift_to_sphere(x: ArrayView1<f64>) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(x.len() + 1);
    let norm_sq = x.dot(&x);
    let inv = (norm_sq + 1.0).sqrt().recip();
    for (o, v) in out.iter_mut().zip(x.iter()) {
        *o = v * inv;
    }
    out[x.len()] = inv;
    out
}

/// Monte-Carlo kernel estimate `(1/n) Σ_j φ_j(x) φ_j(x')` with ReLU features.
///
/// Points of length `d` are lifted as `(x, 1/γ)` with the bank's bandwidth;
/// points of length `d + 1` are taken as direct inputs in the lifted space
/// (for example unit vectors on `S^d`).
pub fn mc_kernel_estimate(
    x: ArrayView1<f64>,
    x2: ArrayView1<f64>,
    bank: &FeatureBank,
) -> Result<f64> {
    if bank.kind() != FeatureKind::Relu {
        return Err(Error::InvalidArgument(
            "mc_kernel_estimate requires a relu bank".into(),
        ));
    }
    if x.len() != x2.len() {
        return Err(Error::ShapeMismatch(format!(
            "points have lengths {} and {}",
            x.len(),
            x2.len()
        )));
    }
    let d = bank.input_dim();
    let (a, b) = if x.len() == d {
        let inv_gamma = bank.spec().bandwidth.recip();
        let mut a = Array1::zeros(d + 1);
        let mut b = Array1::zeros(d + 1);
        a.slice_mut(ndarray::s![..d]).assign(&x);
        b.slice_mut(ndarray::s![..d]).assign(&x2);
        a[d] = inv_gamma;
        b[d] = inv_gamma;
        (a, b)
    } else if x.len() == d + 1 {
        (x.to_owned(), x2.to_owned())
    } else {
        return Err(Error::ShapeMismatch(format!(
            "points must have length {} or {}, got {}",
            d,
            d + 1,
            x.len()
        )));
    };
    let mut acc = 0.0;
    for omega in bank.omegas().axis_iter(Axis(0)) {
        let fa = omega.dot(&a).max(0.0);
        if fa > 0.0 {
            let fb = omega.dot(&b).max(0.0);
            acc += fa * fb;
        }
    }
    Ok(acc / bank.count() as f64)
}

/// Empirical admissibility score of a feature family against a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    /// Regularization level the score was computed at.
    pub lambda: f64,
    /// `max_ω (1/m) v_ω^T (K/m + λI)^{-1} v_ω` over the probe features.
    pub dmax: f64,
    /// Number of data points behind the Gram matrix.
    pub sample_count: usize,
    /// Number of probe features ω.
    pub probe_count: usize,
    /// Whether the factorization needed the jitter fallback.
    pub jitter_applied: bool,
}

/// Empirical plug-in for the leverage quantity
/// `sup_ω ‖(Σ + λI)^{-1/2} φ(·; ω)‖²`.
///
/// `kernel_matrix` is the `m × m` Gram of the kernel on the data and
/// `feature_rows` holds one probe feature per row: row `p` is
/// `(φ_ω(x_1), …, φ_ω(x_m))` for probe `ω = ω_p`. The score is the maximum
/// over probes of `(1/m) v^T (K/m + λI)^{-1} v`.
pub fn empirical_dmax(
    kernel_matrix: ArrayView2<f64>,
    feature_rows: ArrayView2<f64>,
    lambda: f64,
) -> Result<AdmissibilityReport> {
    let m = kernel_matrix.nrows();
    if m == 0 || kernel_matrix.ncols() != m {
        return Err(Error::ShapeMismatch(format!(
            "kernel matrix must be square and nonempty, got {}x{}",
            m,
            kernel_matrix.ncols()
        )));
    }
    if feature_rows.ncols() != m {
        return Err(Error::ShapeMismatch(format!(
            "feature rows have {} columns, expected {}",
            feature_rows.ncols(),
            m
        )));
    }
    if feature_rows.nrows() == 0 {
        return Err(Error::InvalidArgument("need at least one probe".into()));
    }
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    // Symmetry within 1e-8.
    for i in 0..m {
        for j in 0..i {
            if (kernel_matrix[[i, j]] - kernel_matrix[[j, i]]).abs() > 1e-8 {
                return Err(Error::Numerical(format!(
                    "kernel matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    // PSD within 1e-8: K + 1e-8 I must admit a Cholesky factor.
    let mut shifted = kernel_matrix.to_owned();
    for i in 0..m {
        shifted[[i, i]] += 1e-8;
    }
    if cholesky(shifted.view()).is_none() {
        return Err(Error::Numerical(
            "kernel matrix is not PSD within 1e-8".into(),
        ));
    }

    // Factor K/m + λI, with a jitter retry on numerical failure.
    let mut system = kernel_matrix.mapv(|v| v / m as f64);
    for i in 0..m {
        system[[i, i]] += lambda;
    }
    let mut jitter_applied = false;
    let l = match cholesky(system.view()) {
        Some(l) => l,
        None => {
            jitter_applied = true;
            for i in 0..m {
                system[[i, i]] += 1e-10;
            }
            cholesky(system.view()).ok_or_else(|| {
                Error::Numerical("factorization failed even with jitter".into())
            })?
        }
    };

    let mut dmax = 0.0f64;
    for v in feature_rows.axis_iter(Axis(0)) {
        let sol = cholesky_solve(&l, v);
        dmax = dmax.max(v.dot(&sol) / m as f64);
    }
    Ok(AdmissibilityReport {
        lambda,
        dmax,
        sample_count: m,
        probe_count: feature_rows.nrows(),
        jitter_applied,
    })
}

/// RKHS-norm bound `√(2(d+1)π) · α · p` for the projection power
/// `α (β · x̃)^p` on `S^d`, valid for `p = 1` or even `p`.
pub fn norm_bound_projection(alpha: f64, p: usize, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be >= 1".into()));
    }
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    if p != 1 && !p.is_multiple_of(2) {
        return Err(Error::UnsupportedOrder(p));
    }
    Ok((2.0 * (d as f64 + 1.0) * std::f64::consts::PI).sqrt() * alpha * p as f64)
}

/// RKHS-norm bound `2 √(2π) (d+1)^{3/2}` for `√(1 + ‖x‖²)`.
pub fn norm_bound_radius(d: usize) -> f64 {
    2.0 * (2.0 * std::f64::consts::PI).sqrt() * (d as f64 + 1.0).powf(1.5)
}

/// RKHS-norm bound `12 d √((4d+2)π)` for the paired dot product
/// `x_{1:d} · x_{d+1:2d}` on `S^{d-1} × S^{d-1}`.
pub fn norm_bound_dotprod(d: usize) -> f64 {
    12.0 * d as f64 * ((4.0 * d as f64 + 2.0) * std::f64::consts::PI).sqrt()
}

/// Writes a Gram matrix as CSV, one row per line.
pub fn gram_to_csv(gram: ArrayView2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in gram.axis_iter(Axis(0)) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", cells.join(",")).expect("write to string");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
