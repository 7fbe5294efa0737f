//! Finite-atom representations of ReLU-integral functions, Maurey
//! sparsification into bounded-weight shallow networks, and the multi-layer
//! composition approximator with explicit weight-matrix assembly.
//!
//! An [`AtomicFunction`] is a finite signed combination
//! `f(x) = Σ_j a_j ReLU(ω_j · (x, 1))` with total mass `R̃ = Σ_j |a_j| |ω_j|`.
//! Sparsification draws atoms i.i.d. proportionally to `|a_j| |ω_j|` and
//! replaces the combination by `N` unit-weight atoms with coefficients of
//! magnitude exactly `R̃ / N`, giving L²(P) error at most `R̃ √(r²+1) / √N`
//! on data of radius `r`.
//!
//! Stacking vector-valued atomic layers and sparsifying each one yields an
//! explicit deep ReLU network whose weight matrices factor as `A · B`
//! products of inner-weight and coefficient blocks, with Frobenius norms and
//! biases bounded by constants of the stack.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::substream;

/// Atom block size for batched evaluation; bounds the transient feature
/// matrix to `rows × EVAL_BLOCK` entries.
const EVAL_BLOCK: usize = 512;

/// One signed ReLU atom: coefficient and inner-weight vector in `R^{d+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub coeff: f64,
    pub omega: Array1<f64>,
}

/// Finite signed combination of ReLU atoms on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicFunction {
    input_dim: usize,
    atoms: Vec<Atom>,
}

impl AtomicFunction {
    /// Builds a function from atoms; every ω must have length `d + 1` and a
    /// nonzero norm.
    pub fn new(input_dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be >= 1".into()));
        }
        for (j, atom) in atoms.iter().enumerate() {
            if atom.omega.len() != input_dim + 1 {
                return Err(Error::ShapeMismatch(format!(
                    "atom {j}: omega has length {}, expected {}",
                    atom.omega.len(),
                    input_dim + 1
                )));
            }
            if atom.omega.dot(&atom.omega) == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "atom {j}: omega is the zero vector"
                )));
            }
            if !atom.coeff.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "atom {j}: coefficient is not finite"
                )));
            }
        }
        Ok(AtomicFunction { input_dim, atoms })
    }

    /// The identically-zero function (no atoms).
    pub fn zero(input_dim: usize) -> Self {
        AtomicFunction {
            input_dim,
            atoms: Vec::new(),
        }
    }

    /// Random function with unit-norm atoms scaled so the total mass equals
    /// `total_mass` up to rounding. Coefficients carry random signs.
    pub fn random(
        input_dim: usize,
        n_atoms: usize,
        total_mass: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_atoms == 0 || total_mass.is_nan() || total_mass <= 0.0 {
            return Err(Error::InvalidArgument(
                "random atomic function needs n_atoms >= 1 and total_mass > 0".into(),
            ));
        }
        let mut atoms = Vec::with_capacity(n_atoms);
        let mut mass = 0.0;
        for _ in 0..n_atoms {
            let mut omega = Array1::<f64>::zeros(input_dim + 1);
            loop {
                for v in omega.iter_mut() {
                    *v = rng.sample(rand_distr::StandardNormal);
                }
                let norm = omega.dot(&omega).sqrt();
                if norm > 0.0 {
                    omega.mapv_inplace(|v| v / norm);
                    break;
                }
            }
            let magnitude = rng.gen::<f64>() + 0.05;
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            mass += magnitude;
            atoms.push(Atom {
                coeff: sign * magnitude,
                omega,
            });
        }
        let scale = total_mass / mass;
        for atom in &mut atoms {
            atom.coeff *= scale;
        }
        AtomicFunction::new(input_dim, atoms)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Total variation mass `Σ_j |a_j| |ω_j|`; zero iff the atom list is
    /// empty or all coefficients vanish.
    pub fn total_mass(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.coeff.abs() * a.omega.dot(&a.omega).sqrt())
            .sum()
    }

    /// Same atoms with every coefficient multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                coeff: c * a.coeff,
                omega: a.omega.clone(),
            })
            .collect();
        AtomicFunction {
            input_dim: self.input_dim,
            atoms,
        }
    }

    /// `f(x) = Σ_j a_j ReLU(ω_j · (x, 1))`.
    pub fn evaluate(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "point has length {}, expected {}",
                x.len(),
                self.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "point has non-finite entries".into(),
            ));
        }
        let mut acc = 0.0;
        for atom in &self.atoms {
            let d = self.input_dim;
            let mut z = atom.omega[d];
            for (w, v) in atom.omega.iter().zip(x.iter()) {
                z += w * v;
            }
            acc += atom.coeff * z.max(0.0);
        }
        Ok(acc)
    }

    /// Evaluates on every row of `x`.
    pub fn evaluate_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "samples have {} columns, expected {}",
                x.ncols(),
                self.input_dim
            )));
        }
        let m = x.nrows();
        let mut out = Array1::<f64>::zeros(m);
        if self.atoms.is_empty() {
            return Ok(out);
        }
        let aug = augment_ones(x);
        for chunk in self.atoms.chunks(EVAL_BLOCK) {
            let mut w = Array2::<f64>::zeros((chunk.len(), self.input_dim + 1));
            let mut c = Array1::<f64>::zeros(chunk.len());
            for (i, atom) in chunk.iter().enumerate() {
                w.row_mut(i).assign(&atom.omega);
                c[i] = atom.coeff;
            }
            let phi = aug.dot(&w.t()).mapv_into(|v| v.max(0.0));
            out += &phi.dot(&c);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: AtomicFunction = serde_json::from_str(text)?;
        AtomicFunction::new(f.input_dim, f.atoms)
    }
}

fn augment_ones(x: ArrayView2<f64>) -> Array2<f64> {
    let (m, d) = x.dim();
    let mut aug = Array2::<f64>::ones((m, d + 1));
    aug.slice_mut(ndarray::s![.., ..d]).assign(&x);
    aug
}

/// Maurey error bound `R̃ √(r²+1) / √N`.
pub fn maurey_error_bound(mass: f64, radius: f64, n: usize) -> f64 {
    mass * (radius * radius + 1.0).sqrt() / (n as f64).sqrt()
}

/// Root-mean-square difference of `f` and `g` over the rows of `probes`.
pub fn l2_error(f: &AtomicFunction, g: &AtomicFunction, probes: ArrayView2<f64>) -> Result<f64> {
    let fv = f.evaluate_batch(probes)?;
    let gv = g.evaluate_batch(probes)?;
    let diff = &fv - &gv;
    Ok((diff.dot(&diff) / probes.nrows() as f64).sqrt())
}

/// Sampling weights and normalized atoms behind the sparsification draw.
struct SparsifySetup {
    mass: f64,
    signs: Vec<f64>,
    unit_omegas: Vec<Array1<f64>>,
    picker: WeightedIndex<f64>,
}

fn sparsify_setup(f: &AtomicFunction) -> Option<SparsifySetup> {
    // Atoms with zero coefficient carry no mass and are dropped before
    // sampling.
    let mut weights = Vec::new();
    let mut signs = Vec::new();
    let mut unit_omegas = Vec::new();
    for atom in &f.atoms {
        let norm = atom.omega.dot(&atom.omega).sqrt();
        let w = atom.coeff.abs() * norm;
        if w > 0.0 {
            weights.push(w);
            signs.push(atom.coeff.signum());
            unit_omegas.push(atom.omega.mapv(|v| v / norm));
        }
    }
    if weights.is_empty() {
        return None;
    }
    let mass = weights.iter().sum();
    let picker = WeightedIndex::new(&weights).ok()?;
    Some(SparsifySetup {
        mass,
        signs,
        unit_omegas,
        picker,
    })
}

fn materialize(f: &AtomicFunction, setup: &SparsifySetup, picks: &[usize]) -> AtomicFunction {
    let coeff_mag = setup.mass / picks.len() as f64;
    let atoms = picks
        .iter()
        .map(|&j| Atom {
            coeff: setup.signs[j] * coeff_mag,
            omega: setup.unit_omegas[j].clone(),
        })
        .collect();
    AtomicFunction {
        input_dim: f.input_dim,
        atoms,
    }
}

/// Maurey sparsification: replaces `f` by exactly `n` atoms with unit-norm
/// inner weights and coefficients of magnitude exactly `R̃ / n`, sampled
/// i.i.d. with probability proportional to `|a_j| |ω_j|`.
///
/// A zero-mass input yields the empty (identically zero) function, which is
/// detectable via [`AtomicFunction::is_zero`].
pub fn maurey_sparsify(f: &AtomicFunction, n: usize, rng: &mut impl Rng) -> Result<AtomicFunction> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let Some(setup) = sparsify_setup(f) else {
        return Ok(AtomicFunction::zero(f.input_dim));
    };
    let picks: Vec<usize> = (0..n).map(|_| setup.picker.sample(rng)).collect();
    Ok(materialize(f, &setup, &picks))
}

/// Best-of-`trials` sparsification: repeats the Maurey draw and keeps the
/// candidate with the smallest empirical L²(P) error over the probe rows.
///
/// Candidates reuse the feature values of the (finitely many) source atoms,
/// so each trial costs one matrix-vector product rather than a fresh
/// evaluation of all `n` sampled atoms.
pub fn best_sparsify(
    f: &AtomicFunction,
    n: usize,
    trials: usize,
    probes: ArrayView2<f64>,
    rng: &mut impl Rng,
) -> Result<AtomicFunction> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidArgument("n and trials must be >= 1".into()));
    }
    if probes.nrows() == 0 {
        return Err(Error::InvalidArgument("need at least one probe row".into()));
    }
    let Some(setup) = sparsify_setup(f) else {
        return Ok(AtomicFunction::zero(f.input_dim));
    };

    // Feature values of the normalized source atoms on the probes.
    let aug = augment_ones(probes);
    let n_src = setup.unit_omegas.len();
    let mut w = Array2::<f64>::zeros((n_src, f.input_dim + 1));
    for (i, omega) in setup.unit_omegas.iter().enumerate() {
        w.row_mut(i).assign(omega);
    }
    let phi = aug.dot(&w.t()).mapv_into(|v| v.max(0.0));
    let target = f.evaluate_batch(probes)?;

    let coeff_mag = setup.mass / n as f64;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut signed_counts = Array1::<f64>::zeros(n_src);
    for _ in 0..trials {
        signed_counts.fill(0.0);
        let picks: Vec<usize> = (0..n).map(|_| setup.picker.sample(rng)).collect();
        for &j in &picks {
            signed_counts[j] += setup.signs[j];
        }
        let approx = phi.dot(&signed_counts.mapv(|c| c * coeff_mag));
        let diff = &approx - &target;
        let err = (diff.dot(&diff) / probes.nrows() as f64).sqrt();
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, picks));
        }
    }
    let (_, picks) = best.expect("trials >= 1");
    Ok(materialize(f, &setup, &picks))
}

/// Vector-valued atomic function: a list of components sharing an input
/// dimension. The stack norm is `R² = Σ_i R̃_i²` over component masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorAtomic {
    components: Vec<AtomicFunction>,
}

impl VectorAtomic {
    pub fn new(components: Vec<AtomicFunction>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "vector function needs at least one component".into(),
            ));
        }
        let d = components[0].input_dim();
        if components.iter().any(|c| c.input_dim() != d) {
            return Err(Error::ShapeMismatch(
                "all components must share input_dim".into(),
            ));
        }
        Ok(VectorAtomic { components })
    }

    pub fn components(&self) -> &[AtomicFunction] {
        &self.components
    }

    pub fn input_dim(&self) -> usize {
        self.components[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    /// `√(Σ_i mass_i²)` over the component masses.
    pub fn norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let m = c.total_mass();
                m * m
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn component_masses(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.total_mass()).collect()
    }

    /// Evaluates on every row of `x`; one output column per component.
    pub fn evaluate_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::<f64>::zeros((x.nrows(), self.output_dim()));
        for (j, comp) in self.components.iter().enumerate() {
            out.column_mut(j).assign(&comp.evaluate_batch(x)?);
        }
        Ok(out)
    }
}

/// A sequence of vector-valued atomic layers together with the radius of the
/// sets they map between and the margin the composition tolerates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    layers: Vec<VectorAtomic>,
    radius: f64,
    margin: f64,
}

impl LayerStack {
    pub fn new(layers: Vec<VectorAtomic>, radius: f64, margin: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "stack needs at least one layer".into(),
            ));
        }
        if radius.is_nan() || radius <= 0.0 || margin.is_nan() || margin <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "radius and margin must be positive, got r={radius}, s={margin}"
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(LayerStack {
            layers,
            radius,
            margin,
        })
    }

    pub fn layers(&self) -> &[VectorAtomic] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Per-layer norms `R_1 .. R_L` derived from the component masses.
    pub fn norms(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.norm()).collect()
    }

    /// Input/output dimensions `m_1 .. m_{L+1}`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].input_dim()];
        dims.extend(self.layers.iter().map(|l| l.output_dim()));
        dims
    }

    /// Composition `f_L ∘ … ∘ f_1` evaluated on rows of `x`.
    pub fn compose(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut z = x.to_owned();
        for layer in &self.layers {
            z = layer.evaluate_batch(z.view())?;
        }
        Ok(z)
    }
}

/// Per-layer atom counts `N_i = Π_{j=i}^L R_j² ((r+s)² + 1) / ε²`, rounded
/// up, then raised where needed so `N_i >= N_{i+1} R_i²` — the inequality
/// the Frobenius bounds of the assembled matrices rest on, which plain
/// ceiling can break.
pub fn stack_node_counts(norms: &[f64], radius: f64, margin: f64, epsilon: f64) -> Vec<usize> {
    let c = (radius + margin).powi(2) + 1.0;
    let l = norms.len();
    let mut counts = vec![1usize; l];
    let mut suffix = c / (epsilon * epsilon);
    for i in (0..l).rev() {
        suffix *= norms[i] * norms[i];
        counts[i] = (suffix.ceil() as usize).max(1);
    }
    for i in (0..l.saturating_sub(1)).rev() {
        let floor = (counts[i + 1] as f64 * norms[i] * norms[i]).ceil() as usize;
        counts[i] = counts[i].max(floor).max(1);
    }
    counts
}

/// The constant `C` such that the composed approximation error is at most
/// `C ε`:
///
/// ```text
/// C = L + (r + √(r²+1) Π R_i) (1/s) √( Σ_{i=1}^{L-1} i² / Π_{j=i+1}^L R_j² )
/// ```
pub fn stack_error_constant(stack: &LayerStack) -> f64 {
    let norms = stack.norms();
    let l = norms.len();
    let r = stack.radius();
    let s = stack.margin();
    let prod: f64 = norms.iter().product();
    let mut sum = 0.0;
    for i in 1..l {
        let tail: f64 = norms[i..].iter().map(|v| v * v).product();
        sum += (i * i) as f64 / tail;
    }
    l as f64 + (r + (r * r + 1.0).sqrt() * prod) / s * sum.sqrt()
}

/// Explicit ReLU network assembled from sparsified stack layers.
///
/// `weights[0]` maps the input to the first hidden layer, `weights[i]` for
/// `1 <= i <= L-1` connects consecutive hidden layers, and `weights[L]` is
/// the linear output map. `biases[i]` belongs to hidden layer `i + 1`; the
/// output is bias-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledNet {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    node_counts: Vec<usize>,
    dims: Vec<usize>,
    radius: f64,
    margin: f64,
    layer_norms: Vec<f64>,
    epsilon: f64,
    rescale: f64,
}

/// Computed Frobenius norms and bias magnitudes next to their bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInvariantReport {
    /// `(actual Frobenius norm, bound)` per weight matrix, input to output.
    pub frobenius: Vec<(f64, f64)>,
    pub max_bias: f64,
    pub bias_bound: f64,
    pub ok: bool,
}

impl AssembledNet {
    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    /// Hidden nodes per layer: `m_{i+1} N_i`.
    pub fn node_counts(&self) -> &[usize] {
        &self.node_counts
    }

    pub fn depth(&self) -> usize {
        self.biases.len()
    }

    /// Forward pass on rows of `x`: ReLU hidden layers, linear output.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dims[0] {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, expected {}",
                x.ncols(),
                self.dims[0]
            )));
        }
        let mut h = x.to_owned();
        for (w, b) in self.weights[..self.depth()].iter().zip(&self.biases) {
            let mut z = h.dot(&w.t());
            for mut row in z.axis_iter_mut(Axis(0)) {
                row += b;
                row.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        Ok(h.dot(&self.weights[self.depth()].t()))
    }

    /// Checks the Frobenius/bias bounds of the construction.
    pub fn invariant_report(&self) -> NetInvariantReport {
        let l = self.depth();
        let c = (self.radius + self.margin).powi(2) + 1.0;
        let prod: f64 = self.layer_norms.iter().product();
        let mut frobenius = Vec::with_capacity(l + 1);
        for (i, w) in self.weights.iter().enumerate() {
            let actual = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            let bound = if i == 0 {
                prod * (self.dims[1] as f64 * c).sqrt()
            } else if i < l {
                (self.dims[i + 1] as f64).sqrt()
            } else {
                c.sqrt()
            };
            frobenius.push((actual, bound));
        }
        let max_bias = self
            .biases
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let slack = 1e-12;
        let ok = frobenius
            .iter()
            .all(|(actual, bound)| *actual <= bound * (1.0 + slack) + slack)
            && max_bias <= 1.0 + slack;
        NetInvariantReport {
            frobenius,
            max_bias,
            bias_bound: 1.0,
            ok,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Knobs for [`approximate_stack`].
#[derive(Debug, Clone)]
pub struct StackApproxParams {
    pub epsilon: f64,
    /// Hard cap on `m_{i+1} N_i`, the node count of any single layer.
    pub node_budget: usize,
    /// Sparsification candidates per component (best one kept).
    pub trials: usize,
    /// Monte-Carlo sample count for the probe measure.
    pub probe_count: usize,
    pub seed: u64,
}

impl StackApproxParams {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        StackApproxParams {
            epsilon,
            node_budget: 4_000_000,
            trials: 20,
            probe_count: 10_000,
            seed,
        }
    }
}

/// The sparsified layers plus the assembled network.
#[derive(Debug, Clone)]
pub struct StackApproximation {
    pub net: AssembledNet,
    pub sparsified: Vec<VectorAtomic>,
    pub atoms_per_component: Vec<usize>,
}

/// Sparsifies every layer of the stack with per-layer atom counts driven by
/// `ε`, then assembles the explicit weight matrices.
///
/// Layer `i` is matched against the pushforward of the probe measure under
/// the approximate layers already chosen, taking the best of `params.trials`
/// draws per component. The first-layer weights and all biases are rescaled
/// by `min(ε, 1)` and the output by its inverse, which leaves the network
/// function unchanged by homogeneity of ReLU.
pub fn approximate_stack(
    stack: &LayerStack,
    params: &StackApproxParams,
) -> Result<StackApproximation> {
    if params.epsilon.is_nan() || params.epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {}",
            params.epsilon
        )));
    }
    let norms = stack.norms();
    let dims = stack.dims();
    let depth = stack.depth();
    let counts = stack_node_counts(&norms, stack.radius(), stack.margin(), params.epsilon);
    for (i, &n_i) in counts.iter().enumerate() {
        let nodes = dims[i + 1] * n_i;
        if nodes > params.node_budget {
            return Err(Error::BudgetExceeded {
                layer: i + 1,
                required: nodes,
                budget: params.node_budget,
            });
        }
    }

    let probes = crate::features::sample_ball(
        dims[0],
        params.probe_count,
        stack.radius(),
        params.seed ^ 0x9e37_79b9_7f4a_7c15,
    )?;

    // Sparsify layer by layer, tracking the pushforward of the probes under
    // the layers chosen so far.
    let mut sparsified: Vec<VectorAtomic> = Vec::with_capacity(depth);
    let mut z = probes;
    for (i, layer) in stack.layers().iter().enumerate() {
        let mut comps = Vec::with_capacity(layer.output_dim());
        for (j, comp) in layer.components().iter().enumerate() {
            let mut rng = substream(params.seed, ((i as u64) << 32) | j as u64);
            let g = best_sparsify(comp, counts[i], params.trials, z.view(), &mut rng)?;
            comps.push(pad_to_count(g, comp.input_dim(), counts[i]));
        }
        let approx_layer = VectorAtomic::new(comps)?;
        z = approx_layer.evaluate_batch(z.view())?;
        sparsified.push(approx_layer);
    }

    // Assemble A (inner weights, biases) and B (coefficients) blocks.
    let mut a_mats = Vec::with_capacity(depth);
    let mut raw_biases = Vec::with_capacity(depth);
    let mut b_mats = Vec::with_capacity(depth);
    for (i, layer) in sparsified.iter().enumerate() {
        let m_in = dims[i];
        let m_out = dims[i + 1];
        let n_i = counts[i];
        let rows = m_out * n_i;
        let mut a = Array2::<f64>::zeros((rows, m_in));
        let mut bias = Array1::<f64>::zeros(rows);
        let mut b = Array2::<f64>::zeros((m_out, rows));
        for (j, comp) in layer.components().iter().enumerate() {
            for (k, atom) in comp.atoms().iter().enumerate() {
                let row = j * n_i + k;
                a.row_mut(row)
                    .assign(&atom.omega.slice(ndarray::s![..m_in]));
                bias[row] = atom.omega[m_in];
                b[[j, row]] = atom.coeff;
            }
        }
        a_mats.push(a);
        raw_biases.push(bias);
        b_mats.push(b);
    }

    let mut weights = Vec::with_capacity(depth + 1);
    weights.push(a_mats[0].clone());
    for i in 1..depth {
        weights.push(a_mats[i].dot(&b_mats[i - 1]));
    }
    weights.push(b_mats[depth - 1].clone());

    // Homogeneity rescale: first layer and biases shrink by t, output grows
    // by 1/t. Shrink t further if the first-layer Frobenius bound needs it
    // (integer atom counts can sit slightly above the real-valued ones).
    let mut t = params.epsilon.min(1.0);
    let c = (stack.radius() + stack.margin()).powi(2) + 1.0;
    let limit01: f64 = norms.iter().product::<f64>() * (dims[1] as f64 * c).sqrt();
    let a1_norm = weights[0].iter().map(|v| v * v).sum::<f64>().sqrt();
    if limit01 > 0.0 && a1_norm * t > limit01 {
        t = limit01 / a1_norm;
    }
    weights[0].mapv_inplace(|v| v * t);
    let biases: Vec<Array1<f64>> = raw_biases.into_iter().map(|b| b.mapv(|v| v * t)).collect();
    weights[depth].mapv_inplace(|v| v / t);

    let node_counts: Vec<usize> = (0..depth).map(|i| dims[i + 1] * counts[i]).collect();
    let net = AssembledNet {
        weights,
        biases,
        node_counts,
        dims,
        radius: stack.radius(),
        margin: stack.margin(),
        layer_norms: norms,
        epsilon: params.epsilon,
        rescale: t,
    };
    Ok(StackApproximation {
        net,
        sparsified,
        atoms_per_component: counts,
    })
}

/// Pads a sparsified component up to exactly `n` atoms with zero-coefficient
/// placeholder atoms, so zero-mass components keep the block structure.
fn pad_to_count(g: AtomicFunction, input_dim: usize, n: usize) -> AtomicFunction {
    if g.atoms().len() == n {
        return g;
    }
    let mut atoms = g.atoms().to_vec();
    let mut placeholder = Array1::<f64>::zeros(input_dim + 1);
    placeholder[input_dim] = 1.0;
    while atoms.len() < n {
        atoms.push(Atom {
            coeff: 0.0,
            omega: placeholder.clone(),
        });
    }
    AtomicFunction { input_dim, atoms }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::sample_ball;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bias_atom(d: usize, coeff: f64) -> Atom {
        let mut omega = Array1::<f64>::zeros(d + 1);
        omega[d] = 1.0;
        Atom { coeff, omega }
    }

    #[test]
    fn single_bias_atom_is_constant_one() {
        let f = AtomicFunction::new(3, vec![bias_atom(3, 1.0)]).unwrap();
        let x = array![0.4, -0.7, 0.1];
        assert_eq!(f.evaluate(x.view()).unwrap(), 1.0);
    }

    #[test]
    fn scaling_negates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = AtomicFunction::random(3, 10, 4.0, &mut rng).unwrap();
        let g = f.scaled(-1.0);
        let pts = sample_ball(3, 20, 1.0, 2).unwrap();
        let fv = f.evaluate_batch(pts.view()).unwrap();
        let gv = g.evaluate_batch(pts.view()).unwrap();
        for (a, b) in fv.iter().zip(gv.iter()) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn opposite_atoms_cancel_but_mass_adds() {
        let mut omega = Array1::<f64>::zeros(3);
        omega[0] = 1.0;
        let f = AtomicFunction::new(
            2,
            vec![
                Atom {
                    coeff: 1.0,
                    omega: omega.clone(),
                },
                Atom { coeff: -1.0, omega },
            ],
        )
        .unwrap();
        let pts = sample_ball(2, 30, 2.0, 3).unwrap();
        let v = f.evaluate_batch(pts.view()).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-15));
        // Total variation counts both atoms.
        assert!((f.total_mass() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn total_mass_weights_by_omega_norm() {
        let f = AtomicFunction::new(2, vec![bias_atom(2, 2.0)]).unwrap();
        assert!((f.total_mass() - 2.0).abs() < 1e-15);
        let mut omega = Array1::<f64>::zeros(3);
        omega[1] = 3.0;
        let g = AtomicFunction::new(2, vec![Atom { coeff: 1.0, omega }]).unwrap();
        assert!((g.total_mass() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_zero_omega() {
        let omega = Array1::<f64>::zeros(3);
        assert!(AtomicFunction::new(2, vec![Atom { coeff: 1.0, omega }]).is_err());
    }

    #[test]
    fn sparsify_single_atom_reproduces_function() {
        let omega = array![0.6, -0.8, 0.0];
        let f = AtomicFunction::new(2, vec![Atom { coeff: 1.0, omega }]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = maurey_sparsify(&f, 7, &mut rng).unwrap();
        assert_eq!(g.atoms().len(), 7);
        for atom in g.atoms() {
            assert!((atom.coeff - 1.0 / 7.0).abs() < 1e-15);
        }
        let pts = sample_ball(2, 50, 1.0, 4).unwrap();
        let err = l2_error(&f, &g, pts.view()).unwrap();
        assert!(err < 1e-12, "err {err}");
    }

    #[test]
    fn sparsify_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = AtomicFunction::random(3, 40, 6.0, &mut rng).unwrap();
        let g1 = maurey_sparsify(&f, 64, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let g2 = maurey_sparsify(&f, 64, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn sparsify_zero_mass_flags_empty() {
        let f = AtomicFunction::new(2, vec![bias_atom(2, 0.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = maurey_sparsify(&f, 5, &mut rng).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn sparsify_coefficient_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = AtomicFunction::random(3, 25, 10.0, &mut rng).unwrap();
        let mass = f.total_mass();
        let g = maurey_sparsify(&f, 50, &mut rng).unwrap();
        assert_eq!(g.atoms().len(), 50);
        for atom in g.atoms() {
            assert_eq!(atom.coeff.abs(), mass / 50.0);
            let norm = atom.omega.dot(&atom.omega).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn error_bound_values() {
        assert_eq!(maurey_error_bound(1.0, 0.0, 1), 1.0);
        assert!((maurey_error_bound(10.0, 1.0, 400) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let e1 = maurey_error_bound(3.0, 2.0, 100);
        let e2 = maurey_error_bound(3.0, 2.0, 400);
        assert!((e1 / e2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn best_of_k_meets_maurey_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = AtomicFunction::random(3, 60, 10.0, &mut rng).unwrap();
        let probes = sample_ball(3, 10_000, 1.0, 13).unwrap();
        let n = 400;
        let g = best_sparsify(&f, n, 20, probes.view(), &mut rng).unwrap();
        let err = l2_error(&f, &g, probes.view()).unwrap();
        let bound = maurey_error_bound(f.total_mass(), 1.0, n);
        assert!(err <= 1.2 * bound, "err {err} vs bound {bound}");
    }

    #[test]
    fn stack_node_count_formula() {
        // Single layer, R = 2, r = 1, s = 0, ε = 0.5: N = 4·2/0.25 = 32.
        let counts = stack_node_counts(&[2.0], 1.0, 0.0, 0.5);
        assert_eq!(counts, vec![32]);
        // Two layers keep N_1 >= N_2 R_1².
        let counts = stack_node_counts(&[2.0, 3.0], 1.0, 1.0, 0.5);
        assert!(counts[0] >= counts[1] * 4);
    }

    /// A vector layer with the given in/out dims whose norm is exactly
    /// `mass` per component.
    fn layer_of_mass(input_dim: usize, output_dim: usize, mass: f64, seed: u64) -> VectorAtomic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps = (0..output_dim)
            .map(|_| {
                let f = AtomicFunction::random(input_dim, 12, mass, &mut rng).unwrap();
                f.scaled(mass / f.total_mass())
            })
            .collect();
        VectorAtomic::new(comps).unwrap()
    }

    #[test]
    fn error_constant_values() {
        let one = layer_of_mass(2, 1, 2.0, 1);
        let stack = LayerStack::new(vec![one], 1.0, 1.0).unwrap();
        assert!((stack_error_constant(&stack) - 1.0).abs() < 1e-9);

        let l1 = layer_of_mass(2, 1, 2.0, 2);
        let l2 = layer_of_mass(1, 1, 2.0, 3);
        let stack = LayerStack::new(vec![l1.clone(), l2.clone()], 1.0, 1.0).unwrap();
        let expected = 2.0 + (1.0 + std::f64::consts::SQRT_2 * 4.0) * 0.5;
        assert!((stack_error_constant(&stack) - expected).abs() < 1e-9);
        assert!((expected - 5.328).abs() < 1e-3);

        // Shrinking the margin raises the constant.
        let tight = LayerStack::new(vec![l1, l2], 1.0, 0.25).unwrap();
        assert!(stack_error_constant(&tight) > stack_error_constant(&stack));
    }

    #[test]
    fn assembled_net_matches_layer_composition() {
        let l1 = layer_of_mass(2, 2, 1.5, 21);
        let l2 = layer_of_mass(2, 1, 1.2, 22);
        let stack = LayerStack::new(vec![l1, l2], 1.0, 1.0).unwrap();
        let mut params = StackApproxParams::new(0.5, 77);
        params.probe_count = 500;
        let approx = approximate_stack(&stack, &params).unwrap();

        let pts = sample_ball(2, 100, 1.0, 5).unwrap();
        let via_net = approx.net.forward(pts.view()).unwrap();
        let mut via_layers = pts.clone();
        for layer in &approx.sparsified {
            via_layers = layer.evaluate_batch(via_layers.view()).unwrap();
        }
        for (a, b) in via_net.iter().zip(via_layers.iter()) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }

        let report = approx.net.invariant_report();
        assert!(report.ok, "{report:?}");
        assert!(report.max_bias <= 1.0);

        // Node counts follow the formula.
        let counts = stack_node_counts(&stack.norms(), 1.0, 1.0, 0.5);
        assert_eq!(approx.atoms_per_component, counts);
        assert_eq!(approx.net.node_counts()[0], 2 * counts[0]);
    }

    #[test]
    fn budget_error_reports_requirement() {
        let l1 = layer_of_mass(2, 2, 2.0, 31);
        let stack = LayerStack::new(vec![l1], 1.0, 1.0).unwrap();
        let mut params = StackApproxParams::new(1e-3, 0);
        params.node_budget = 100;
        match approximate_stack(&stack, &params) {
            Err(Error::BudgetExceeded {
                required, budget, ..
            }) => {
                assert!(required > budget);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn atomic_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = AtomicFunction::random(4, 8, 2.5, &mut rng).unwrap();
        let g = AtomicFunction::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, g);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn atomic_functions_are_mass_lipschitz(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = AtomicFunction::random(3, 20, 5.0, &mut rng).unwrap();
            let mass = f.total_mass();
            let pts = sample_ball(3, 16, 2.0, seed ^ 0x55).unwrap();
            for i in 0..pts.nrows() {
                for j in (i + 1)..pts.nrows() {
                    let fx = f.evaluate(pts.row(i)).unwrap();
                    let fy = f.evaluate(pts.row(j)).unwrap();
                    let diff = &pts.row(i) - &pts.row(j);
                    let dist = diff.dot(&diff).sqrt();
                    prop_assert!((fx - fy).abs() <= mass * dist + 1e-9);
                }
            }
        }
    }
}
