//! Dense 2/3-layer ReLU networks with hand-rolled backprop and Adam, the
//! trainable baselines the random-feature models are compared against.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::substream;
use crate::learn::{loss_and_grad, output_dim, LossKind, Optimizer, TrainConfig};

/// Per-layer `(weight, bias)` gradients.
pub type LayerGradients = Vec<(Array2<f64>, Array1<f64>)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Row-major `(out, in)` weights.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Fully connected ReLU network: every layer but the last applies ReLU, the
/// last is linear. Depth counts weight layers, so a 2-layer net has one
/// hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
}

impl DenseNet {
    /// Network with the given hidden widths, Glorot-uniform initialized:
    /// each layer draws from `±√(6 / (fan_in + fan_out))`.
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument(
                "input and output dims must be >= 1".into(),
            ));
        }
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "hidden widths must be nonempty and positive".into(),
            ));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (l, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = substream(seed, l as u64);
            let mut weight = Array2::<f64>::zeros((fan_out, fan_in));
            for v in weight.iter_mut() {
                *v = (rng.gen::<f64>() * 2.0 - 1.0) * bound;
            }
            layers.push(DenseLayer {
                weight,
                bias: Array1::zeros(fan_out),
            });
        }
        Ok(DenseNet { layers })
    }

    /// 2-layer net: one ReLU hidden layer of the given width.
    pub fn two_layer(input_dim: usize, width: usize, output_dim: usize, seed: u64) -> Result<Self> {
        DenseNet::new(input_dim, &[width], output_dim, seed)
    }

    /// 3-layer net: two equal-width ReLU hidden layers.
    pub fn three_layer(
        input_dim: usize,
        width: usize,
        output_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        DenseNet::new(input_dim, &[width, width], output_dim, seed)
    }

    /// Builds a network from explicit layers (hidden ReLU, last linear).
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("need at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].weight.ncols() != pair[0].weight.nrows() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].weight.nrows(),
                    i + 1,
                    pair[1].weight.ncols()
                )));
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.weight.nrows() {
                return Err(Error::ShapeMismatch("bias length != weight rows".into()));
            }
        }
        Ok(DenseNet { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// ReLU hidden layers, linear output, on rows of `x`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.pop().expect("nonempty"))
    }

    /// Activations after every layer (post-ReLU for hidden, raw for output).
    fn forward_cached(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, expected {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight.t());
            for mut row in z.axis_iter_mut(Axis(0)) {
                row += &layer.bias;
            }
            if l != last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z.clone());
            h = z;
        }
        Ok(acts)
    }

    /// Mean loss and parameter gradients on a batch.
    ///
    /// ReLU backprop masks on the cached activations, using subgradient 0 at
    /// the kink.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<f64>,
        labels: &[f64],
        loss: LossKind,
    ) -> Result<(f64, LayerGradients)> {
        let b = x.nrows();
        if labels.len() != b {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} rows",
                labels.len(),
                b
            )));
        }
        let acts = self.forward_cached(x)?;
        let preds = acts.last().expect("nonempty");
        let mut total = 0.0;
        let mut delta = Array2::<f64>::zeros(preds.raw_dim());
        for ((pred, label), mut out) in preds
            .rows()
            .into_iter()
            .zip(labels)
            .zip(delta.rows_mut())
        {
            let (l, g) = loss_and_grad(loss, pred, *label)?;
            total += l;
            out.assign(&g);
        }
        total /= b as f64;
        delta.mapv_inplace(|v| v / b as f64);

        let mut grads = vec![(Array2::zeros((0, 0)), Array1::zeros(0)); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            let input: ArrayView2<f64> = if l == 0 { x } else { acts[l - 1].view() };
            let dw = delta.t().dot(&input);
            let db = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weight);
                // Mask by the hidden activation: zero where ReLU was flat.
                for (bv, av) in back.iter_mut().zip(acts[l - 1].iter()) {
                    if *av <= 0.0 {
                        *bv = 0.0;
                    }
                }
                delta = back;
            }
            grads[l] = (dw, db);
        }
        Ok((total, grads))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: DenseNet = serde_json::from_str(text)?;
        DenseNet::from_layers(net.layers)
    }
}

/// Forward pass helper mirroring the naming of the training entry points.
pub fn dense_forward(net: &DenseNet, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    net.forward(x)
}

/// Adam moment state per layer.
struct AdamState {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    t: u64,
}

impl AdamState {
    fn new(net: &DenseNet) -> Self {
        let m = net
            .layers
            .iter()
            .map(|l| {
                (
                    Array2::zeros(l.weight.raw_dim()),
                    Array1::zeros(l.bias.raw_dim()),
                )
            })
            .collect::<Vec<_>>();
        let v = net
            .layers
            .iter()
            .map(|l| {
                (
                    Array2::zeros(l.weight.raw_dim()),
                    Array1::zeros(l.bias.raw_dim()),
                )
            })
            .collect();
        AdamState { m, v, t: 0 }
    }

    fn step(&mut self, net: &mut DenseNet, grads: &LayerGradients, lr: f64) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[l];
            let (mw, mb) = &mut self.m[l];
            let (vw, vb) = &mut self.v[l];
            azip(mw, gw, |m, g| *m = BETA1 * *m + (1.0 - BETA1) * g);
            azip(vw, gw, |v, g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
            for ((w, m), v) in layer.weight.iter_mut().zip(mw.iter()).zip(vw.iter()) {
                *w -= lr * (m / bc1) / ((v / bc2).sqrt() + EPS);
            }
            for (m, g) in mb.iter_mut().zip(gb.iter()) {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
            }
            for (v, g) in vb.iter_mut().zip(gb.iter()) {
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            }
            for ((b, m), v) in layer.bias.iter_mut().zip(mb.iter()).zip(vb.iter()) {
                *b -= lr * (m / bc1) / ((v / bc2).sqrt() + EPS);
            }
        }
    }
}

fn azip(a: &mut Array2<f64>, b: &Array2<f64>, f: impl Fn(&mut f64, f64)) {
    for (x, y) in a.iter_mut().zip(b.iter()) {
        f(x, *y);
    }
}

/// Trained network plus the per-epoch loss trace.
#[derive(Debug, Clone)]
pub struct DenseTraining {
    pub net: DenseNet,
    pub loss_trace: Vec<f64>,
}

/// Minibatch Adam training with standard backprop.
///
/// `rows` restricts training to a subset of the dataset (all rows when
/// `None`).
pub fn dense_train(
    net: DenseNet,
    dataset: &Dataset,
    loss: LossKind,
    cfg: &TrainConfig,
    rows: Option<&[usize]>,
) -> Result<DenseTraining> {
    cfg.validate()?;
    if cfg.optimizer != Optimizer::Adam {
        return Err(Error::InvalidArgument(
            "dense_train requires the adam optimizer".into(),
        ));
    }
    let k = output_dim(loss, dataset.task());
    if net.output_dim() != k {
        return Err(Error::ShapeMismatch(format!(
            "network has {} outputs but the loss/task needs {}",
            net.output_dim(),
            k
        )));
    }
    let mut net = net;
    let mut adam = AdamState::new(&net);
    let mut indices: Vec<usize> = match rows {
        Some(r) => r.to_vec(),
        None => (0..dataset.len()).collect(),
    };
    if indices.is_empty() {
        return Err(Error::InvalidArgument("training subset is empty".into()));
    }
    let x = dataset.x();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
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
            let mut xb = Array2::<f64>::zeros((b, x.ncols()));
            let mut labels = Vec::with_capacity(b);
            for (row, &i) in batch.iter().enumerate() {
                xb.row_mut(row).assign(&x.row(i));
                labels.push(super::loss_label_for(loss, dataset, i));
            }
            let (batch_loss, grads) = net.loss_and_gradients(xb.view(), &labels, loss)?;
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    step,
                    message: format!("loss became {batch_loss}"),
                });
            }
            adam.step(&mut net, &grads, lr);
            if net
                .layers
                .iter()
                .any(|l| l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
            {
                return Err(Error::Training {
                    step,
                    message: "weights became non-finite".into(),
                });
            }
            epoch_loss += batch_loss * b as f64;
            seen += b;
        }
        loss_trace.push(epoch_loss / seen as f64);
        lr *= cfg.lr_decay;
    }
    Ok(DenseTraining { net, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Task};
    use crate::features::{relu_features, FeatureBank, FeatureKind, FeatureSpec, WeightDistribution};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_dataset(m: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::<f64>::zeros((m, 1));
        let mut y = Array1::<f64>::zeros(m);
        for i in 0..m {
            let v = rng.gen::<f64>() * 2.0 - 1.0;
            x[[i, 0]] = v;
            y[i] = 2.0 * v;
        }
        Dataset::new("line", x, y, Task::Regression).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = DenseNet::from_layers(vec![
            DenseLayer {
                weight: Array2::zeros((4, 3)),
                bias: Array1::zeros(4),
            },
            DenseLayer {
                weight: Array2::zeros((1, 4)),
                bias: Array1::zeros(1),
            },
        ])
        .unwrap();
        let x = array![[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]];
        let out = net.forward(x.view()).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_path_reproduces_relu() {
        let net = DenseNet::from_layers(vec![
            DenseLayer {
                weight: array![[1.0, 0.0]],
                bias: array![0.0],
            },
            DenseLayer {
                weight: array![[1.0]],
                bias: array![0.0],
            },
        ])
        .unwrap();
        let x = array![[0.7, 9.0], [-0.3, 5.0]];
        let out = net.forward(x.view()).unwrap();
        assert_eq!(out[[0, 0]], 0.7);
        assert_eq!(out[[1, 0]], 0.0);
    }

    #[test]
    fn two_layer_matches_random_feature_forward() {
        // Copying a ReLU bank into the hidden layer and the outer weights
        // into the output layer reproduces the random-feature model.
        let spec = FeatureSpec {
            kind: FeatureKind::Relu,
            input_dim: 3,
            count: 8,
            bandwidth: 0.5,
            distribution: WeightDistribution::UniformSphere,
            seed: 4,
        };
        let bank = FeatureBank::from_spec(spec).unwrap();
        let d = 3;
        let hidden_w = bank.omegas().slice(ndarray::s![.., ..d]).to_owned();
        // Bias is the last ω coordinate scaled by 1/γ = 2.
        let hidden_b = bank.omegas().slice(ndarray::s![.., d]).mapv(|v| v * 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let outer: Array1<f64> = (0..8).map(|_| rng.gen::<f64>() - 0.5).collect();
        let net = DenseNet::from_layers(vec![
            DenseLayer {
                weight: hidden_w,
                bias: hidden_b,
            },
            DenseLayer {
                weight: outer.clone().insert_axis(Axis(0)),
                bias: array![0.0],
            },
        ])
        .unwrap();
        let x = crate::features::sample_ball(3, 16, 1.0, 9).unwrap();
        let via_net = net.forward(x.view()).unwrap();
        let phi = relu_features(x.view(), &bank).unwrap();
        let via_features = phi.values().dot(&outer);
        for (a, b) in via_net.iter().zip(via_features.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let x = crate::features::sample_ball(3, 8, 1.0, 3).unwrap();
        for (loss, labels, out_dim) in [
            (LossKind::Squared, vec![0.3; 8], 1),
            (LossKind::Hinge, vec![1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0], 1),
            (LossKind::LogisticMulticlass, vec![0.0, 1.0, 2.0, 0.0, 2.0, 1.0, 1.0, 0.0], 3),
        ] {
            for depth3 in [false, true] {
                let net = if depth3 {
                    DenseNet::three_layer(3, 6, out_dim, 11).unwrap()
                } else {
                    DenseNet::two_layer(3, 6, out_dim, 11).unwrap()
                };
                let (_, grads) = net.loss_and_gradients(x.view(), &labels, loss).unwrap();
                let h = 1e-6;
                let mut rng = ChaCha8Rng::seed_from_u64(7);
                for _ in 0..20 {
                    let l = rng.gen_range(0..net.depth());
                    let r = rng.gen_range(0..net.layers()[l].weight.nrows());
                    let c = rng.gen_range(0..net.layers()[l].weight.ncols());
                    let mut plus = net.clone();
                    plus.layers[l].weight[[r, c]] += h;
                    let mut minus = net.clone();
                    minus.layers[l].weight[[r, c]] -= h;
                    let (lp, _) = plus.loss_and_gradients(x.view(), &labels, loss).unwrap();
                    let (lm, _) = minus.loss_and_gradients(x.view(), &labels, loss).unwrap();
                    let fd = (lp - lm) / (2.0 * h);
                    let g = grads[l].0[[r, c]];
                    let rel = (g - fd).abs() / (g.abs() + fd.abs() + 1e-8);
                    assert!(rel <= 1e-5, "loss {loss:?} depth3={depth3}: {g} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn line_regression_reaches_linear_fit() {
        let data = line_dataset(256, 5);
        let net = DenseNet::two_layer(1, 8, 1, 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            lr_decay: 1.0,
            batch: 32,
            epochs: 200,
            seed: 3,
            optimizer: Optimizer::Adam,
        };
        let trained = dense_train(net, &data, LossKind::Squared, &cfg, None).unwrap();
        let preds = trained.net.forward(data.x()).unwrap();
        let mse = preds
            .column(0)
            .iter()
            .zip(data.y().iter())
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / data.len() as f64;
        // Oracle: the closed-form linear fit y = 2x has zero error, so the
        // net must get essentially all the way there.
        assert!(mse <= 1e-3, "mse {mse}");
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let data = line_dataset(64, 8);
        let net = DenseNet::two_layer(1, 4, 1, 21).unwrap();
        let before = net.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            lr_decay: 1.0,
            batch: 16,
            epochs: 3,
            seed: 0,
            optimizer: Optimizer::Adam,
        };
        let trained = dense_train(net, &data, LossKind::Squared, &cfg, None).unwrap();
        assert_eq!(trained.net, before);
    }

    #[test]
    fn dense_train_rejects_projected_sgd() {
        let data = line_dataset(32, 1);
        let net = DenseNet::two_layer(1, 4, 1, 0).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            lr_decay: 1.0,
            batch: 8,
            epochs: 1,
            seed: 0,
            optimizer: Optimizer::SgdProjected { radius: 1.0 },
        };
        assert!(dense_train(net, &data, LossKind::Squared, &cfg, None).is_err());
    }
}
