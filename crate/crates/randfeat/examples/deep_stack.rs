//! Approximating a composition of vector-valued ReLU-atom layers by an
//! explicit deep network with bounded weight matrices.
//!
//! ```bash
//! cargo run --release -p randfeat --example deep_stack
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use randfeat::atoms::{
    approximate_stack, stack_error_constant, stack_node_counts, AtomicFunction, LayerStack,
    StackApproxParams, VectorAtomic,
};
use randfeat::features::sample_ball;

fn main() -> randfeat::Result<()> {
    // A 2-layer stack mapping R^4 -> R^3 -> R, with each layer rescaled so
    // it maps the (margin-padded) unit ball into the unit ball.
    let (radius, margin) = (1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut layers = Vec::new();
    for (m_in, m_out) in [(4usize, 3usize), (3, 1)] {
        let raw = VectorAtomic::new(
            (0..m_out)
                .map(|_| AtomicFunction::random(m_in, 10, 1.5, &mut rng).unwrap())
                .collect(),
        )?;
        let domain = sample_ball(m_in, 2000, radius + margin, m_in as u64)?;
        let out = raw.evaluate_batch(domain.view())?;
        let max_norm = out
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0f64, f64::max);
        let scale = radius / max_norm;
        layers.push(VectorAtomic::new(
            raw.components().iter().map(|c| c.scaled(scale)).collect(),
        )?);
    }
    let stack = LayerStack::new(layers, radius, margin)?;
    println!("stack dims {:?}, layer norms {:?}", stack.dims(), stack.norms());
    let constant = stack_error_constant(&stack);
    println!("error constant C = {constant:.3}");

    println!();
    println!(
        "{:>6}  {:>14}  {:>12}  {:>12}  {:>9}",
        "eps", "atoms/layer", "measured", "C * eps", "max bias"
    );
    for epsilon in [1.0, 0.5, 0.25] {
        let counts = stack_node_counts(&stack.norms(), radius, margin, epsilon);
        let params = StackApproxParams::new(epsilon, 77);
        let approx = approximate_stack(&stack, &params)?;

        let eval = sample_ball(4, 10_000, radius, 99)?;
        let truth = stack.compose(eval.view())?;
        let via_net = approx.net.forward(eval.view())?;
        let diff = &truth - &via_net;
        let err = (diff.iter().map(|v| v * v).sum::<f64>() / eval.nrows() as f64).sqrt();
        let report = approx.net.invariant_report();
        assert!(report.ok, "weight-bound invariants must hold");
        println!(
            "{epsilon:>6}  {counts:>14?}  {err:>12.4}  {:>12.4}  {:>9.3}",
            constant * epsilon,
            report.max_bias
        );
    }

    println!();
    println!("per-matrix Frobenius norms vs their bounds at eps = 0.25:");
    let approx = approximate_stack(&stack, &StackApproxParams::new(0.25, 77))?;
    for (i, (actual, bound)) in approx.net.invariant_report().frobenius.iter().enumerate() {
        println!("  W{i}: {actual:.3} <= {bound:.3}");
    }
    Ok(())
}
