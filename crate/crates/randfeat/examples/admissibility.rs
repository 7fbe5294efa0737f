//! Empirical admissibility (leverage) score of ReLU features against a
//! sampled dataset: how the score decays with the regularization level and
//! stays below the bounded-feature cap κ²/λ.
//!
//! ```bash
//! cargo run --release -p randfeat --example admissibility
//! ```

use ndarray::Axis;
use randfeat::features::sample_sphere;
use randfeat::kernels::{empirical_dmax, ArcCosKernel};

fn main() -> randfeat::Result<()> {
    let d = 3;
    let m = 80;
    let data = sample_sphere(d, m, 5)?;
    let kernel = ArcCosKernel::new(d)?;
    let gram = kernel.gram(data.view())?;

    // Probe features ReLU(ω · x) for random directions ω.
    let probes = sample_sphere(d, 64, 11)?;
    let feats = probes.dot(&data.t()).mapv(|v| v.max(0.0));
    let kappa = feats
        .axis_iter(Axis(0))
        .flat_map(|r| r.into_iter().copied().collect::<Vec<_>>())
        .fold(0.0f64, |a, v| a.max(v.abs()));

    println!("m = {m} points on S^{d}, {} probe features", feats.nrows());
    println!("{:>10}  {:>12}  {:>12}", "lambda", "dmax", "kappa^2/lambda");
    for lambda in [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0] {
        let report = empirical_dmax(gram.view(), feats.view(), lambda)?;
        println!(
            "{lambda:>10.0e}  {:>12.4}  {:>12.4}{}",
            report.dmax,
            kappa * kappa / lambda,
            if report.jitter_applied { "  (jitter)" } else { "" }
        );
    }
    Ok(())
}
