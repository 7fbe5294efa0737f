//! Monte-Carlo estimates of the arc-cosine kernel converge to its closed
//! form as the feature count grows.
//!
//! ```bash
//! cargo run --release -p randfeat --example kernel_convergence
//! ```

use randfeat::features::{sample_sphere, FeatureBank, FeatureKind, FeatureSpec, WeightDistribution};
use randfeat::kernels::{arccos_kernel, mc_kernel_estimate};

fn main() -> randfeat::Result<()> {
    let d = 4;
    let pairs = 100;
    let pts = sample_sphere(d, 2 * pairs, 7)?;

    println!("arc-cosine kernel on S^{d}, {pairs} random pairs");
    println!("{:>8}  {:>12}  {:>12}", "features", "max |err|", "rms err");
    for n in [100usize, 1_000, 10_000, 100_000] {
        let bank = FeatureBank::from_spec(FeatureSpec {
            kind: FeatureKind::Relu,
            input_dim: d,
            count: n,
            bandwidth: 1.0,
            distribution: WeightDistribution::UniformSphere,
            seed: 42,
        })?;
        let mut max_err = 0.0f64;
        let mut sq = 0.0;
        for i in 0..pairs {
            let a = pts.row(2 * i);
            let b = pts.row(2 * i + 1);
            let est = mc_kernel_estimate(a, b, &bank)?;
            let exact = arccos_kernel(a.dot(&b), d)?;
            let err = (est - exact).abs();
            max_err = max_err.max(err);
            sq += err * err;
        }
        println!(
            "{n:>8}  {max_err:>12.3e}  {:>12.3e}",
            (sq / pairs as f64).sqrt()
        );
    }

    println!();
    println!("spot values (closed form):");
    for s in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        println!("  k({s:>4}) = {:.6}", arccos_kernel(s, d)?);
    }
    Ok(())
}
