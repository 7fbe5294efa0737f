//! Maurey sparsification of a many-atom function into a few bounded-weight
//! ReLU nodes, measured against the `R̃ √(r²+1) / √N` error bound.
//!
//! ```bash
//! cargo run --release -p randfeat --example sparsify
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use randfeat::atoms::{best_sparsify, l2_error, maurey_error_bound, maurey_sparsify, AtomicFunction};
use randfeat::features::sample_ball;

fn main() -> randfeat::Result<()> {
    let d = 3;
    let radius = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = AtomicFunction::random(d, 80, 10.0, &mut rng)?;
    let mass = f.total_mass();
    let probes = sample_ball(d, 10_000, radius, 9)?;

    println!(
        "source: {} atoms, total mass {mass:.3}, measured on {} ball samples",
        f.atoms().len(),
        probes.nrows()
    );
    println!(
        "{:>6}  {:>12}  {:>12}  {:>12}",
        "atoms", "single draw", "best of 20", "bound"
    );
    for n in [50usize, 200, 800, 3200] {
        let single = maurey_sparsify(&f, n, &mut rng)?;
        let best = best_sparsify(&f, n, 20, probes.view(), &mut rng)?;
        println!(
            "{n:>6}  {:>12.4}  {:>12.4}  {:>12.4}",
            l2_error(&f, &single, probes.view())?,
            l2_error(&f, &best, probes.view())?,
            maurey_error_bound(mass, radius, n)
        );
    }

    let g = maurey_sparsify(&f, 200, &mut rng)?;
    let coeff = g.atoms()[0].coeff.abs();
    println!();
    println!(
        "every sparsified coefficient has magnitude R̃/N = {coeff:.6}; inner weights are unit vectors"
    );
    Ok(())
}
