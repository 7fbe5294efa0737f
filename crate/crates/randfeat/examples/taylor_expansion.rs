//! Taylor coefficients of the arc-cosine kernel and the convergence of
//! partial sums to the closed form.
//!
//! ```bash
//! cargo run --release -p randfeat --example taylor_expansion
//! ```

use randfeat::kernels::{arccos_kernel, taylor_coeffs};

fn main() -> randfeat::Result<()> {
    let d = 3;
    let taylor = taylor_coeffs(d, 200)?;

    println!("leading Taylor coefficients for d = {d}:");
    for (j, a) in taylor.coeffs().iter().take(9).enumerate() {
        println!("  a_{j} = {a:.10}");
    }

    println!();
    println!("partial-sum error at s = 0.9 as the order grows:");
    let exact = arccos_kernel(0.9, d)?;
    for order in [2usize, 8, 32, 128, 200] {
        let partial = taylor_coeffs(d, order)?;
        println!("  J = {order:>3}: |sum - k| = {:.3e}", (partial.eval(0.9) - exact).abs());
    }

    let out = std::env::temp_dir().join("arccos_taylor_d3.csv");
    taylor.write_csv(&out)?;
    println!();
    println!("full coefficient table written to {}", out.display());
    Ok(())
}
