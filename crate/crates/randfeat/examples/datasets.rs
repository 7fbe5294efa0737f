//! The bundled dataset generators and file formats: the four 2-d
//! benchmarks, the sphere-product regression task, a radial generator, and
//! LIBSVM/CSV/manifest round trips.
//!
//! ```bash
//! cargo run --release -p randfeat --example datasets
//! ```

use randfeat::data::{
    gen_daniely, gen_grid2d, gen_radial, load_libsvm, normalize, Grid2dKind, NormalizeMode,
};

fn main() -> randfeat::Result<()> {
    let out_dir = std::env::temp_dir().join("randfeat_datasets");
    std::fs::create_dir_all(&out_dir).expect("create output dir");

    for kind in [
        Grid2dKind::Sine,
        Grid2dKind::Strips,
        Grid2dKind::Square,
        Grid2dKind::Checkboard,
    ] {
        let data = gen_grid2d(kind, 1000, 7)?;
        let pos = data.y().iter().filter(|y| **y > 0.0).count();
        println!(
            "{:<10} m = {}, radius {:.3}, positive fraction {:.3}",
            data.name(),
            data.len(),
            data.radius(),
            pos as f64 / data.len() as f64
        );
        data.write_csv(out_dir.join(format!("{}.csv", data.name())))?;
        data.write_libsvm(out_dir.join(format!("{}.libsvm", data.name())))?;
        std::fs::write(
            out_dir.join(format!("{}.manifest.json", data.name())),
            data.manifest_json()?,
        )
        .expect("write manifest");
    }

    let daniely = gen_daniely(2, 1000, 7)?;
    let mean = daniely.y().sum() / daniely.len() as f64;
    let var = daniely
        .y()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / daniely.len() as f64;
    println!(
        "{:<10} m = {}, dim {}, radius {:.3}, label variance {:.3}",
        daniely.name(),
        daniely.len(),
        daniely.dim(),
        daniely.radius(),
        var
    );

    // Rotation-invariant data with a two-shell radial density.
    let radial = gen_radial(4, 1000, &[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)], |r| r.sin(), 7)?;
    println!(
        "{:<10} m = {}, radius {:.3} (two shells, labels sin(r))",
        radial.name(),
        radial.len(),
        radial.radius()
    );
    let unit = normalize(&radial, NormalizeMode::UnitBall);
    println!("{:<10} radius after unit-ball rescale: {:.3}", "", unit.radius());

    // LIBSVM round trip is exact.
    let path = out_dir.join("checkboard.libsvm");
    let loaded = load_libsvm(&path, Some(2))?;
    let original = gen_grid2d(Grid2dKind::Checkboard, 1000, 7)?;
    assert_eq!(loaded.x(), original.x());
    assert_eq!(loaded.y(), original.y());
    println!();
    println!("libsvm round trip exact; files under {}", out_dir.display());
    Ok(())
}
