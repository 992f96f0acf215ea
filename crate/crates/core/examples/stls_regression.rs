//! Sequential thresholded least squares on a planted sparse system.
//!
//! Five candidate columns, two outputs; only three coefficients are nonzero.
//! With a small amount of noise the threshold removes the rest exactly.
//!
//! cargo run --release --example stls_regression

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sindy_mpc::sindy::{stls, Library, StlsOptions};

fn main() -> sindy_mpc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = 400;
    let names = ["1", "a", "b", "a*b", "a^2"].map(String::from).to_vec();
    let mut matrix = DMatrix::zeros(rows, names.len());
    for i in 0..rows {
        let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        matrix.row_mut(i).copy_from_slice(&[1.0, a, b, a * b, a * a]);
    }
    let mut truth = DMatrix::zeros(names.len(), 2);
    truth[(1, 0)] = 1.5;
    truth[(3, 0)] = -0.4;
    truth[(0, 1)] = 9.8;
    let noise = DMatrix::from_fn(rows, 2, |_, _| rng.random_range(-1e-4..1e-4));
    let targets = &matrix * &truth + noise;

    let library = Library { matrix, names: names.clone() };
    let fit = stls(&library, &targets, &["y1", "y2"], &StlsOptions { threshold: 0.05, max_iters: 10 })?;
    println!("iterations per output: {:?}", fit.iterations);
    println!("{:<5} {:>10} {:>10}   {:>10} {:>10}", "term", "y1", "true", "y2", "true");
    for (j, name) in names.iter().enumerate() {
        println!(
            "{name:<5} {:>10.5} {:>10.5}   {:>10.5} {:>10.5}",
            fit.coefficients[(j, 0)], truth[(j, 0)], fit.coefficients[(j, 1)], truth[(j, 1)]
        );
    }
    Ok(())
}
