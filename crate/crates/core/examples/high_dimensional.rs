//! Fits a single sparse network to synthetic binary data with many more
//! dimensions than samples.
//!
//! Usage: `cargo run --release --example high_dimensional -- [DIM] [N] [LAMBDA]`

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparn::arn::fit_arn;
use sparn::data::encode_binary;
use sparn::{RawMatrix, SolverConfig};

/// Each dimension copies a random earlier dimension with probability 0.8
/// and is a fair coin otherwise.
fn copy_chain(dim: usize, n: usize, seed: u64) -> RawMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parents: Vec<usize> = (0..dim).map(|d| if d == 0 { 0 } else { rng.random_range(d.saturating_sub(50)..d) }).collect();
    let mut values = vec![0.0; n * dim];
    for row in values.chunks_mut(dim) {
        for d in 0..dim {
            row[d] = if d > 0 && rng.random::<f64>() < 0.8 {
                row[parents[d]]
            } else if rng.random::<bool>() {
                1.0
            } else {
                0.0
            };
        }
    }
    RawMatrix::new(n, dim, values).expect("shape is consistent")
}

fn main() -> sparn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dim = args.first().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let lambda = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(15.0);

    let train = encode_binary(&copy_chain(dim, n, 7))?;
    let start = Instant::now();
    let fit = fit_arn(&train, &SolverConfig::with_lambda(lambda))?;
    let secs = start.elapsed().as_secs_f64();

    let ll = fit.model.loglik_dataset(&train)?;
    let mean = ll.iter().sum::<f64>() / n as f64;
    println!("dim={dim} n={n} lambda={lambda}");
    println!("fit seconds: {secs:.2}");
    println!("nonzero weights: {}", fit.model.nnz());
    println!("warnings: {}", fit.warnings.len());
    println!("mean training loglik: {mean:.3} nats (independent bits: {:.3})", -(dim as f64) * std::f64::consts::LN_2);
    Ok(())
}
