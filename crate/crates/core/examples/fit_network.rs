//! Trains a sparse autoregressive network on binary data, choosing the
//! penalty on a validation split along a warm-started path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparn::arn::{arn_lambda_max, fit_arn_path};
use sparn::data::encode_binary;
use sparn::math::mean_and_stderr;
use sparn::solvers::lambda_grid;
use sparn::{RawMatrix, SolverConfig};

/// A noisy Markov chain: each bit repeats its predecessor with probability
/// 0.9, and every fifth bit is the XOR of the two bits before it.
fn chain(rng: &mut impl Rng, n: usize, dim: usize) -> RawMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row = vec![f64::from(rng.random::<bool>())];
            for d in 1..dim {
                let bit = if d % 5 == 4 && d >= 2 {
                    (row[d - 1] != row[d - 2]) as u8 as f64
                } else if rng.random::<f64>() < 0.9 {
                    row[d - 1]
                } else {
                    1.0 - row[d - 1]
                };
                row.push(bit);
            }
            row
        })
        .collect();
    RawMatrix::from_rows(&rows).expect("rows have equal length")
}

fn main() -> sparn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dim = 30;
    let train = encode_binary(&chain(&mut rng, 400, dim))?;
    let valid = encode_binary(&chain(&mut rng, 200, dim))?;
    let test = encode_binary(&chain(&mut rng, 200, dim))?;

    let lambdas = lambda_grid(arn_lambda_max(&train, 10.0)?, 12, 1e-3);
    let path = fit_arn_path(&train, &lambdas, &SolverConfig::default())?;
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, (fit, lambda)) in path.iter().zip(&lambdas).enumerate() {
        let v = fit.model.loglik_dataset(&valid)?;
        let (mean, _) = mean_and_stderr(&v);
        println!("lambda {lambda:>9.4}  nnz {:>4}  valid {mean:>8.3}", fit.model.nnz());
        if mean > best.0 {
            best = (mean, i);
        }
    }
    let model = &path[best.1].model;
    let (mean, se) = mean_and_stderr(&model.loglik_dataset(&test)?);
    println!("selected lambda {:.4}: test {mean:.3} +- {se:.3} nats", lambdas[best.1]);
    println!("independent fair bits would give {:.3}", -(dim as f64) * std::f64::consts::LN_2);
    let parents: Vec<usize> = model.conditionals()[10].weights().entries().iter().map(|e| e.0).collect();
    println!("predictors used by dimension 10: {parents:?}");
    Ok(())
}
