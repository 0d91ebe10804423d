//! EM-trained mixtures of sparse autoregressive networks under the three
//! parameter-sharing modes, compared with a single network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparn::arn::fit_arn;
use sparn::data::encode_binary;
use sparn::math::mean_and_stderr;
use sparn::mixture::{em_fit, init_product_mixture};
use sparn::{RawMatrix, SharingMode, SolverConfig};

/// Three prototypes with bit-flip noise, followed by a chain segment whose
/// persistence depends on the prototype.
fn clusters(rng: &mut impl Rng, n: usize) -> RawMatrix {
    let protos: [u32; 3] = [0b1111_0000_1111, 0b0000_1111_0000, 0b1010_1010_1010];
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let c = i % 3;
            let mut row: Vec<f64> = (0..12)
                .map(|b| {
                    let bit = (protos[c] >> b) & 1 == 1;
                    f64::from(bit ^ (rng.random::<f64>() < 0.1))
                })
                .collect();
            let stay = [0.95, 0.6, 0.2][c];
            for _ in 0..8 {
                let prev = row[row.len() - 1];
                row.push(if rng.random::<f64>() < stay { prev } else { 1.0 - prev });
            }
            row
        })
        .collect();
    RawMatrix::from_rows(&rows).expect("rows have equal length")
}

fn main() -> sparn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let train = encode_binary(&clusters(&mut rng, 600))?;
    let test = encode_binary(&clusters(&mut rng, 300))?;
    let cfg = SolverConfig::with_lambda(2.0);

    let single = fit_arn(&train, &cfg)?.model;
    let (mean, se) = mean_and_stderr(&single.loglik_dataset(&test)?);
    println!("{:>16}: test {mean:.3} +- {se:.3}, nnz {}", "single network", single.nnz());

    // one initialization shared by every mode
    let init = init_product_mixture(&train, 3, 7)?.responsibilities;
    for mode in SharingMode::ALL {
        let fit = em_fit(&train, 3, mode, &cfg, &init)?;
        let (mean, se) = mean_and_stderr(&fit.model.loglik_dataset(&test)?);
        let mixing: Vec<String> = fit.model.mixing().iter().map(|p| format!("{p:.2}")).collect();
        println!(
            "{:>16}: test {mean:.3} +- {se:.3}, nnz {}, {} EM iterations, mixing [{}]",
            format!("{mode} K=3"),
            fit.model.components().nnz(),
            fit.iterations,
            mixing.join(", ")
        );
    }
    Ok(())
}
