//! A sequence of gated mixtures over the four quadrants of small binary
//! images. Each quadrant's latent variable is predicted by a softmax gate
//! from all earlier pixels, and the likelihood stays exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparn::data::encode_binary;
use sparn::math::mean_and_stderr;
use sparn::mixture::{em_fit, init_product_mixture};
use sparn::seqmix::{fit_sequence, BlockConfig};
use sparn::{Partition, RawMatrix, SharingMode, SolverConfig};

const SIDE: usize = 8;

/// 8×8 images with one horizontal and one vertical bar, 3% pixel noise.
fn bars(rng: &mut impl Rng, n: usize) -> RawMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let (r, c) = (rng.random_range(0..SIDE), rng.random_range(0..SIDE));
            (0..SIDE * SIDE)
                .map(|i| {
                    let on = i / SIDE == r || i % SIDE == c;
                    f64::from(on ^ (rng.random::<f64>() < 0.03))
                })
                .collect()
        })
        .collect();
    RawMatrix::from_rows(&rows).expect("rows have equal length")
}

fn main() -> sparn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // quadrant-major pixel order: every block is one contiguous interval
    let (partition, order) = Partition::grid(SIDE, SIDE, SIDE / 2, SIDE / 2)?;
    let train = encode_binary(&bars(&mut rng, 400).permute_columns(&order)?)?;
    let test = encode_binary(&bars(&mut rng, 200).permute_columns(&order)?)?;
    let cfg = SolverConfig::with_lambda(3.0);
    println!("partition {partition} ({} blocks)", partition.len());

    let init = init_product_mixture(&train, 3, 1)?.responsibilities;
    let mixture = em_fit(&train, 3, SharingMode::Auto, &cfg, &init)?.model;
    let (mean, se) = mean_and_stderr(&mixture.loglik_dataset(&test)?);
    println!("mixture auto K=3:        test {mean:.3} +- {se:.3}");

    let blocks = vec![BlockConfig { k: 3, mode: SharingMode::Auto }; partition.len()];
    let fit = fit_sequence(&train, &partition, &blocks, &cfg, 1)?;
    let model = fit.model.with_order(order)?;
    let (mean, se) = mean_and_stderr(&model.loglik_dataset(&test)?);
    println!("sequence auto 4 x K=3:   test {mean:.3} +- {se:.3}");

    // per-quadrant posteriors of the first test image
    let x = test.row(0);
    for (l, post) in model.posterior(&x)?.iter().enumerate() {
        let p: Vec<String> = post.iter().map(|v| format!("{v:.2}")).collect();
        println!("  block {l}: posterior [{}]", p.join(", "));
    }
    Ok(())
}
