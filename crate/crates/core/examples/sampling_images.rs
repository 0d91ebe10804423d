//! Draws samples from a trained network, writes them as PGM images, finds the
//! nearest training image of each sample and writes the symmetric difference
//! as a PPM (blue: only in the training image, orange: only in the sample).
//!
//! Usage: `cargo run --example sampling_images -- [OUT_DIR]`

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparn::arn::fit_arn;
use sparn::cli::{nearest, nearest_text, sample_to_dir, draw_samples, ImageShape, Metric};
use sparn::data::encode_binary;
use sparn::pnm::difference_pixmap;
use sparn::{Model, RawMatrix, SolverConfig};

const SIDE: usize = 10;

/// Filled axis-aligned rectangles at random positions.
fn rectangles(rng: &mut impl Rng, n: usize) -> RawMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let (r0, c0) = (rng.random_range(0..SIDE - 3), rng.random_range(0..SIDE - 3));
            let (h, w) = (rng.random_range(3..=SIDE - r0), rng.random_range(3..=SIDE - c0));
            (0..SIDE * SIDE)
                .map(|i| {
                    let (r, c) = (i / SIDE, i % SIDE);
                    f64::from((r0..r0 + h).contains(&r) && (c0..c0 + w).contains(&c))
                })
                .collect()
        })
        .collect();
    RawMatrix::from_rows(&rows).expect("rows have equal length")
}

fn main() -> sparn::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("sparn-samples"), PathBuf::from);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let raw = rectangles(&mut rng, 800);
    let model = Model::Arn(fit_arn(&encode_binary(&raw)?, &SolverConfig::with_lambda(2.0))?.model);

    let shape = ImageShape { width: SIDE, height: SIDE };
    let files = sample_to_dir(&model, 6, 42, &out, Some(shape))?;
    println!("wrote {} files to {}", files.len(), out.display());

    let samples = draw_samples(&model, 6, 42);
    let found = nearest(&samples, &raw, Metric::Hamming)?;
    print!("{}", nearest_text(&found));
    for (i, nb) in found.iter().enumerate() {
        let ppm = difference_pixmap(SIDE, SIDE, raw.row(nb.index), samples.row(i))?;
        let path = out.join(format!("diff_{i:04}.ppm"));
        std::fs::write(&path, ppm).map_err(|e| sparn::Error::file(&path, e))?;
    }
    Ok(())
}
