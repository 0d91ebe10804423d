//! The experiment driver behind `sparn train`: a grid over penalties and
//! component counts scored on validation data, with the winner evaluated on
//! the test split and written to an output directory.
//!
//! Usage: `cargo run --release --example model_selection -- [OUT_DIR]`

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparn::cli::{cmd_select_train, ComponentsGrid, ExperimentConfig, ModelFamily};
use sparn::data::write_matrix;
use sparn::{DataKind, MatrixFormat, RawMatrix, SharingMode};

/// Two populations with opposite bit persistence.
fn populations(rng: &mut impl Rng, n: usize) -> RawMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let stay = if i % 2 == 0 { 0.9 } else { 0.15 };
            let mut row = vec![f64::from(rng.random::<bool>())];
            for _ in 1..12 {
                let prev = row[row.len() - 1];
                row.push(if rng.random::<f64>() < stay { prev } else { 1.0 - prev });
            }
            row
        })
        .collect();
    RawMatrix::from_rows(&rows).expect("rows have equal length")
}

fn main() -> sparn::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("sparn-selection"), PathBuf::from);
    std::fs::create_dir_all(&out).map_err(|e| sparn::Error::file(&out, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (name, n) in [("train.txt", 400), ("valid.txt", 200), ("test.txt", 200)] {
        write_matrix(out.join(name), &populations(&mut rng, n), MatrixFormat::DenseText)?;
    }

    let cfg = ExperimentConfig {
        train: out.join("train.txt"),
        valid: Some(out.join("valid.txt")),
        test: Some(out.join("test.txt")),
        kind: DataKind::Binary,
        family: ModelFamily::Mixture,
        mode: SharingMode::Auto,
        // five penalties from λ_max down to λ_max/100
        lambda_grid: "auto:5:0.01".parse()?,
        components_grid: ComponentsGrid::Values(vec![vec![1], vec![2], vec![4]]),
        partition: None,
        seed: 1,
        threads: None,
        out: Some(out.clone()),
        intercept_scale: 10.0,
    };
    let outcome = cmd_select_train(&cfg)?;
    print!("{}", outcome.grid_text());
    print!("{}", outcome.to_kv());
    println!("model, report and per-example test log-likelihoods written to {}", out.display());
    Ok(())
}
