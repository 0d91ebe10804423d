//! Writes trained models in the text model format and reads them back. Floats
//! are stored with round-trip precision, so reloaded models reproduce every
//! log-likelihood bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparn::arn::fit_arn;
use sparn::data::encode_binary;
use sparn::format::{load_model, save_model};
use sparn::mixture::{em_fit, init_product_mixture};
use sparn::{Model, RawMatrix, SharingMode, SolverConfig};

fn main() -> sparn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows: Vec<Vec<f64>> = (0..300)
        .map(|i| (0..8).map(|j| f64::from(rng.random::<f64>() < if (i + j) % 2 == 0 { 0.8 } else { 0.3 })).collect())
        .collect();
    let train = encode_binary(&RawMatrix::from_rows(&rows)?)?;
    let cfg = SolverConfig::with_lambda(1.0);

    let init = init_product_mixture(&train, 2, 3)?.responsibilities;
    let models = [
        Model::Arn(fit_arn(&train, &cfg)?.model),
        Model::Mixture(em_fit(&train, 2, SharingMode::Tied, &cfg, &init)?.model),
    ];
    let dir = std::env::temp_dir();
    for (i, model) in models.iter().enumerate() {
        let path = dir.join(format!("sparn-example-{i}.txt"));
        save_model(&path, model)?;
        let back = load_model(&path)?;
        let same = model.loglik_dataset(&train)? == back.loglik_dataset(&train)?;
        let text = std::fs::read_to_string(&path).map_err(|e| sparn::Error::file(&path, e))?;
        println!("{} model -> {} ({} lines), identical logliks: {same}", model.family(), path.display(), text.lines().count());
        for line in text.lines().take(6) {
            println!("    {line}");
        }
    }
    Ok(())
}
