//! Direct use of the penalized regression solvers: a lasso path warm-started
//! from λ_max downwards and a sparse logistic fit, with the subgradient
//! optimality condition checked by hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparn::solvers::{fit_linear_l1, fit_logistic_l1, lambda_grid, lambda_max, Family};
use sparn::{ColMatrix, SampleWeights, SolverConfig};

fn main() -> sparn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, p) = (200, 12);
    // column-major design; only three predictors matter
    let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let design = ColMatrix::new(&x, n, p);
    let truth = [(0, 2.0), (4, -1.5), (9, 0.8)];
    let y: Vec<f64> = (0..n)
        .map(|i| truth.iter().map(|&(j, b)| b * design.get(i, j)).sum::<f64>() + 0.1 * rng.random_range(-1.0..1.0))
        .collect();
    let weights = SampleWeights::uniform(n);

    let lmax = lambda_max(design, &y, &weights, Family::Linear, false, 10.0)?;
    println!("lasso, lambda_max = {lmax:.3}");
    let mut warm = None;
    for lambda in lambda_grid(lmax, 8, 1e-3) {
        let fit = fit_linear_l1(design, &y, &weights, &SolverConfig::with_lambda(lambda), warm.as_ref())?;
        let support: Vec<usize> = fit.value.entries().iter().map(|e| e.0).collect();
        println!("  lambda {lambda:>9.4}  sweeps {:>3}  support {support:?}", fit.status.sweeps);
        warm = Some(fit.value);
    }

    // logistic regression on ±1 labels drawn from the same predictors
    let labels: Vec<f64> = (0..n)
        .map(|i| {
            let eta: f64 = truth.iter().map(|&(j, b)| 2.0 * b * design.get(i, j)).sum();
            if rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()) { 1.0 } else { -1.0 }
        })
        .collect();
    let cfg = SolverConfig::with_lambda(5.0);
    let fit = fit_logistic_l1(design, &labels, &weights, &cfg, None)?;
    println!("logistic, lambda = {}: intercept {:.3}, weights {:?}", cfg.lambda, fit.value.intercept, fit.value.entries());

    // KKT: |gradient| <= λ on zero weights, = λ·sign on nonzero ones
    let margins: Vec<f64> = (0..n)
        .map(|i| {
            let xi: Vec<f64> = (0..p).map(|j| design.get(i, j)).collect();
            labels[i] / (1.0 + (labels[i] * fit.value.score(&xi)).exp())
        })
        .collect();
    let worst = (0..p)
        .map(|j| {
            let g: f64 = design.col(j).iter().zip(&margins).map(|(x, m)| x * m).sum();
            match fit.value.get(j) {
                0.0 => (g.abs() - cfg.lambda).max(0.0),
                w => (g - cfg.lambda * w.signum()).abs(),
            }
        })
        .fold(0.0, f64::max);
    println!("largest KKT violation: {worst:.2e}");
    Ok(())
}
