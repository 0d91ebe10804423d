//! Mixtures of product distributions, used to initialize EM.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::em::{reseed_collapsed, TrainingWarning};
use super::Responsibilities;
use crate::arn::SIGMA_FLOOR;
use crate::data::{DataKind, Dataset};
use crate::error::{Error, Result};
use crate::math::normal_log_density;

const MAX_ITER: usize = 200;
const RATE_CLAMP: f64 = 1e-6;
const MAX_RESEEDS: usize = 5;

/// Result of the product-mixture EM.
#[derive(Debug, Clone)]
pub struct ProductMixtureFit {
    pub responsibilities: Responsibilities,
    /// Total training log-likelihood of the final product mixture.
    pub loglik: f64,
    pub iterations: usize,
    pub warnings: Vec<TrainingWarning>,
}

/// Runs EM on a K-component mixture of product distributions (Bernoulli
/// rates or diagonal normals) from a seeded random responsibility start.
pub fn init_product_mixture(train: &Dataset, k: usize, seed: u64) -> Result<ProductMixtureFit> {
    init_product_mixture_range(train, 0..train.dim(), k, seed, None)
}

/// Product-mixture EM restricted to the dimensions in `dims`.
pub(crate) fn init_product_mixture_range(
    train: &Dataset,
    dims: Range<usize>,
    k: usize,
    seed: u64,
    block: Option<usize>,
) -> Result<ProductMixtureFit> {
    if k == 0 {
        return Err(Error::invalid("the number of components must be at least 1"));
    }
    if dims.is_empty() || dims.end > train.dim() {
        return Err(Error::invalid("product mixture dimension range is empty or out of bounds"));
    }
    let n = train.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![vec![0.0; n]; k];
    if k == 1 {
        cols[0].fill(1.0);
    } else {
        for i in 0..n {
            for c in cols.iter_mut() {
                c[i] = rng.random::<f64>() + 1e-3;
            }
        }
    }
    let mut r = Responsibilities::from_columns(cols)?;
    let mut warnings = Vec::new();
    let mut reseeds = 0;
    let mut prev = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut loglik = f64::NEG_INFINITY;
    for it in 0..MAX_ITER {
        iterations = it + 1;
        let log_joint = product_log_joint(train, &dims, &r);
        let (next, lls) = Responsibilities::from_log_joint(&log_joint);
        loglik = lls.iter().sum();
        r = next;
        let reseeded = reseed_collapsed(&mut r, &lls, &mut reseeds, MAX_RESEEDS, block, &mut warnings);
        if k == 1 || (!reseeded && (loglik - prev).abs() < 1e-6 * n as f64) {
            break;
        }
        prev = loglik;
    }
    Ok(ProductMixtureFit {
        responsibilities: r,
        loglik,
        iterations,
        warnings,
    })
}

/// M-step of the product mixture followed by the log joint `log π_k + log
/// P(x | h = k)` of every row (K×N).
fn product_log_joint(train: &Dataset, dims: &Range<usize>, r: &Responsibilities) -> Vec<Vec<f64>> {
    let n = train.n() as f64;
    (0..r.k())
        .into_par_iter()
        .map(|k| {
            let rk = r.column(k);
            let mass: f64 = rk.iter().sum();
            let mut out = vec![(mass / n).ln(); rk.len()];
            for d in dims.clone() {
                let y = train.column(d);
                match train.kind() {
                    DataKind::Binary => {
                        let ones: f64 = rk.iter().zip(y).filter(|(_, v)| **v > 0.0).map(|(w, _)| w).sum();
                        let p = (ones / mass).clamp(RATE_CLAMP, 1.0 - RATE_CLAMP);
                        let (lp, lq) = (p.ln(), (1.0 - p).ln());
                        for (o, v) in out.iter_mut().zip(y) {
                            *o += if *v > 0.0 { lp } else { lq };
                        }
                    }
                    DataKind::Continuous => {
                        let mean = rk.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / mass;
                        let var = rk.iter().zip(y).map(|(w, v)| w * (v - mean) * (v - mean)).sum::<f64>() / mass;
                        let sd = var.sqrt().max(SIGMA_FLOOR);
                        for (o, v) in out.iter_mut().zip(y) {
                            *o += normal_log_density(*v, mean, sd);
                        }
                    }
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode_binary, RawMatrix};

    #[test]
    fn single_component_is_all_ones() {
        let raw = RawMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let data = encode_binary(&raw).unwrap();
        let fit = init_product_mixture(&data, 1, 3).unwrap();
        assert!(fit.responsibilities.column(0).iter().all(|v| *v == 1.0));
    }

    #[test]
    fn rejects_zero_components() {
        let raw = RawMatrix::from_rows(&[vec![0.0]]).unwrap();
        let data = encode_binary(&raw).unwrap();
        assert!(init_product_mixture(&data, 0, 1).is_err());
    }
}
