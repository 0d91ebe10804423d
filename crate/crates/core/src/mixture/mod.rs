//! Mixtures of sparse autoregressive networks.
//!
//! Components share parameters according to a [`SharingMode`]:
//!
//! * `untied`: every component has its own intercepts and dependency weights
//! * `tied`: components share dependency weights and differ in intercepts
//! * `auto`: global parameters plus L1-penalized per-component deviations
//!
//! Training is EM with warm-started M-steps; the likelihood is an exact
//! log-sum-exp over components.

mod components;
mod em;
mod init;

pub use components::{ComponentSet, DimParams};
pub use em::{em_fit, em_fit_with, EmOptions, MixtureFit, TrainingWarning};
pub use init::{init_product_mixture, ProductMixtureFit};

pub(crate) use em::{run_block_em, BlockSpec, PriorFit};
pub(crate) use init::init_product_mixture_range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{DataKind, Dataset, EncodingMeta};
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, log_weighted_sum_exp};
use crate::solvers::SolverConfig;

/// Floor applied to responsibilities before renormalization.
pub const RESPONSIBILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SharingMode {
    Untied,
    Tied,
    Auto,
}

impl SharingMode {
    pub const ALL: [SharingMode; 3] = [SharingMode::Untied, SharingMode::Tied, SharingMode::Auto];

    pub fn as_str(self) -> &'static str {
        match self {
            SharingMode::Untied => "untied",
            SharingMode::Tied => "tied",
            SharingMode::Auto => "auto",
        }
    }
}

impl std::fmt::Display for SharingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SharingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "untied" => Ok(SharingMode::Untied),
            "tied" => Ok(SharingMode::Tied),
            "auto" => Ok(SharingMode::Auto),
            other => Err(Error::invalid(format!("unknown sharing mode `{other}`"))),
        }
    }
}

/// Row-stochastic N×K posterior membership probabilities, stored per
/// component.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    cols: Vec<Vec<f64>>,
}

impl Responsibilities {
    /// Validates and floors/renormalizes the given columns.
    pub fn from_columns(mut cols: Vec<Vec<f64>>) -> Result<Self> {
        let k = cols.len();
        if k == 0 {
            return Err(Error::invalid("responsibilities need at least one component"));
        }
        let n = cols[0].len();
        if n == 0 || cols.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("responsibility columns must share a nonzero length"));
        }
        for i in 0..n {
            if (0..k).any(|c| !(cols[c][i] >= 0.0) || !cols[c][i].is_finite()) {
                return Err(Error::invalid(format!("responsibility row {i} is invalid")));
            }
        }
        normalize_rows(&mut cols);
        Ok(Self { cols })
    }

    pub fn ones(n: usize) -> Self {
        Self {
            cols: vec![vec![1.0; n]],
        }
    }

    pub fn n(&self) -> usize {
        self.cols[0].len()
    }

    pub fn k(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.cols[k]
    }

    pub fn columns(&self) -> Vec<&[f64]> {
        self.cols.iter().map(Vec::as_slice).collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[i]).collect()
    }

    /// Total mass of every component.
    pub fn mass(&self) -> Vec<f64> {
        self.cols.iter().map(|c| c.iter().sum()).collect()
    }

    /// Index of the largest responsibility per row (first on ties).
    pub fn hard_assignments(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                let mut best = 0;
                for k in 1..self.k() {
                    if self.cols[k][i] > self.cols[best][i] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub(crate) fn into_columns(self) -> Vec<Vec<f64>> {
        self.cols
    }

    /// Posterior from per-component log joint probabilities (K×N).
    pub(crate) fn from_log_joint(log_joint: &[Vec<f64>]) -> (Self, Vec<f64>) {
        let k = log_joint.len();
        let n = log_joint[0].len();
        let mut cols = vec![vec![0.0; n]; k];
        let mut logliks = vec![0.0; n];
        let mut row = vec![0.0; k];
        for i in 0..n {
            for c in 0..k {
                row[c] = log_joint[c][i];
            }
            let z = log_sum_exp(&row);
            logliks[i] = z;
            for c in 0..k {
                cols[c][i] = (row[c] - z).exp();
            }
        }
        normalize_rows(&mut cols);
        (Self { cols }, logliks)
    }
}

/// Floors at [`RESPONSIBILITY_FLOOR`] and rescales every row to sum to one.
fn normalize_rows(cols: &mut [Vec<f64>]) {
    let k = cols.len();
    if k == 1 {
        cols[0].fill(1.0);
        return;
    }
    let n = cols[0].len();
    for i in 0..n {
        let mut s = 0.0;
        for c in cols.iter_mut() {
            c[i] = c[i].max(RESPONSIBILITY_FLOOR);
            s += c[i];
        }
        for c in cols.iter_mut() {
            c[i] /= s;
        }
    }
}

/// A K-component mixture of sparse autoregressive networks over all
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    mixing: Vec<f64>,
    components: ComponentSet,
    meta: Option<EncodingMeta>,
}

impl MixtureModel {
    pub fn new(mixing: Vec<f64>, components: ComponentSet, meta: Option<EncodingMeta>) -> Result<Self> {
        if mixing.len() != components.k() {
            return Err(Error::Dimension {
                expected: components.k(),
                got: mixing.len(),
            });
        }
        if components.start() != 0 {
            return Err(Error::invalid("mixture components must start at dimension 0"));
        }
        let sum: f64 = mixing.iter().sum();
        if mixing.iter().any(|p| !(*p > 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("mixing weights must be positive and sum to one"));
        }
        if let Some(m) = &meta {
            if m.dim() != components.end() {
                return Err(Error::Dimension {
                    expected: components.end(),
                    got: m.dim(),
                });
            }
        }
        Ok(Self {
            mixing,
            components,
            meta,
        })
    }

    pub fn k(&self) -> usize {
        self.mixing.len()
    }

    pub fn dim(&self) -> usize {
        self.components.end()
    }

    pub fn kind(&self) -> DataKind {
        self.components.kind()
    }

    pub fn mode(&self) -> SharingMode {
        self.components.mode()
    }

    pub fn mixing(&self) -> &[f64] {
        &self.mixing
    }

    pub fn components(&self) -> &ComponentSet {
        &self.components
    }

    pub fn meta(&self) -> Option<&EncodingMeta> {
        self.meta.as_ref()
    }

    /// Penalty term of the training objective under `cfg`.
    pub fn penalty(&self, cfg: &SolverConfig) -> f64 {
        self.components.penalty(cfg)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// log P(h = k) + log P(x | h = k) for every component.
    pub fn log_joint(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok((0..self.k())
            .map(|k| self.mixing[k].ln() + self.components.loglik(x, k))
            .collect())
    }

    pub fn loglik(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let comp: Vec<f64> = (0..self.k()).map(|k| self.components.loglik(x, k)).collect();
        Ok(log_weighted_sum_exp(&comp, &self.mixing))
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let lj = self.log_joint(x)?;
        let z = log_sum_exp(&lj);
        Ok(lj.into_iter().map(|v| (v - z).exp()).collect())
    }

    pub fn loglik_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: data.dim(),
            });
        }
        let comp = self.components.component_logliks(data);
        Ok((0..data.n())
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = comp.iter().map(|c| c[i]).collect();
                log_weighted_sum_exp(&row, &self.mixing)
            })
            .collect())
    }

    /// Draws the component from the mixing weights, then the sample
    /// ancestrally. Returns (component, sample).
    pub fn sample_with_latent(&self, seed: u64) -> (usize, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = draw_categorical(&self.mixing, &mut rng);
        let mut x = Vec::with_capacity(self.dim());
        self.components.sample_into(&mut x, h, &mut rng);
        (h, x)
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        self.sample_with_latent(seed).1
    }
}

/// Candidate component counts for model selection: a fixed ladder capped at
/// N/20 for untied mixtures and N/5 for tied or auto mixtures (always
/// including 1).
pub fn component_grid(n: usize, mode: SharingMode) -> Vec<usize> {
    const LADDER: [usize; 11] = [1, 2, 3, 5, 10, 20, 50, 100, 200, 500, 1000];
    let cap = match mode {
        SharingMode::Untied => n / 20,
        SharingMode::Tied | SharingMode::Auto => n / 5,
    };
    LADDER.iter().copied().filter(|k| *k == 1 || *k <= cap).collect()
}

pub(crate) fn draw_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn responsibilities_floor_and_normalize() {
        let r = Responsibilities::from_columns(vec![vec![1.0, 0.5], vec![0.0, 0.5]]).unwrap();
        let row = r.row(0);
        assert!(row[1] >= RESPONSIBILITY_FLOOR * 0.999);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(r.hard_assignments(), vec![0, 0]);
    }

    #[test]
    fn responsibilities_reject_negative() {
        assert!(Responsibilities::from_columns(vec![vec![-0.1], vec![1.1]]).is_err());
    }

    #[test]
    fn categorical_draw_covers_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            counts[draw_categorical(&[0.2, 0.3, 0.5], &mut rng)] += 1;
        }
        assert!(counts.iter().all(|c| *c > 400));
    }

    #[test]
    fn component_grid_caps() {
        assert_eq!(component_grid(100, SharingMode::Untied), vec![1, 2, 3, 5]);
        assert_eq!(component_grid(100, SharingMode::Tied), vec![1, 2, 3, 5, 10, 20]);
        assert_eq!(component_grid(10, SharingMode::Untied), vec![1]);
    }

    #[test]
    fn mode_parsing() {
        for m in SharingMode::ALL {
            assert_eq!(m.as_str().parse::<SharingMode>().unwrap(), m);
        }
        assert!("shared".parse::<SharingMode>().is_err());
    }
}
