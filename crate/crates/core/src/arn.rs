//! A single sparse autoregressive network.
//!
//! Dimension `d` is predicted from dimensions `0..d` by an L1-penalized
//! logistic regression (binary data, ±1 encoded) or a linear regression with a
//! fixed conditional standard deviation (standardized continuous data). The
//! D fits are independent and run in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{DataKind, Dataset, EncodingMeta};
use crate::error::{Error, Result};
use crate::math::{log_sigmoid, normal_log_density, sigmoid};
use crate::solvers::{
    self, fit_linear_l1, fit_linear_l1_with_intercept, fit_logistic_l1, Family, FitStatus,
    SampleWeights, SolverConfig, SparseWeights,
};

/// Lower bound on every conditional standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticConditional {
    pub weights: SparseWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConditional {
    pub weights: SparseWeights,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Conditional {
    Logistic(LogisticConditional),
    Gaussian(GaussianConditional),
}

impl Conditional {
    pub fn weights(&self) -> &SparseWeights {
        match self {
            Conditional::Logistic(c) => &c.weights,
            Conditional::Gaussian(c) => &c.weights,
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            Conditional::Logistic(_) => None,
            Conditional::Gaussian(c) => Some(c.sigma),
        }
    }

    /// log P(x_d | x_{<d}); `x` must hold at least the predictors.
    #[inline]
    pub fn log_prob(&self, value: f64, x: &[f64]) -> f64 {
        match self {
            Conditional::Logistic(c) => log_sigmoid(value * c.weights.score(x)),
            Conditional::Gaussian(c) => normal_log_density(value, c.weights.score(x), c.sigma),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        match self {
            Conditional::Logistic(c) => {
                let u: f64 = rng.random();
                if u < sigmoid(c.weights.score(x)) {
                    1.0
                } else {
                    -1.0
                }
            }
            Conditional::Gaussian(c) => {
                let z: f64 = rng.sample(StandardNormal);
                c.weights.score(x) + c.sigma * z
            }
        }
    }
}

/// Solver outcome that did not converge within its limits.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverWarning {
    pub dim: usize,
    pub component: Option<usize>,
    pub status: FitStatus,
}

impl std::fmt::Display for SolverWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "dimension {}", self.dim)?;
        if let Some(k) = self.component {
            write!(f, " component {k}")?;
        }
        write!(
            f,
            ": solver stopped after {} sweeps / {} outer iterations without converging",
            self.status.sweeps, self.status.outer
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoregressiveNet {
    kind: DataKind,
    conditionals: Vec<Conditional>,
    meta: Option<EncodingMeta>,
}

/// A fitted network together with per-dimension solver warnings.
#[derive(Debug, Clone)]
pub struct ArnFit {
    pub model: AutoregressiveNet,
    pub warnings: Vec<SolverWarning>,
}

/// Weighted RMS of the residuals, floored.
pub(crate) fn residual_sigma(y: &[f64], w: &[f64], weights: &SparseWeights, x: &crate::data::ColMatrix<'_>) -> f64 {
    let mut mean = vec![weights.intercept; y.len()];
    for &(j, c) in weights.entries() {
        for (m, xv) in mean.iter_mut().zip(x.col(j)) {
            *m += c * xv;
        }
    }
    let (mut ss, mut wsum) = (0.0, 0.0);
    for ((y, m), w) in y.iter().zip(&mean).zip(w) {
        ss += w * (y - m) * (y - m);
        wsum += w;
    }
    if wsum > 0.0 {
        (ss / wsum).sqrt().max(SIGMA_FLOOR)
    } else {
        1.0
    }
}

/// Fits the conditional of dimension `d` with per-sample weights.
pub(crate) fn fit_conditional(
    train: &Dataset,
    d: usize,
    w: &SampleWeights,
    cfg: &SolverConfig,
    intercept: bool,
    warm: Option<&SparseWeights>,
) -> Result<(Conditional, FitStatus)> {
    let x = train.predictors(d);
    let y = train.column(d);
    match train.kind() {
        DataKind::Binary => {
            let fit = fit_logistic_l1(x, y, w, cfg, warm)?;
            Ok((
                Conditional::Logistic(LogisticConditional { weights: fit.value }),
                fit.status,
            ))
        }
        DataKind::Continuous => {
            let fit = if intercept {
                fit_linear_l1_with_intercept(x, y, w, cfg, warm)?
            } else {
                fit_linear_l1(x, y, w, cfg, warm)?
            };
            let sigma = residual_sigma(y, w.as_slice(), &fit.value, &x);
            Ok((
                Conditional::Gaussian(GaussianConditional {
                    weights: fit.value,
                    sigma,
                }),
                fit.status,
            ))
        }
    }
}

impl AutoregressiveNet {
    pub fn new(kind: DataKind, conditionals: Vec<Conditional>, meta: Option<EncodingMeta>) -> Result<Self> {
        if conditionals.is_empty() {
            return Err(Error::invalid("a network needs at least one dimension"));
        }
        for (d, c) in conditionals.iter().enumerate() {
            if c.weights().max_index().is_some_and(|j| j >= d) {
                return Err(Error::invalid(format!(
                    "conditional {d} references a later dimension"
                )));
            }
            let ok = match (kind, c) {
                (DataKind::Binary, Conditional::Logistic(_)) => true,
                (DataKind::Continuous, Conditional::Gaussian(g)) => g.sigma >= SIGMA_FLOOR,
                _ => false,
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "conditional {d} does not match a {} network",
                    kind.as_str()
                )));
            }
        }
        if let Some(m) = &meta {
            if m.dim() != conditionals.len() {
                return Err(Error::Dimension {
                    expected: conditionals.len(),
                    got: m.dim(),
                });
            }
        }
        Ok(Self {
            kind,
            conditionals,
            meta,
        })
    }

    /// The network with all weights zero: uniform bits or standard normals.
    pub fn independent(kind: DataKind, dim: usize) -> Self {
        let c = match kind {
            DataKind::Binary => Conditional::Logistic(LogisticConditional {
                weights: SparseWeights::zero(),
            }),
            DataKind::Continuous => Conditional::Gaussian(GaussianConditional {
                weights: SparseWeights::zero(),
                sigma: 1.0,
            }),
        };
        Self {
            kind,
            conditionals: vec![c; dim],
            meta: None,
        }
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.conditionals.len()
    }

    pub fn conditionals(&self) -> &[Conditional] {
        &self.conditionals
    }

    pub fn meta(&self) -> Option<&EncodingMeta> {
        self.meta.as_ref()
    }

    pub fn nnz(&self) -> usize {
        self.conditionals.iter().map(|c| c.weights().nnz()).sum()
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

    /// Per-dimension log conditional probabilities of one encoded sample.
    pub fn loglik_terms(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self
            .conditionals
            .iter()
            .enumerate()
            .map(|(d, c)| c.log_prob(x[d], x))
            .collect())
    }

    /// Exact log-likelihood of one encoded sample in nats.
    pub fn loglik(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self
            .conditionals
            .iter()
            .enumerate()
            .map(|(d, c)| c.log_prob(x[d], x))
            .sum())
    }

    /// Log-likelihood of every row of `data`.
    pub fn loglik_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: data.dim(),
            });
        }
        (0..data.n())
            .into_par_iter()
            .map(|i| self.loglik(&data.row(i)))
            .collect()
    }

    /// Ancestral sample, deterministic in `seed`.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for c in &self.conditionals {
            let v = c.sample(&x, rng);
            x.push(v);
        }
        x
    }
}

/// Fits every conditional of `train` independently (in parallel on the
/// current rayon pool). Dimension 0 is intercept-only (binary) or
/// variance-only (continuous).
pub fn fit_arn(train: &Dataset, cfg: &SolverConfig) -> Result<ArnFit> {
    fit_arn_warm(train, cfg, None)
}

/// [`fit_arn`] warm-started from an earlier network (e.g. the previous point
/// of a decreasing penalty path).
pub fn fit_arn_warm(train: &Dataset, cfg: &SolverConfig, warm: Option<&AutoregressiveNet>) -> Result<ArnFit> {
    cfg.validate()?;
    if let Some(w) = warm {
        if w.dim() != train.dim() || w.kind() != train.kind() {
            return Err(Error::invalid("warm start does not match the training data"));
        }
    }
    let weights = SampleWeights::uniform(train.n());
    let fits: Vec<(Conditional, FitStatus)> = (0..train.dim())
        .into_par_iter()
        .map(|d| {
            let ws = warm.map(|w| w.conditionals[d].weights());
            fit_conditional(train, d, &weights, cfg, false, ws)
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let mut conditionals = Vec::with_capacity(fits.len());
    for (d, (c, status)) in fits.into_iter().enumerate() {
        if !status.converged {
            warnings.push(SolverWarning {
                dim: d,
                component: None,
                status,
            });
        }
        conditionals.push(c);
    }
    Ok(ArnFit {
        model: AutoregressiveNet {
            kind: train.kind(),
            conditionals,
            meta: train.meta().cloned(),
        },
        warnings,
    })
}

/// Fits a decreasing penalty path, each point warm-started from the previous.
pub fn fit_arn_path(train: &Dataset, lambdas: &[f64], base: &SolverConfig) -> Result<Vec<ArnFit>> {
    let mut out: Vec<ArnFit> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = SolverConfig { lambda, ..*base };
        let fit = fit_arn_warm(train, &cfg, out.last().map(|f| &f.model))?;
        out.push(fit);
    }
    Ok(out)
}

/// The largest per-dimension λ_max, so that one shared penalty zeroes every
/// dependency weight of the network.
pub fn arn_lambda_max(train: &Dataset, intercept_scale: f64) -> Result<f64> {
    let w = SampleWeights::uniform(train.n());
    let family = match train.kind() {
        DataKind::Binary => Family::Logistic,
        DataKind::Continuous => Family::Linear,
    };
    let per_dim: Vec<f64> = (1..train.dim())
        .into_par_iter()
        .map(|d| {
            solvers::lambda_max(train.predictors(d), train.column(d), &w, family, false, intercept_scale)
        })
        .collect::<Result<_>>()?;
    Ok(per_dim.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode_binary, RawMatrix};

    #[test]
    fn uniform_binary_loglik() {
        let net = AutoregressiveNet::independent(DataKind::Binary, 2);
        for x in [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0]] {
            assert!((net.loglik(&x).unwrap() + 2.0 * 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn standard_normal_mode() {
        let net = AutoregressiveNet::independent(DataKind::Continuous, 1);
        let expect = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((net.loglik(&[0.0]).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let net = AutoregressiveNet::independent(DataKind::Binary, 3);
        assert!(matches!(net.loglik(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rejects_non_causal_conditionals() {
        let c = Conditional::Logistic(LogisticConditional {
            weights: SparseWeights::new(0.0, vec![(1, 1.0)]).unwrap(),
        });
        assert!(AutoregressiveNet::new(DataKind::Binary, vec![c.clone(), c], None).is_err());
    }

    #[test]
    fn all_ones_column_keeps_probability_below_one() {
        let raw = RawMatrix::from_rows(&vec![vec![1.0]; 20]).unwrap();
        let data = encode_binary(&raw).unwrap();
        let fit = fit_arn(&data, &SolverConfig::with_lambda(1.0)).unwrap();
        let p = fit.model.loglik(&[1.0]).unwrap().exp();
        assert!(p > 0.5 && p < 1.0, "p = {p}");
    }

    #[test]
    fn same_seed_same_sample() {
        let net = AutoregressiveNet::independent(DataKind::Continuous, 5);
        assert_eq!(net.sample(7), net.sample(7));
        assert_ne!(net.sample(7), net.sample(8));
    }
}
