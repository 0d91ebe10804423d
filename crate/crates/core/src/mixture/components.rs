//! Per-dimension parameter bundles of K components and their evaluation.

use rand::Rng;
use rayon::prelude::*;

use super::SharingMode;
use crate::arn::{Conditional, GaussianConditional, LogisticConditional, SIGMA_FLOOR};
use crate::data::{DataKind, Dataset};
use crate::error::{Error, Result};
use crate::math::{log_sigmoid, normal_log_density};
use crate::solvers::{SharedWeights, SolverConfig, SparseWeights, TiedWeights};

/// Rows per parallel evaluation chunk.
const CHUNK: usize = 512;

/// The K conditionals of one dimension in their mode-specific form.
#[derive(Debug, Clone, PartialEq)]
pub enum DimParams {
    Untied(Vec<SparseWeights>),
    Tied(TiedWeights),
    Auto(SharedWeights),
}

impl DimParams {
    pub fn mode(&self) -> SharingMode {
        match self {
            DimParams::Untied(_) => SharingMode::Untied,
            DimParams::Tied(_) => SharingMode::Tied,
            DimParams::Auto(_) => SharingMode::Auto,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            DimParams::Untied(w) => w.len(),
            DimParams::Tied(t) => t.intercepts.len(),
            DimParams::Auto(s) => s.deviations.len(),
        }
    }

    /// Effective weights of component `k` (shared and deviation parts summed).
    pub fn component(&self, k: usize) -> SparseWeights {
        match self {
            DimParams::Untied(w) => w[k].clone(),
            DimParams::Tied(t) => t.component(k),
            DimParams::Auto(s) => s.component(k),
        }
    }

    /// `λ₀·Σ|intercepts| + λ·Σ‖weights‖₁` over every stored parameter.
    pub fn penalty(&self, lambda: f64, lambda0: f64) -> f64 {
        let one = |w: &SparseWeights| lambda0 * w.intercept.abs() + lambda * w.l1_norm();
        match self {
            DimParams::Untied(ws) => ws.iter().map(one).sum(),
            DimParams::Tied(t) => {
                lambda0 * t.intercepts.iter().map(|b| b.abs()).sum::<f64>() + one(&t.shared)
            }
            DimParams::Auto(s) => one(&s.global) + s.deviations.iter().map(one).sum::<f64>(),
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        match self {
            DimParams::Untied(ws) => ws.iter().filter_map(|w| w.max_index()).max(),
            DimParams::Tied(t) => t.shared.max_index(),
            DimParams::Auto(s) => s
                .deviations
                .iter()
                .filter_map(|w| w.max_index())
                .chain(s.global.max_index())
                .max(),
        }
    }

    /// Nonzero dependency weights over all stored parameters.
    pub fn nnz(&self) -> usize {
        match self {
            DimParams::Untied(ws) => ws.iter().map(|w| w.nnz()).sum(),
            DimParams::Tied(t) => t.shared.nnz(),
            DimParams::Auto(s) => s.global.nnz() + s.deviations.iter().map(|w| w.nnz()).sum::<usize>(),
        }
    }

    /// Expresses a single fitted conditional (K = 1) in the given mode.
    pub(crate) fn from_single(mode: SharingMode, w: SparseWeights) -> Self {
        match mode {
            SharingMode::Untied => DimParams::Untied(vec![w]),
            SharingMode::Tied => DimParams::Tied(TiedWeights {
                intercepts: vec![w.intercept],
                shared: w.with_intercept(0.0),
            }),
            SharingMode::Auto => DimParams::Auto(SharedWeights {
                global: w,
                deviations: vec![SparseWeights::zero()],
            }),
        }
    }
}

/// K component networks over the contiguous dimensions `start..start+len`,
/// whose conditionals may use every earlier dimension as a predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    kind: DataKind,
    mode: SharingMode,
    start: usize,
    params: Vec<DimParams>,
    /// `sigma[d][k]`, empty for binary data.
    sigma: Vec<Vec<f64>>,
    /// Assembled weights `effective[d][k]`.
    effective: Vec<Vec<SparseWeights>>,
}

impl ComponentSet {
    pub fn new(
        kind: DataKind,
        start: usize,
        params: Vec<DimParams>,
        sigma: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let first = params
            .first()
            .ok_or_else(|| Error::invalid("a component set needs at least one dimension"))?;
        let (mode, k) = (first.mode(), first.k());
        if k == 0 {
            return Err(Error::invalid("a component set needs at least one component"));
        }
        for (i, p) in params.iter().enumerate() {
            let d = start + i;
            if p.mode() != mode || p.k() != k {
                return Err(Error::invalid(format!(
                    "dimension {d} does not match mode {mode} with {k} components"
                )));
            }
            if p.max_index().is_some_and(|j| j >= d) {
                return Err(Error::invalid(format!(
                    "dimension {d} references a later dimension"
                )));
            }
        }
        let sigma = match (kind, sigma) {
            (DataKind::Binary, None) => vec![Vec::new(); params.len()],
            (DataKind::Continuous, Some(s)) => {
                if s.len() != params.len()
                    || s.iter().any(|row| row.len() != k || row.iter().any(|v| !(*v >= SIGMA_FLOOR)))
                {
                    return Err(Error::invalid(format!(
                        "continuous components need one sigma ≥ {SIGMA_FLOOR} per component and dimension"
                    )));
                }
                s
            }
            (DataKind::Binary, Some(_)) => {
                return Err(Error::invalid("binary components take no sigma"))
            }
            (DataKind::Continuous, None) => {
                return Err(Error::invalid("continuous components need sigma values"))
            }
        };
        let effective = params
            .iter()
            .map(|p| (0..k).map(|h| p.component(h)).collect())
            .collect();
        Ok(Self {
            kind,
            mode,
            start,
            params,
            sigma,
            effective,
        })
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn mode(&self) -> SharingMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.effective[0].len()
    }

    /// First dimension covered.
    pub fn start(&self) -> usize {
        self.start
    }

    /// One past the last dimension covered.
    pub fn end(&self) -> usize {
        self.start + self.params.len()
    }

    pub fn params(&self) -> &[DimParams] {
        &self.params
    }

    /// Parameters of absolute dimension `d`.
    pub fn dim_params(&self, d: usize) -> &DimParams {
        &self.params[d - self.start]
    }

    pub fn sigma(&self, d: usize, k: usize) -> Option<f64> {
        self.sigma[d - self.start].get(k).copied()
    }

    /// Assembled weights of component `k` for absolute dimension `d`.
    pub fn effective(&self, d: usize, k: usize) -> &SparseWeights {
        &self.effective[d - self.start][k]
    }

    /// The assembled conditional of component `k` for absolute dimension `d`.
    pub fn conditional(&self, d: usize, k: usize) -> Conditional {
        let weights = self.effective(d, k).clone();
        match self.kind {
            DataKind::Binary => Conditional::Logistic(LogisticConditional { weights }),
            DataKind::Continuous => Conditional::Gaussian(GaussianConditional {
                weights,
                sigma: self.sigma[d - self.start][k],
            }),
        }
    }

    pub fn nnz(&self) -> usize {
        self.params.iter().map(DimParams::nnz).sum()
    }

    pub fn penalty(&self, cfg: &SolverConfig) -> f64 {
        let (lambda, lambda0) = (cfg.lambda, cfg.lambda0());
        self.params.iter().map(|p| p.penalty(lambda, lambda0)).sum()
    }

    #[inline]
    fn log_prob(&self, local: usize, k: usize, value: f64, eta: f64) -> f64 {
        match self.kind {
            DataKind::Binary => log_sigmoid(value * eta),
            DataKind::Continuous => normal_log_density(value, eta, self.sigma[local][k]),
        }
    }

    /// `Σ_{d ∈ block} log P(x_d | x_{<d}, h = k)` for one sample covering at
    /// least `0..end`.
    pub fn loglik(&self, x: &[f64], k: usize) -> f64 {
        self.effective
            .iter()
            .enumerate()
            .map(|(i, eff)| self.log_prob(i, k, x[self.start + i], eff[k].score(x)))
            .sum()
    }

    /// Block log-likelihood of every row of `data` under every component
    /// (K vectors of length N). Parallel over components and row chunks;
    /// each entry sums its dimensions in order, so the result does not
    /// depend on the thread count.
    pub fn component_logliks(&self, data: &Dataset) -> Vec<Vec<f64>> {
        let n = data.n();
        let chunks: Vec<(usize, usize)> = (0..n.div_ceil(CHUNK))
            .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
            .collect();
        (0..self.k())
            .map(|k| {
                let parts: Vec<Vec<f64>> = chunks
                    .par_iter()
                    .map(|&(lo, hi)| self.chunk_loglik(data, k, lo, hi))
                    .collect();
                parts.concat()
            })
            .collect()
    }

    fn chunk_loglik(&self, data: &Dataset, k: usize, lo: usize, hi: usize) -> Vec<f64> {
        let mut acc = vec![0.0; hi - lo];
        let mut eta = vec![0.0; hi - lo];
        for (i, eff) in self.effective.iter().enumerate() {
            let w = &eff[k];
            eta.fill(w.intercept);
            for &(j, c) in w.entries() {
                for (e, v) in eta.iter_mut().zip(&data.column(j)[lo..hi]) {
                    *e += c * v;
                }
            }
            let y = &data.column(self.start + i)[lo..hi];
            for ((a, e), v) in acc.iter_mut().zip(&eta).zip(y) {
                *a += self.log_prob(i, k, *v, *e);
            }
        }
        acc
    }

    /// Appends the block's dimensions to `x` (which must already hold
    /// `0..start`) by ancestral sampling from component `k`.
    pub fn sample_into<R: Rng + ?Sized>(&self, x: &mut Vec<f64>, k: usize, rng: &mut R) {
        debug_assert_eq!(x.len(), self.start);
        for d in self.start..self.end() {
            let v = self.conditional(d, k).sample(x, rng);
            x.push(v);
        }
    }
}
