//! Multiclass logistic gates trained on soft labels.
//!
//! The last class is the reference class with weights pinned at zero. Each
//! outer iteration visits the free classes in order and takes a proximal
//! Newton step in that class's parameters with backtracking on the full
//! penalized soft-label cross-entropy.

use super::engine::{Layout, Params, Quad};
use super::{check_rows, Fitted, FitStatus, SampleWeights, SolverConfig, SparseWeights};
use crate::data::ColMatrix;
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, MIN_CURVATURE};

/// Per-class linear scores of a softmax gate; the last class is all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights {
    classes: Vec<SparseWeights>,
}

impl GateWeights {
    /// The gate with a single class (probability one).
    pub fn trivial() -> Self {
        Self {
            classes: vec![SparseWeights::zero()],
        }
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            classes: vec![SparseWeights::zero(); k.max(1)],
        }
    }

    /// Intercept-only gate reproducing the given class probabilities.
    pub fn from_probabilities(probs: &[f64]) -> Self {
        let last = probs[probs.len() - 1].ln();
        Self {
            classes: probs
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    if k + 1 == probs.len() {
                        SparseWeights::zero()
                    } else {
                        SparseWeights::intercept_only(p.ln() - last)
                    }
                })
                .collect(),
        }
    }

    pub fn new(classes: Vec<SparseWeights>) -> Result<Self> {
        match classes.last() {
            None => Err(Error::invalid("a gate needs at least one class")),
            Some(r) if r.intercept != 0.0 || r.nnz() != 0 => {
                Err(Error::invalid("the reference (last) gate class must be zero"))
            }
            _ => Ok(Self { classes }),
        }
    }

    pub fn classes(&self) -> &[SparseWeights] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.classes.iter().filter_map(|c| c.max_index()).max()
    }

    pub fn penalty(&self, lambda: f64, lambda0: f64) -> f64 {
        self.classes
            .iter()
            .map(|c| lambda0 * c.intercept.abs() + lambda * c.l1_norm())
            .sum()
    }

    /// Log class probabilities for one sample (`x` needs at least as many
    /// entries as the largest referenced predictor).
    pub fn log_probs(&self, x: &[f64]) -> Vec<f64> {
        let scores: Vec<f64> = self.classes.iter().map(|c| c.score(x)).collect();
        let z = log_sum_exp(&scores);
        scores.into_iter().map(|s| s - z).collect()
    }
}

fn soft_label_loss(scores: &[Vec<f64>], targets: &[&[f64]], w: &[f64]) -> f64 {
    let k = scores.len();
    let mut row = vec![0.0; k];
    let mut total = 0.0;
    for (n, wn) in w.iter().enumerate() {
        if *wn == 0.0 {
            continue;
        }
        let mut lin = 0.0;
        for c in 0..k {
            row[c] = scores[c][n];
            lin += targets[c][n] * row[c];
        }
        total += wn * (log_sum_exp(&row) - lin);
    }
    total
}

fn probabilities(scores: &[Vec<f64>], class: usize, out: &mut [f64]) {
    let k = scores.len();
    let mut row = vec![0.0; k];
    for (n, o) in out.iter_mut().enumerate() {
        for c in 0..k {
            row[c] = scores[c][n];
        }
        *o = (row[class] - log_sum_exp(&row)).exp();
    }
}

/// Fits a K-class softmax gate to soft labels `targets` (K columns of length
/// N, rows summing to one) with penalty `λ₀Σ|intercept| + λΣ‖weights‖₁`.
pub fn fit_multiclass_gate(
    x: ColMatrix<'_>,
    targets: &[&[f64]],
    w: &SampleWeights,
    cfg: &SolverConfig,
    warm: Option<&GateWeights>,
) -> Result<Fitted<GateWeights>> {
    cfg.validate()?;
    let k = targets.len();
    if k < 2 {
        return Ok(Fitted {
            value: GateWeights::trivial(),
            status: FitStatus {
                converged: true,
                sweeps: 0,
                outer: 0,
            },
        });
    }
    check_rows(x, w.len(), "sample weights")?;
    for t in targets {
        check_rows(x, t.len(), "soft targets")?;
    }
    let n = x.n();
    let p = x.p();
    let layout = Layout::SINGLE;
    let mut params: Vec<Params> = match warm {
        Some(g) if g.len() == k => {
            if g.max_index().is_some_and(|j| j >= p) {
                return Err(Error::invalid("warm gate references a predictor out of range"));
            }
            g.classes[..k - 1]
                .iter()
                .map(|c| {
                    let mut pr = Params::zeros(layout, 1, p);
                    pr.a0 = c.intercept;
                    pr.a = c.to_dense(p);
                    pr
                })
                .collect()
        }
        Some(_) => return Err(Error::invalid("warm gate has the wrong number of classes")),
        None => vec![Params::zeros(layout, 1, p); k - 1],
    };
    let (lambda, lambda0) = (cfg.lambda, cfg.lambda0());
    let mut scores: Vec<Vec<f64>> = vec![vec![0.0; n]; k];
    for (c, pr) in params.iter().enumerate() {
        pr.eta(x, 0, &mut scores[c]);
    }
    let weights = w.as_slice();
    let penalty = |ps: &[Params]| ps.iter().map(|p| p.penalty(lambda, lambda0)).sum::<f64>();
    let mut f = soft_label_loss(&scores, targets, weights) + penalty(&params);
    let mut status = FitStatus::default();
    let mut prob = vec![0.0; n];
    for outer in 0..cfg.max_outer_newton {
        status.outer = outer + 1;
        let mut max_change = 0.0f64;
        let mut inner_ok = true;
        for c in 0..k - 1 {
            probabilities(&scores, c, &mut prob);
            let h: Vec<f64> = prob
                .iter()
                .zip(weights)
                .map(|(p, w)| w * (p * (1.0 - p)).max(MIN_CURVATURE))
                .collect();
            let v: Vec<f64> = prob
                .iter()
                .zip(targets[c])
                .zip(weights)
                .map(|((p, t), w)| w * (t - p))
                .collect();
            let mut quad = Quad::new(x, layout, lambda, lambda0, vec![h], vec![v]);
            let mut cand = params[c].clone();
            let (sweeps, ok) = quad.solve(&mut cand, cfg.tol, cfg.max_sweeps);
            status.sweeps += sweeps;
            inner_ok &= ok;
            let saved = std::mem::take(&mut scores[c]);
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-12 {
                let trial = params[c].lerp(&cand, t);
                let mut col = vec![0.0; n];
                trial.eta(x, 0, &mut col);
                scores[c] = col;
                let ft = soft_label_loss(&scores, targets, weights) - params[c].penalty(lambda, lambda0)
                    + trial.penalty(lambda, lambda0)
                    + penalty(&params);
                if ft <= f {
                    accepted = Some((trial, ft));
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((trial, ft)) => {
                    max_change = max_change.max(quad.scaled_distance(&params[c], &trial));
                    params[c] = trial;
                    f = ft;
                }
                None => scores[c] = saved,
            }
        }
        if max_change < cfg.tol && inner_ok {
            status.converged = true;
            break;
        }
    }
    let mut classes: Vec<SparseWeights> = params
        .iter()
        .map(|p| SparseWeights::from_dense(p.a0, &p.a))
        .collect();
    classes.push(SparseWeights::zero());
    Ok(Fitted {
        value: GateWeights { classes },
        status,
    })
}
