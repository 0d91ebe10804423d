//! Weighted L1-penalized regressions solved by cyclic coordinate descent.
//!
//! Dependency weights are penalized with `lambda`; intercepts with the weaker
//! `lambda0 = lambda / intercept_scale`. All solvers are single-threaded,
//! deterministic and accept a warm start.

mod engine;
mod gate;
mod path;

pub use engine::{Family, FitStatus};
pub use gate::{fit_multiclass_gate, GateWeights};
pub use path::{lambda_grid, lambda_max, lambda_max_gate};

pub(crate) use engine::{Layout, Params, Problem};

use crate::data::ColMatrix;
use crate::error::{Error, Result};

pub use crate::math::soft_threshold;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// L1 strength on dependency weights.
    pub lambda: f64,
    /// Ratio between the weight penalty and the intercept penalty.
    pub intercept_scale: f64,
    /// Stop when the largest scaled coordinate change in a sweep is below this.
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_outer_newton: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            intercept_scale: 10.0,
            tol: 1e-6,
            max_sweeps: 1000,
            max_outer_newton: 50,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda / self.intercept_scale
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.intercept_scale >= 1.0) {
            return Err(Error::invalid(format!(
                "intercept_scale must be >= 1, got {}",
                self.intercept_scale
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        if self.max_sweeps == 0 || self.max_outer_newton == 0 {
            return Err(Error::invalid("iteration limits must be positive"));
        }
        Ok(())
    }

    fn problem<'a>(
        &self,
        x: ColMatrix<'a>,
        targets: Vec<&'a [f64]>,
        weights: Vec<&'a [f64]>,
        family: Family,
        layout: Layout,
    ) -> Problem<'a> {
        Problem {
            x,
            targets,
            weights,
            family,
            layout,
            lambda: self.lambda,
            lambda0: self.lambda0(),
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            max_outer: self.max_outer_newton,
        }
    }
}

/// Intercept plus a sorted sparse list of nonzero dependency weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseWeights {
    pub intercept: f64,
    entries: Vec<(usize, f64)>,
}

impl SparseWeights {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn intercept_only(intercept: f64) -> Self {
        Self {
            intercept,
            entries: Vec::new(),
        }
    }

    /// Builds from (index, value) pairs; zeros are dropped, indices must be
    /// strictly increasing.
    pub fn new(intercept: f64, entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut out = Vec::with_capacity(entries.len());
        let mut last = None;
        for (j, v) in entries {
            if last.is_some_and(|l| j <= l) {
                return Err(Error::invalid("sparse indices must be strictly increasing"));
            }
            last = Some(j);
            if !v.is_finite() {
                return Err(Error::invalid(format!("weight {j} is not finite")));
            }
            if v != 0.0 {
                out.push((j, v));
            }
        }
        Ok(Self {
            intercept,
            entries: out,
        })
    }

    pub fn from_dense(intercept: f64, dense: &[f64]) -> Self {
        Self {
            intercept,
            entries: dense
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.entries
            .binary_search_by_key(&j, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|e| e.0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1.abs()).sum()
    }

    pub fn to_dense(&self, p: usize) -> Vec<f64> {
        let mut v = vec![0.0; p];
        for &(j, w) in &self.entries {
            v[j] = w;
        }
        v
    }

    /// Intercept + weights·x over the first predictors of `x`.
    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        self.entries
            .iter()
            .fold(self.intercept, |acc, &(j, w)| acc + w * x[j])
    }

    /// The same dependency weights with a different intercept.
    pub fn with_intercept(&self, intercept: f64) -> SparseWeights {
        SparseWeights {
            intercept,
            entries: self.entries.clone(),
        }
    }

    /// Element-wise sum; used to assemble shared + deviation parameters.
    pub fn plus(&self, other: &SparseWeights) -> SparseWeights {
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&(ia, va)), Some(&(ib, vb))) if ia == ib => {
                    i += 1;
                    j += 1;
                    (ia, va + vb)
                }
                (Some(&(ia, va)), Some(&(ib, _))) if ia < ib => {
                    i += 1;
                    (ia, va)
                }
                (Some(_), Some(&(ib, vb))) => {
                    j += 1;
                    (ib, vb)
                }
                (Some(&e), None) => {
                    i += 1;
                    e
                }
                (None, Some(&e)) => {
                    j += 1;
                    e
                }
                (None, None) => unreachable!(),
            };
            if next.1 != 0.0 {
                out.push(next);
            }
        }
        SparseWeights {
            intercept: self.intercept + other.intercept,
            entries: out,
        }
    }
}

/// Nonnegative per-sample weights with positive total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights(Vec<f64>);

impl SampleWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("sample weights must be finite and nonnegative"));
        }
        if !w.iter().any(|v| *v > 0.0) {
            return Err(Error::invalid("at least one sample weight must be positive"));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A solver result; `status.converged == false` marks an iteration-limit
/// warning, the value is still the last (objective-monotone) iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted<T> {
    pub value: T,
    pub status: FitStatus,
}

/// Global weights plus per-component deviations (automatic sharing).
#[derive(Debug, Clone, PartialEq)]
pub struct SharedWeights {
    pub global: SparseWeights,
    pub deviations: Vec<SparseWeights>,
}

impl SharedWeights {
    pub fn component(&self, k: usize) -> SparseWeights {
        self.global.plus(&self.deviations[k])
    }
}

/// Shared dependency weights with one intercept per component.
#[derive(Debug, Clone, PartialEq)]
pub struct TiedWeights {
    pub intercepts: Vec<f64>,
    pub shared: SparseWeights,
}

impl TiedWeights {
    pub fn component(&self, k: usize) -> SparseWeights {
        SparseWeights {
            intercept: self.intercepts[k],
            entries: self.shared.entries.clone(),
        }
    }
}

fn check_rows(x: ColMatrix<'_>, len: usize, what: &str) -> Result<()> {
    if len != x.n() {
        return Err(Error::invalid(format!(
            "{what} has length {len}, predictors have {} rows",
            x.n()
        )));
    }
    Ok(())
}

fn check_labels(y: &[f64]) -> Result<()> {
    if let Some(v) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(Error::invalid(format!("logistic labels must be ±1, found {v}")));
    }
    Ok(())
}

fn check_weights_fit(x: ColMatrix<'_>, w: &SparseWeights) -> Result<()> {
    if w.max_index().is_some_and(|j| j >= x.p()) {
        return Err(Error::invalid("warm start references a predictor out of range"));
    }
    Ok(())
}

fn single_params(layout: Layout, p: usize, warm: Option<&SparseWeights>) -> Option<Params> {
    warm.map(|w| {
        let mut params = Params::zeros(layout, 1, p);
        if layout.global_intercept {
            params.a0 = w.intercept;
        }
        params.a = w.to_dense(p);
        params
    })
}

fn single_fit(
    x: ColMatrix<'_>,
    y: &[f64],
    w: &SampleWeights,
    cfg: &SolverConfig,
    warm: Option<&SparseWeights>,
    family: Family,
    layout: Layout,
) -> Result<Fitted<SparseWeights>> {
    cfg.validate()?;
    check_rows(x, y.len(), "target")?;
    check_rows(x, w.len(), "sample weights")?;
    if let Some(ws) = warm {
        check_weights_fit(x, ws)?;
    }
    let prob = cfg.problem(x, vec![y], vec![w.as_slice()], family, layout);
    let (params, status) = prob.solve(single_params(layout, x.p(), warm));
    Ok(Fitted {
        value: SparseWeights::from_dense(params.a0, &params.a),
        status,
    })
}

/// Weighted lasso `½ Σ w (y − αᵀx)² + λ‖α‖₁` without intercept.
pub fn fit_linear_l1(
    x: ColMatrix<'_>,
    y: &[f64],
    w: &SampleWeights,
    cfg: &SolverConfig,
    warm: Option<&SparseWeights>,
) -> Result<Fitted<SparseWeights>> {
    single_fit(x, y, w, cfg, warm, Family::Linear, Layout::SINGLE_NO_INTERCEPT)
}

/// Weighted lasso with an intercept penalized at `lambda0`.
pub fn fit_linear_l1_with_intercept(
    x: ColMatrix<'_>,
    y: &[f64],
    w: &SampleWeights,
    cfg: &SolverConfig,
    warm: Option<&SparseWeights>,
) -> Result<Fitted<SparseWeights>> {
    single_fit(x, y, w, cfg, warm, Family::Linear, Layout::SINGLE)
}

/// Weighted L1 logistic regression with labels ±1:
/// `Σ w log(1 + exp(−y(α₀ + αᵀx))) + λ₀|α₀| + λ‖α‖₁`.
///
/// Requires `lambda0 > 0`; an unpenalized intercept diverges on separable
/// labels (e.g. a constant column).
pub fn fit_logistic_l1(
    x: ColMatrix<'_>,
    y: &[f64],
    w: &SampleWeights,
    cfg: &SolverConfig,
    warm: Option<&SparseWeights>,
) -> Result<Fitted<SparseWeights>> {
    check_labels(y)?;
    if !(cfg.lambda0() > 0.0) {
        return Err(Error::invalid(
            "logistic fits need a positive intercept penalty (lambda > 0)",
        ));
    }
    single_fit(x, y, w, cfg, warm, Family::Logistic, Layout::SINGLE)
}

fn group_inputs<'a>(
    x: ColMatrix<'a>,
    family: Family,
    targets: &[&'a [f64]],
    resp: &[&'a [f64]],
    cfg: &SolverConfig,
) -> Result<()> {
    cfg.validate()?;
    if resp.is_empty() {
        return Err(Error::invalid("need at least one component"));
    }
    if targets.len() != 1 && targets.len() != resp.len() {
        return Err(Error::invalid("targets must be shared or given per component"));
    }
    for t in targets {
        check_rows(x, t.len(), "target")?;
        if family == Family::Logistic {
            check_labels(t)?;
        }
    }
    let mut mass = 0.0;
    for r in resp {
        check_rows(x, r.len(), "responsibilities")?;
        if r.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("responsibilities must be nonnegative"));
        }
        mass += r.iter().sum::<f64>();
    }
    if !(mass > 0.0) {
        return Err(Error::invalid("responsibilities have no mass"));
    }
    if family == Family::Logistic && !(cfg.lambda0() > 0.0) {
        return Err(Error::invalid(
            "logistic fits need a positive intercept penalty (lambda > 0)",
        ));
    }
    Ok(())
}

/// Automatic parameter sharing: component `h` uses
/// `(α₀ + β₀ʰ) + (α + βʰ)ᵀx`, with penalty
/// `λ₀|α₀| + λ₀Σ|β₀ʰ| + λ‖α‖₁ + λΣ‖βʰ‖₁`, and each component's rows weighted
/// by its responsibility column.
///
/// With `intercepts == false` (linear family on centered data) all intercepts
/// stay at zero.
pub fn fit_auto_shared(
    x: ColMatrix<'_>,
    family: Family,
    targets: &[&[f64]],
    resp: &[&[f64]],
    cfg: &SolverConfig,
    intercepts: bool,
    warm: Option<&SharedWeights>,
) -> Result<Fitted<SharedWeights>> {
    group_inputs(x, family, targets, resp, cfg)?;
    let k = resp.len();
    let p = x.p();
    let layout = if intercepts {
        Layout::AUTO
    } else {
        Layout {
            global_intercept: false,
            group_intercepts: false,
            ..Layout::AUTO
        }
    };
    let warm = match warm {
        Some(ws) if ws.deviations.len() == k => {
            check_weights_fit(x, &ws.global)?;
            let mut params = Params::zeros(layout, k, p);
            if intercepts {
                params.a0 = ws.global.intercept;
                params.b0 = ws.deviations.iter().map(|d| d.intercept).collect();
            }
            params.a = ws.global.to_dense(p);
            for (row, d) in params.b.iter_mut().zip(&ws.deviations) {
                check_weights_fit(x, d)?;
                *row = d.to_dense(p);
            }
            Some(params)
        }
        Some(_) => return Err(Error::invalid("warm start has the wrong number of components")),
        None => None,
    };
    let prob = cfg.problem(x, targets.to_vec(), resp.to_vec(), family, layout);
    let (params, status) = prob.solve(warm);
    let deviations = (0..k)
        .map(|h| SparseWeights::from_dense(params.b0.get(h).copied().unwrap_or(0.0), &params.b[h]))
        .collect();
    Ok(Fitted {
        value: SharedWeights {
            global: SparseWeights::from_dense(params.a0, &params.a),
            deviations,
        },
        status,
    })
}

/// Shared dependency weights (penalty `λ`) with per-component intercepts
/// (penalty `λ₀`), all components' rows weighted by their responsibilities.
pub fn fit_tied(
    x: ColMatrix<'_>,
    family: Family,
    targets: &[&[f64]],
    resp: &[&[f64]],
    cfg: &SolverConfig,
    warm: Option<&TiedWeights>,
) -> Result<Fitted<TiedWeights>> {
    group_inputs(x, family, targets, resp, cfg)?;
    let k = resp.len();
    let p = x.p();
    let layout = Layout::TIED;
    let warm = match warm {
        Some(ws) if ws.intercepts.len() == k => {
            check_weights_fit(x, &ws.shared)?;
            let mut params = Params::zeros(layout, k, p);
            params.b0 = ws.intercepts.clone();
            params.a = ws.shared.to_dense(p);
            Some(params)
        }
        Some(_) => return Err(Error::invalid("warm start has the wrong number of components")),
        None => None,
    };
    let prob = cfg.problem(x, targets.to_vec(), resp.to_vec(), family, layout);
    let (params, status) = prob.solve(warm);
    Ok(Fitted {
        value: TiedWeights {
            intercepts: params.b0,
            shared: SparseWeights::from_dense(0.0, &params.a),
        },
        status,
    })
}

/// Penalized objective of a single weighted fit, for diagnostics and tests.
pub fn single_objective(
    x: ColMatrix<'_>,
    y: &[f64],
    w: &SampleWeights,
    cfg: &SolverConfig,
    family: Family,
    weights: &SparseWeights,
) -> f64 {
    let layout = Layout::SINGLE;
    let prob = cfg.problem(x, vec![y], vec![w.as_slice()], family, layout);
    let mut params = Params::zeros(layout, 1, x.p());
    params.a0 = weights.intercept;
    params.a = weights.to_dense(x.p());
    prob.objective(&params)
}

/// Penalized objective of an auto-shared fit.
pub fn shared_objective(
    x: ColMatrix<'_>,
    family: Family,
    targets: &[&[f64]],
    resp: &[&[f64]],
    cfg: &SolverConfig,
    weights: &SharedWeights,
) -> f64 {
    let k = resp.len();
    let layout = Layout::AUTO;
    let prob = cfg.problem(x, targets.to_vec(), resp.to_vec(), family, layout);
    let mut params = Params::zeros(layout, k, x.p());
    params.a0 = weights.global.intercept;
    params.a = weights.global.to_dense(x.p());
    params.b0 = weights.deviations.iter().map(|d| d.intercept).collect();
    params.b = weights.deviations.iter().map(|d| d.to_dense(x.p())).collect();
    prob.objective(&params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(cols: &[&[f64]]) -> (Vec<f64>, usize, usize) {
        let n = cols[0].len();
        (cols.concat(), n, cols.len())
    }

    #[test]
    fn linear_examples() {
        let (buf, n, p) = mat(&[&[1.0, -1.0]]);
        let x = ColMatrix::new(&buf, n, p);
        let y = [2.0, -2.0];
        let w = SampleWeights::uniform(2);
        for (lambda, expect) in [(0.0, 2.0), (2.0, 1.0), (4.0, 0.0)] {
            let cfg = SolverConfig::with_lambda(lambda);
            let fit = fit_linear_l1(x, &y, &w, &cfg, None).unwrap();
            assert!((fit.value.get(0) - expect).abs() < 1e-12, "lambda {lambda}");
            assert!(fit.status.converged);
        }
    }

    #[test]
    fn logistic_intercept_only_dominated() {
        let x = ColMatrix::new(&[], 10, 0);
        let y = [1.0; 10];
        let w = SampleWeights::uniform(10);
        let cfg = SolverConfig::with_lambda(50.0);
        assert_eq!(cfg.lambda0(), 5.0);
        let fit = fit_logistic_l1(x, &y, &w, &cfg, None).unwrap();
        assert_eq!(fit.value.intercept, 0.0);
    }

    #[test]
    fn logistic_requires_intercept_penalty() {
        let x = ColMatrix::new(&[], 3, 0);
        let w = SampleWeights::uniform(3);
        let cfg = SolverConfig::with_lambda(0.0);
        assert!(fit_logistic_l1(x, &[1.0, 1.0, 1.0], &w, &cfg, None).is_err());
        let cfg = SolverConfig::with_lambda(1.0);
        assert!(fit_logistic_l1(x, &[1.0, 0.0, 1.0], &w, &cfg, None).is_err());
    }

    #[test]
    fn sparse_weights_rules() {
        assert!(SparseWeights::new(0.0, vec![(2, 1.0), (1, 1.0)]).is_err());
        let w = SparseWeights::new(0.5, vec![(0, 1.0), (3, 0.0), (4, -2.0)]).unwrap();
        assert_eq!(w.nnz(), 2);
        assert_eq!(w.get(4), -2.0);
        assert_eq!(w.get(3), 0.0);
        assert_eq!(w.score(&[1.0, 9.0, 9.0, 9.0, 1.0]), 0.5 + 1.0 - 2.0);
        let u = SparseWeights::new(1.0, vec![(1, 2.0), (4, 2.0)]).unwrap();
        let s = w.plus(&u);
        assert_eq!(s.intercept, 1.5);
        assert_eq!(s.entries(), &[(0, 1.0), (1, 2.0)]);
    }

    #[test]
    fn sample_weights_need_mass() {
        assert!(SampleWeights::new(vec![0.0, 0.0]).is_err());
        assert!(SampleWeights::new(vec![-1.0, 2.0]).is_err());
        assert!(SampleWeights::new(vec![0.0, 1e-12]).is_ok());
    }
}
