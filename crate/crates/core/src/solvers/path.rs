//! Penalty paths: the smallest penalty that zeroes every dependency weight and
//! the log-spaced grid below it.

use super::engine::{dot, Family};
use super::gate::fit_multiclass_gate;
use super::{check_rows, SampleWeights, SolverConfig};
use crate::data::ColMatrix;
use crate::error::Result;
use crate::math::{sigmoid, soft_threshold};

const BISECTION_STEPS: usize = 80;

/// Largest absolute correlation of the predictors with a per-sample vector.
fn max_abs_corr(x: ColMatrix<'_>, v: &[f64]) -> f64 {
    (0..x.p()).map(|j| dot(x.col(j), v).abs()).fold(0.0, f64::max)
}

/// 1-D penalized logistic intercept `argmin Σ w log(1+exp(−y a)) + λ₀|a|`.
fn null_logistic_intercept(y: &[f64], w: &[f64], lambda0: f64) -> f64 {
    let grad = |a: f64| -> f64 { -y.iter().zip(w).map(|(y, w)| w * y * sigmoid(-y * a)).sum::<f64>() };
    let g0 = grad(0.0);
    if g0.abs() <= lambda0 {
        return 0.0;
    }
    // derivative of the smooth part is increasing; solve grad(a) + λ₀·sign(a) = 0
    let shift = if g0 < 0.0 { lambda0 } else { -lambda0 };
    let (mut lo, mut hi) = if g0 < 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    while grad(hi) + shift < 0.0 && hi < 745.0 {
        hi *= 2.0;
    }
    while grad(lo) + shift > 0.0 && lo > -745.0 {
        lo *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if grad(mid) + shift < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Finds λ with `g(λ) = λ` for a bounded gradient-norm map `g` by bisection
/// on `[0, upper]`, keeping `g(lo) > lo` and `g(hi) <= hi`.
fn fixed_point(mut g: impl FnMut(f64) -> f64, upper: f64) -> f64 {
    let g0 = g(0.0);
    if g0 <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, upper.max(g0));
    if g(hi) > hi {
        return hi;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if g(mid) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Smallest λ at which all dependency weights are zero: the sup-norm of the
/// loss gradient over dependency coordinates at the penalized null model.
///
/// For the linear family without intercept this is `‖Xᵀ W y‖∞`. When an
/// intercept is present (logistic, or linear with `intercept`), the null
/// intercept itself depends on `λ₀ = λ / intercept_scale`, so the value is
/// the fixed point of that map.
pub fn lambda_max(
    x: ColMatrix<'_>,
    y: &[f64],
    w: &SampleWeights,
    family: Family,
    intercept: bool,
    intercept_scale: f64,
) -> Result<f64> {
    check_rows(x, y.len(), "target")?;
    check_rows(x, w.len(), "sample weights")?;
    let w = w.as_slice();
    let upper: f64 = (0..x.n())
        .map(|n| w[n] * y[n].abs().max(1.0) * (0..x.p()).map(|j| x.get(n, j).abs()).fold(0.0, f64::max))
        .sum::<f64>()
        + 1.0;
    let mut v = vec![0.0; x.n()];
    let value = match (family, intercept) {
        (Family::Linear, false) => {
            for i in 0..x.n() {
                v[i] = w[i] * y[i];
            }
            max_abs_corr(x, &v)
        }
        (Family::Linear, true) => {
            let wsum: f64 = w.iter().sum();
            let wy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
            let upper = upper + wy.abs();
            fixed_point(
                |lambda| {
                    let a0 = soft_threshold(wy, lambda / intercept_scale) / wsum;
                    for i in 0..x.n() {
                        v[i] = w[i] * (y[i] - a0);
                    }
                    max_abs_corr(x, &v)
                },
                upper,
            )
        }
        (Family::Logistic, _) => fixed_point(
            |lambda| {
                let a0 = null_logistic_intercept(y, w, lambda / intercept_scale);
                for i in 0..x.n() {
                    v[i] = w[i] * y[i] * sigmoid(-y[i] * a0);
                }
                max_abs_corr(x, &v)
            },
            upper,
        ),
    };
    Ok(value)
}

/// λ_max of a softmax gate: the fixed point of the gradient sup-norm over
/// all non-reference class weights at the intercept-only gate.
pub fn lambda_max_gate(
    x: ColMatrix<'_>,
    targets: &[&[f64]],
    w: &SampleWeights,
    intercept_scale: f64,
) -> Result<f64> {
    let k = targets.len();
    if k < 2 || x.p() == 0 {
        return Ok(0.0);
    }
    for t in targets {
        check_rows(x, t.len(), "soft targets")?;
    }
    check_rows(x, w.len(), "sample weights")?;
    let empty = ColMatrix::new(&[], x.n(), 0);
    let ws = w.as_slice();
    let upper: f64 = (0..x.n())
        .map(|n| ws[n] * (0..x.p()).map(|j| x.get(n, j).abs()).fold(0.0, f64::max))
        .sum::<f64>()
        + 1.0;
    let mut v = vec![0.0; x.n()];
    let mut err = None;
    let value = fixed_point(
        |lambda| {
            let cfg = SolverConfig {
                lambda,
                intercept_scale,
                tol: 1e-10,
                max_outer_newton: 200,
                ..SolverConfig::default()
            };
            let gate = match fit_multiclass_gate(empty, targets, w, &cfg, None) {
                Ok(g) => g.value,
                Err(e) => {
                    err = Some(e);
                    return 0.0;
                }
            };
            let logp = gate.log_probs(&[]);
            let mut best = 0.0f64;
            for c in 0..k - 1 {
                let p = logp[c].exp();
                for i in 0..x.n() {
                    v[i] = ws[i] * (targets[c][i] - p);
                }
                best = best.max(max_abs_corr(x, &v));
            }
            best
        },
        upper,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// `count` log-spaced penalties from `lambda_max` down to
/// `lambda_max · min_ratio`, in decreasing order.
pub fn lambda_grid(lambda_max: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lambda_max],
        _ => {
            let step = min_ratio.ln() / (count - 1) as f64;
            (0..count)
                .map(|i| lambda_max * (step * i as f64).exp())
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_lambda_max_example() {
        let buf = [1.0, -1.0];
        let x = ColMatrix::new(&buf, 2, 1);
        let lm = lambda_max(x, &[2.0, -2.0], &SampleWeights::uniform(2), Family::Linear, false, 10.0)
            .unwrap();
        assert_eq!(lm, 4.0);
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = lambda_grid(10.0, 30, 1e-3);
        assert_eq!(g.len(), 30);
        assert_eq!(g[0], 10.0);
        assert!((g[29] - 0.01).abs() < 1e-12);
        for w in g.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn null_intercept_matches_log_odds_without_penalty() {
        let y = [1.0, 1.0, 1.0, -1.0];
        let w = [1.0; 4];
        let a = null_logistic_intercept(&y, &w, 0.0);
        assert!((a - 3f64.ln()).abs() < 1e-9);
    }
}
