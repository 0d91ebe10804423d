//! Small numerically careful scalar helpers.

/// ½·log(2π)
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Lower clamp on the curvature of the logistic loss in Newton steps.
pub(crate) const MIN_CURVATURE: f64 = 1e-4;

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(t)) without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// log σ(t) = −log(1 + exp(−t)).
#[inline]
pub fn log_sigmoid(t: f64) -> f64 {
    -softplus(-t)
}

#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log Σ_k p_k exp(v_k)` for probabilities `p`, factored as
/// `max v + log Σ p_k exp(v_k − max v)` so that equal values give `v` exactly.
pub fn log_weighted_sum_exp(values: &[f64], probs: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().zip(probs).map(|(v, p)| p * (v - max).exp()).sum();
    max + sum.ln()
}

/// Gaussian log-density of `x` under N(mean, sigma²).
#[inline]
pub fn normal_log_density(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    -0.5 * z * z - sigma.ln() - HALF_LN_2PI
}

/// Sample mean and standard error (sample std / √n) of a slice.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn weighted_lse_is_exact_for_equal_values() {
        assert_eq!(log_weighted_sum_exp(&[-3.7, -3.7], &[0.5, 0.5]), -3.7);
        let v = log_weighted_sum_exp(&[-1.0, -2.0], &[0.3, 0.7]);
        assert!((v - (0.3 * (-1f64).exp() + 0.7 * (-2f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn half_ln_2pi_constant() {
        assert!((HALF_LN_2PI - 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-12);
    }

    #[test]
    fn lse_dominance() {
        let v = [0.0, -1e5];
        assert!((log_sum_exp(&v) - 0.0).abs() <= 1e-12);
        let v = [-1e6, -1e6];
        assert!((log_sum_exp(&v) - (-1e6 + 2f64.ln())).abs() < 1e-9);
    }
}
