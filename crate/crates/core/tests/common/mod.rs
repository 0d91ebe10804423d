//! Test-only oracles, independent of the coordinate-descent implementation.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Column-major buffer from row-major rows.
pub fn col_major(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let p = if n == 0 { 0 } else { rows[0].len() };
    let mut out = vec![0.0; n * p];
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            out[j * n + i] = *v;
        }
    }
    out
}

pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

pub fn log1pexp(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Exhaustive sign-pattern oracle for
/// `½ Σ w (y − Zθ)² + Σ pen_j |θ_j|` where `z` holds rows of the design.
pub fn lasso_oracle(z: &[Vec<f64>], y: &[f64], w: &[f64], pen: &[f64]) -> Vec<f64> {
    let p = pen.len();
    let obj = |t: &[f64]| -> f64 {
        let mut s = 0.0;
        for (i, row) in z.iter().enumerate() {
            let e: f64 = row.iter().zip(t).map(|(a, b)| a * b).sum();
            s += 0.5 * w[i] * (y[i] - e) * (y[i] - e);
        }
        s + t.iter().zip(pen).map(|(a, l)| l * a.abs()).sum::<f64>()
    };
    let mut best = vec![0.0; p];
    let mut best_obj = obj(&best);
    let total = 3usize.pow(p as u32);
    for code in 0..total {
        let mut signs = vec![0i32; p];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i32 - 1;
            c /= 3;
        }
        let act: Vec<usize> = (0..p).filter(|&j| signs[j] != 0).collect();
        let m = act.len();
        if m == 0 {
            continue;
        }
        let mut g = vec![vec![0.0; m]; m];
        let mut rhs = vec![0.0; m];
        for (i, row) in z.iter().enumerate() {
            for a in 0..m {
                rhs[a] += w[i] * row[act[a]] * y[i];
                for b in 0..m {
                    g[a][b] += w[i] * row[act[a]] * row[act[b]];
                }
            }
        }
        for a in 0..m {
            rhs[a] -= pen[act[a]] * signs[act[a]] as f64;
        }
        let Some(sol) = solve_dense(g, rhs) else { continue };
        if sol.iter().zip(&act).any(|(v, &j)| v * signs[j] as f64 <= 0.0) {
            continue;
        }
        let mut t = vec![0.0; p];
        for (v, &j) in sol.iter().zip(&act) {
            t[j] = *v;
        }
        let o = obj(&t);
        if o < best_obj {
            best_obj = o;
            best = t;
        }
    }
    best
}

/// Proximal-gradient oracle for weighted L1 logistic regression on design
/// rows `z` (intercept, if any, is just a column of ones in `z`).
pub fn logistic_oracle(z: &[Vec<f64>], y: &[f64], w: &[f64], pen: &[f64]) -> Vec<f64> {
    let p = pen.len();
    let lip: f64 = 0.25
        * z.iter()
            .zip(w)
            .map(|(r, w)| w * r.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>();
    let step = 1.0 / lip.max(1e-12);
    let mut t = vec![0.0; p];
    let mut prev = t.clone();
    let mut mom = t.clone();
    for it in 0..2_000_000 {
        let mut grad = vec![0.0; p];
        for (i, row) in z.iter().enumerate() {
            let e: f64 = row.iter().zip(&mom).map(|(a, b)| a * b).sum();
            let g = -w[i] * y[i] * sigmoid(-y[i] * e);
            for j in 0..p {
                grad[j] += g * row[j];
            }
        }
        let next: Vec<f64> = (0..p)
            .map(|j| {
                let u = mom[j] - step * grad[j];
                let s = step * pen[j];
                u.signum() * (u.abs() - s).max(0.0)
            })
            .collect();
        let change = next.iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let beta = it as f64 / (it as f64 + 3.0);
        mom = next.iter().zip(&t).map(|(n, o)| n + beta * (n - o)).collect();
        prev.clone_from(&t);
        t = next;
        if change < 1e-14 && it > 100 {
            break;
        }
    }
    let _ = prev;
    t
}

/// Max KKT violation of `½Σw(y−Zθ)²` (linear) or logistic loss plus
/// `Σ pen|θ|`, returned together with `scale = max(1, ‖ZᵀWy‖∞)`.
pub fn kkt_violation(z: &[Vec<f64>], y: &[f64], w: &[f64], pen: &[f64], theta: &[f64], logistic: bool) -> (f64, f64) {
    let p = pen.len();
    let mut grad = vec![0.0; p];
    let mut zwy = vec![0.0; p];
    for (i, row) in z.iter().enumerate() {
        let e: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        let g = if logistic {
            -w[i] * y[i] * sigmoid(-y[i] * e)
        } else {
            -w[i] * (y[i] - e)
        };
        for j in 0..p {
            grad[j] += g * row[j];
            zwy[j] += w[i] * y[i] * row[j];
        }
    }
    let mut worst = 0.0f64;
    for j in 0..p {
        let v = if theta[j] != 0.0 {
            (grad[j] + pen[j] * theta[j].signum()).abs()
        } else {
            (grad[j].abs() - pen[j]).max(0.0)
        };
        worst = worst.max(v);
    }
    let scale = zwy.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    (worst, scale)
}

/// Random binary ±1 matrix with correlated columns (row-major).
pub fn random_binary_rows(rng: &mut impl Rng, n: usize, d: usize, coupling: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut row: Vec<f64> = Vec::with_capacity(d);
            for j in 0..d {
                let bias = if j == 0 { 0.2 } else { coupling * row[j - 1] + 0.1 * (j % 3) as f64 - 0.1 };
                let p = sigmoid(bias);
                row.push(if rng.random::<f64>() < p { 1.0 } else { -1.0 });
            }
            row
        })
        .collect()
}

/// All ±1 vectors of length `d`.
pub fn all_binary(d: usize) -> Vec<Vec<f64>> {
    (0..1usize << d)
        .map(|code| (0..d).map(|j| if code >> j & 1 == 1 { 1.0 } else { -1.0 }).collect())
        .collect()
}

/// ±1 rows as a binary dataset.
pub fn binary_dataset(rows: &[Vec<f64>]) -> sparn::Dataset {
    let raw = sparn::RawMatrix::from_rows(rows).unwrap();
    sparn::Dataset::from_encoded(&raw, sparn::DataKind::Binary, None).unwrap()
}

/// Standardized continuous dataset from raw rows.
pub fn continuous_dataset(rows: &[Vec<f64>]) -> sparn::Dataset {
    let raw = sparn::RawMatrix::from_rows(rows).unwrap();
    sparn::data::standardize(&raw, None).unwrap()
}

/// Two Bernoulli clusters with rates `hi`/`1 − hi` on every dimension;
/// returns the rows and the true cluster labels.
pub fn two_clusters(rng: &mut impl Rng, n: usize, d: usize, hi: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let p = if c == 0 { hi } else { 1.0 - hi };
        rows.push((0..d).map(|_| if rng.random::<f64>() < p { 1.0 } else { -1.0 }).collect());
        labels.push(c);
    }
    (rows, labels)
}

/// Random sparse weights over predictors `0..p`.
pub fn random_weights(rng: &mut impl Rng, p: usize, density: f64, scale: f64) -> sparn::SparseWeights {
    let intercept = scale * (rng.random::<f64>() * 2.0 - 1.0);
    let entries: Vec<(usize, f64)> = (0..p)
        .filter_map(|j| (rng.random::<f64>() < density).then(|| (j, scale * (rng.random::<f64>() * 2.0 - 1.0))))
        .collect();
    sparn::SparseWeights::new(intercept, entries).unwrap()
}

/// Random binary component set over `start..end` in the given mode.
pub fn random_components(
    rng: &mut impl Rng,
    start: usize,
    end: usize,
    k: usize,
    mode: sparn::SharingMode,
) -> sparn::mixture::ComponentSet {
    use sparn::mixture::DimParams;
    use sparn::solvers::{SharedWeights, TiedWeights};
    let params = (start..end)
        .map(|d| match mode {
            sparn::SharingMode::Untied => {
                DimParams::Untied((0..k).map(|_| random_weights(rng, d, 0.6, 1.5)).collect())
            }
            sparn::SharingMode::Tied => DimParams::Tied(TiedWeights {
                intercepts: (0..k).map(|_| rng.random::<f64>() * 3.0 - 1.5).collect(),
                shared: random_weights(rng, d, 0.6, 1.5).with_intercept(0.0),
            }),
            sparn::SharingMode::Auto => DimParams::Auto(SharedWeights {
                global: random_weights(rng, d, 0.6, 1.0),
                deviations: (0..k).map(|_| random_weights(rng, d, 0.3, 1.0)).collect(),
            }),
        })
        .collect();
    sparn::mixture::ComponentSet::new(sparn::DataKind::Binary, start, params, None).unwrap()
}

/// Random probability vector with entries bounded away from zero.
pub fn random_simplex(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.2).collect();
    let s: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let head: f64 = p[..k - 1].iter().sum();
    p[k - 1] = 1.0 - head;
    p
}

/// Random softmax gate over predictors `0..p` (last class zero).
pub fn random_gate(rng: &mut impl Rng, k: usize, p: usize) -> sparn::solvers::GateWeights {
    let mut classes: Vec<sparn::SparseWeights> = (0..k - 1).map(|_| random_weights(rng, p, 0.5, 1.0)).collect();
    classes.push(sparn::SparseWeights::zero());
    sparn::solvers::GateWeights::new(classes).unwrap()
}

/// Random binary sequence model with the given block boundaries and sizes.
pub fn random_sequence(
    rng: &mut impl Rng,
    boundaries: &[usize],
    ks: &[usize],
    mode: sparn::SharingMode,
) -> sparn::SequenceModel {
    let partition = sparn::Partition::new(boundaries.to_vec()).unwrap();
    let blocks = ks
        .iter()
        .enumerate()
        .map(|(l, &k)| {
            let r = partition.block(l);
            sparn::seqmix::SequenceBlock {
                gate: random_gate(rng, k, r.start),
                components: random_components(rng, r.start, r.end, k, mode),
            }
        })
        .collect();
    sparn::SequenceModel::new(partition, blocks, None).unwrap()
}

/// Every latent configuration of a sequence model (odometer order).
pub fn latent_grid(ks: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &k in ks {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..k).map(move |h| {
                    let mut v = prefix.clone();
                    v.push(h);
                    v
                })
            })
            .collect();
    }
    out
}
