//! Blocked cyclic coordinate descent shared by every regression in the crate.
//!
//! Rows are indexed by (group k, sample n). The linear predictor of row (k, n)
//! is `a0 + b0[k] + Σ_j (a[j] + b[k][j]) x[n][j]`, where each of the four
//! parameter blocks can be switched on or off through [`Layout`]:
//!
//! * plain regression: one group, global intercept and global weights
//! * tied mixtures: group intercepts and global weights
//! * automatic sharing: all four blocks
//!
//! Logistic losses are handled with an outer proximal-Newton loop (quadratic
//! model with clamped curvature, inner coordinate descent, backtracking on the
//! true penalized objective), so the objective never increases between outer
//! iterations. The Newton loop runs on a working set; a full gradient scan at
//! its fixed point either certifies optimality or enlarges the set.

use crate::data::ColMatrix;
use crate::math::{soft_threshold, softplus, MIN_CURVATURE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Weighted squared loss ½·w·(y − η)².
    Linear,
    /// Weighted logistic loss w·log(1 + exp(−yη)) with labels ±1.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub global_intercept: bool,
    pub global_weights: bool,
    pub group_intercepts: bool,
    pub group_weights: bool,
}

impl Layout {
    pub const SINGLE: Layout = Layout {
        global_intercept: true,
        global_weights: true,
        group_intercepts: false,
        group_weights: false,
    };
    pub const SINGLE_NO_INTERCEPT: Layout = Layout {
        global_intercept: false,
        global_weights: true,
        group_intercepts: false,
        group_weights: false,
    };
    pub const TIED: Layout = Layout {
        global_intercept: false,
        global_weights: true,
        group_intercepts: true,
        group_weights: false,
    };
    pub const AUTO: Layout = Layout {
        global_intercept: true,
        global_weights: true,
        group_intercepts: true,
        group_weights: true,
    };
}

/// Smallest number of coordinates admitted into a working set at once.
const WORKING_SET_MIN: usize = 16;

/// Dense parameters of one blocked problem.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Params {
    pub a0: f64,
    pub a: Vec<f64>,
    pub b0: Vec<f64>,
    pub b: Vec<Vec<f64>>,
}

impl Params {
    pub fn zeros(layout: Layout, k: usize, p: usize) -> Self {
        Self {
            a0: 0.0,
            a: if layout.global_weights { vec![0.0; p] } else { Vec::new() },
            b0: if layout.group_intercepts { vec![0.0; k] } else { Vec::new() },
            b: if layout.group_weights {
                vec![vec![0.0; p]; k]
            } else {
                Vec::new()
            },
        }
    }

    pub fn penalty(&self, lambda: f64, lambda0: f64) -> f64 {
        let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
        lambda0 * (self.a0.abs() + l1(&self.b0))
            + lambda * (l1(&self.a) + self.b.iter().map(|r| l1(r)).sum::<f64>())
    }

    fn coef(&self, k: usize, j: usize) -> f64 {
        let g = self.a.get(j).copied().unwrap_or(0.0);
        let d = self.b.get(k).map_or(0.0, |r| r[j]);
        g + d
    }

    fn offset(&self, k: usize) -> f64 {
        self.a0 + self.b0.get(k).copied().unwrap_or(0.0)
    }

    /// Linear predictor of group `k` for every sample.
    pub fn eta(&self, x: ColMatrix<'_>, k: usize, out: &mut [f64]) {
        out.fill(self.offset(k));
        for j in 0..x.p() {
            let c = self.coef(k, j);
            if c != 0.0 {
                for (o, xv) in out.iter_mut().zip(x.col(j)) {
                    *o += c * xv;
                }
            }
        }
    }

    fn get(&self, c: Coord) -> f64 {
        match c {
            Coord::GlobalIntercept => self.a0,
            Coord::Global(j) => self.a[j],
            Coord::GroupIntercept(k) => self.b0[k],
            Coord::Group(k, j) => self.b[k][j],
        }
    }

    fn set(&mut self, c: Coord, v: f64) {
        match c {
            Coord::GlobalIntercept => self.a0 = v,
            Coord::Global(j) => self.a[j] = v,
            Coord::GroupIntercept(k) => self.b0[k] = v,
            Coord::Group(k, j) => self.b[k][j] = v,
        }
    }

    /// `self + t·(other − self)`.
    pub(crate) fn lerp(&self, other: &Params, t: f64) -> Params {
        let mix = |a: f64, b: f64| if t == 1.0 { b } else { a + t * (b - a) };
        let mixv = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| mix(*x, *y)).collect();
        Params {
            a0: mix(self.a0, other.a0),
            a: mixv(&self.a, &other.a),
            b0: mixv(&self.b0, &other.b0),
            b: self.b.iter().zip(&other.b).map(|(x, y)| mixv(x, y)).collect(),
        }
    }

    fn coords(&self, layout: Layout, k: usize, p: usize) -> impl Iterator<Item = Coord> {
        let gi = layout.global_intercept.then_some(Coord::GlobalIntercept);
        let gw = (0..if layout.global_weights { p } else { 0 }).map(Coord::Global);
        let groups = (0..k).flat_map(move |g| {
            let ci = layout.group_intercepts.then_some(Coord::GroupIntercept(g));
            let cw = (0..if layout.group_weights { p } else { 0 }).map(move |j| Coord::Group(g, j));
            ci.into_iter().chain(cw)
        });
        gi.into_iter().chain(gw).chain(groups)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coord {
    GlobalIntercept,
    Global(usize),
    GroupIntercept(usize),
    Group(usize, usize),
}

impl Coord {
    fn is_intercept(self) -> bool {
        matches!(self, Coord::GlobalIntercept | Coord::GroupIntercept(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FitStatus {
    pub converged: bool,
    /// Coordinate sweeps over all inner solves.
    pub sweeps: usize,
    /// Outer Newton iterations (1 for squared loss).
    pub outer: usize,
}

/// Weighted quadratic model `½ Σ h (z − η)²` in residual form: `v = h·(z − η)`.
pub(crate) struct Quad<'a> {
    x: ColMatrix<'a>,
    layout: Layout,
    lambda: f64,
    lambda0: f64,
    h: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// Σ_k v[k]; unused for a single group.
    vsum: Vec<f64>,
    /// Σ_k h[k]
    hrow: Vec<f64>,
    hgroup: Vec<f64>,
    htot: f64,
    curv_global: Vec<f64>,
    curv_group: Vec<Vec<f64>>,
    /// Coordinates visited by a full sweep; every coordinate when `None`.
    working: Option<Vec<Coord>>,
}

impl<'a> Quad<'a> {
    pub fn new(
        x: ColMatrix<'a>,
        layout: Layout,
        lambda: f64,
        lambda0: f64,
        h: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    ) -> Self {
        let k = h.len();
        let n = x.n();
        let mut hrow = vec![0.0; n];
        let mut vsum = Vec::new();
        if k == 1 {
            hrow.copy_from_slice(&h[0]);
        } else {
            vsum = vec![0.0; n];
            for g in 0..k {
                for i in 0..n {
                    hrow[i] += h[g][i];
                    vsum[i] += v[g][i];
                }
            }
        }
        let hgroup: Vec<f64> = h.iter().map(|r| r.iter().sum()).collect();
        let htot = hrow.iter().sum();
        let p = x.p();
        Self {
            x,
            layout,
            lambda,
            lambda0,
            curv_global: if layout.global_weights { vec![f64::NAN; p] } else { Vec::new() },
            curv_group: if layout.group_weights {
                vec![vec![f64::NAN; p]; k]
            } else {
                Vec::new()
            },
            h,
            v,
            vsum,
            hrow,
            hgroup,
            htot,
            working: None,
        }
    }

    fn restrict(mut self, working: Vec<Coord>) -> Self {
        self.working = Some(working);
        self
    }

    fn groups(&self) -> usize {
        self.h.len()
    }

    fn global_v(&self) -> &[f64] {
        if self.groups() == 1 {
            &self.v[0]
        } else {
            &self.vsum
        }
    }

    fn curvature(&mut self, c: Coord) -> f64 {
        match c {
            Coord::GlobalIntercept => self.htot,
            Coord::GroupIntercept(k) => self.hgroup[k],
            Coord::Global(j) => {
                if self.curv_global[j].is_nan() {
                    self.curv_global[j] = weighted_sq(&self.hrow, self.x.col(j));
                }
                self.curv_global[j]
            }
            Coord::Group(k, j) => {
                if self.curv_group[k][j].is_nan() {
                    self.curv_group[k][j] = weighted_sq(&self.h[k], self.x.col(j));
                }
                self.curv_group[k][j]
            }
        }
    }

    fn gradient(&self, c: Coord) -> f64 {
        match c {
            Coord::GlobalIntercept => self.global_v().iter().sum(),
            Coord::GroupIntercept(k) => self.v[k].iter().sum(),
            Coord::Global(j) => dot(self.x.col(j), self.global_v()),
            Coord::Group(k, j) => dot(self.x.col(j), &self.v[k]),
        }
    }

    fn penalty_of(&self, c: Coord) -> f64 {
        match c {
            Coord::GlobalIntercept | Coord::GroupIntercept(_) => self.lambda0,
            _ => self.lambda,
        }
    }

    /// Moves `η` by `delta·column(c)` and updates the residual state.
    fn apply(&mut self, c: Coord, delta: f64) {
        let single = self.groups() == 1;
        match c {
            Coord::GlobalIntercept => {
                for (vk, hk) in self.v.iter_mut().zip(&self.h) {
                    for (v, h) in vk.iter_mut().zip(hk) {
                        *v -= h * delta;
                    }
                }
                if !single {
                    for (v, h) in self.vsum.iter_mut().zip(&self.hrow) {
                        *v -= h * delta;
                    }
                }
            }
            Coord::Global(j) => {
                let col = self.x.col(j);
                for (vk, hk) in self.v.iter_mut().zip(&self.h) {
                    for ((v, h), xv) in vk.iter_mut().zip(hk).zip(col) {
                        *v -= h * xv * delta;
                    }
                }
                if !single {
                    for ((v, h), xv) in self.vsum.iter_mut().zip(&self.hrow).zip(col) {
                        *v -= h * xv * delta;
                    }
                }
            }
            Coord::GroupIntercept(k) => {
                for i in 0..self.x.n() {
                    let d = self.h[k][i] * delta;
                    self.v[k][i] -= d;
                    if !single {
                        self.vsum[i] -= d;
                    }
                }
            }
            Coord::Group(k, j) => {
                let col = self.x.col(j);
                for i in 0..self.x.n() {
                    let d = self.h[k][i] * col[i] * delta;
                    self.v[k][i] -= d;
                    if !single {
                        self.vsum[i] -= d;
                    }
                }
            }
        }
    }

    /// Exact minimization along one coordinate; returns the scaled change.
    fn update(&mut self, params: &mut Params, c: Coord) -> f64 {
        let old = params.get(c);
        let pen = self.penalty_of(c);
        let g = self.gradient(c);
        if old == 0.0 && g.abs() <= pen {
            return 0.0;
        }
        let hc = self.curvature(c);
        if hc <= 0.0 {
            if old != 0.0 {
                params.set(c, 0.0);
                self.apply(c, -old);
            }
            return 0.0;
        }
        let new = soft_threshold(g + hc * old, pen) / hc;
        let delta = new - old;
        if delta == 0.0 {
            return 0.0;
        }
        params.set(c, new);
        self.apply(c, delta);
        delta.abs() * (hc / self.htot).sqrt()
    }

    fn sweep_all(&mut self, params: &mut Params) -> f64 {
        match self.working.take() {
            Some(coords) => {
                let change = self.sweep(params, &coords);
                self.working = Some(coords);
                change
            }
            None => {
                let coords: Vec<Coord> = params.coords(self.layout, self.groups(), self.x.p()).collect();
                self.sweep(params, &coords)
            }
        }
    }

    fn sweep(&mut self, params: &mut Params, coords: &[Coord]) -> f64 {
        let fuse_weights = self.layout.global_weights && self.layout.group_weights;
        let fuse_intercepts = self.layout.global_intercept && self.layout.group_intercepts;
        let mut max = 0.0f64;
        if !fuse_weights && !fuse_intercepts {
            for &c in coords {
                max = max.max(self.update(params, c));
            }
            return max;
        }
        // global and per-group coefficients of one column are collinear, so
        // they are minimized jointly; `seen[p]` stands for the intercepts
        let p = self.x.p();
        let mut seen = vec![false; p + 1];
        for &c in coords {
            let change = match c {
                Coord::Global(j) | Coord::Group(_, j) if fuse_weights => {
                    if std::mem::replace(&mut seen[j], true) {
                        continue;
                    }
                    self.update_fused(params, Some(j))
                }
                Coord::GlobalIntercept | Coord::GroupIntercept(_) if fuse_intercepts => {
                    if std::mem::replace(&mut seen[p], true) {
                        continue;
                    }
                    self.update_fused(params, None)
                }
                c => self.update(params, c),
            };
            max = max.max(change);
        }
        max
    }

    /// Exact minimization over a global coefficient and its per-group
    /// deviations (column `j`, or the intercepts for `None`).
    fn update_fused(&mut self, params: &mut Params, j: Option<usize>) -> f64 {
        let k = self.groups();
        let (global, group): (Coord, fn(usize, usize) -> Coord) = match j {
            Some(j) => (Coord::Global(j), Coord::Group),
            None => (Coord::GlobalIntercept, |g, _| Coord::GroupIntercept(g)),
        };
        let col = j.unwrap_or(0);
        let grads: Vec<f64> = (0..k).map(|g| self.gradient(group(g, col))).collect();
        let a = params.get(global);
        let olds: Vec<f64> = (0..k).map(|g| params.get(group(g, col))).collect();
        let (pen_a, pen_b) = (self.penalty_of(global), self.penalty_of(group(0, col)));
        if a == 0.0 && olds.iter().all(|b| *b == 0.0) {
            // zero stays optimal when every group and their sum pass KKT
            let inside = grads.iter().all(|g| g.abs() <= pen_b);
            if inside && grads.iter().sum::<f64>().abs() <= pen_a {
                return 0.0;
            }
        }
        let curv: Vec<f64> = (0..k).map(|g| self.curvature(group(g, col))).collect();
        let targets: Vec<f64> = (0..k)
            .map(|g| if curv[g] > 0.0 { a + olds[g] + grads[g] / curv[g] } else { 0.0 })
            .collect();
        let new_a = fused_global(&targets, &curv, pen_b, pen_a);
        params.set(global, new_a);
        let mut max = 0.0f64;
        for g in 0..k {
            let new_b = if curv[g] > 0.0 { soft_threshold(targets[g] - new_a, pen_b / curv[g]) } else { 0.0 };
            params.set(group(g, col), new_b);
            let delta = (new_a + new_b) - (a + olds[g]);
            if delta != 0.0 {
                self.apply(group(g, col), delta);
                max = max.max(delta.abs() * (curv[g].max(0.0) / self.htot).sqrt());
            }
        }
        max
    }

    fn active(&self, params: &Params) -> Vec<Coord> {
        params
            .coords(self.layout, self.groups(), self.x.p())
            .filter(|&c| params.get(c) != 0.0)
            .collect()
    }

    /// Active-set coordinate descent: iterate on nonzeros until stable, then
    /// a full sweep to certify; repeat while the full sweep moves anything.
    pub fn solve(&mut self, params: &mut Params, tol: f64, max_sweeps: usize) -> (usize, bool) {
        let mut sweeps = 0;
        let mut need_full = true;
        let mut active = self.active(params);
        if !active.is_empty() {
            need_full = false;
        }
        loop {
            if need_full {
                let change = self.sweep_all(params);
                sweeps += 1;
                if change < tol {
                    return (sweeps, true);
                }
                if sweeps >= max_sweeps {
                    return (sweeps, false);
                }
                active = self.active(params);
            }
            loop {
                if active.is_empty() {
                    break;
                }
                let change = self.sweep(params, &active);
                sweeps += 1;
                if change < tol {
                    break;
                }
                if sweeps >= max_sweeps {
                    return (sweeps, false);
                }
            }
            need_full = true;
        }
    }

    /// Largest scaled difference between two parameter sets. Where global
    /// and per-group coefficients are fused only their sums are compared,
    /// since the split between them need not be unique.
    pub(crate) fn scaled_distance(&mut self, a: &Params, b: &Params) -> f64 {
        let fuse_weights = self.layout.global_weights && self.layout.group_weights;
        let fuse_intercepts = self.layout.global_intercept && self.layout.group_intercepts;
        let (k, p) = (self.groups(), self.x.p());
        let mut max = 0.0f64;
        if fuse_intercepts {
            for g in 0..k {
                let d = (a.a0 + a.b0[g]) - (b.a0 + b.b0[g]);
                max = max.max(d.abs() * (self.hgroup[g] / self.htot).sqrt());
            }
        }
        if fuse_weights {
            for g in 0..k {
                for j in 0..p {
                    let d = (a.a[j] + a.b[g][j]) - (b.a[j] + b.b[g][j]);
                    if d != 0.0 {
                        let hc = self.curvature(Coord::Group(g, j)).max(0.0);
                        max = max.max(d.abs() * (hc / self.htot).sqrt());
                    }
                }
            }
        }
        let coords: Vec<Coord> = a.coords(self.layout, k, p).collect();
        for c in coords {
            let fused = match c {
                Coord::GlobalIntercept | Coord::GroupIntercept(_) => fuse_intercepts,
                Coord::Global(_) | Coord::Group(..) => fuse_weights,
            };
            let d = (a.get(c) - b.get(c)).abs();
            if !fused && d > 0.0 {
                let hc = self.curvature(c).max(0.0);
                max = max.max(d * (hc / self.htot).sqrt());
            }
        }
        max
    }
}

/// Minimizer over `a` of `pen_a·|a| + Σ_k huber_k(t_k − a)`, where
/// `huber_k(u) = min_b ½·h_k·(u − b)² + pen_b·|b|`. The derivative of the sum
/// is piecewise linear with breakpoints at `t_k ± pen_b/h_k`.
fn fused_global(targets: &[f64], curv: &[f64], pen_b: f64, pen_a: f64) -> f64 {
    let slope = |a: f64, sign: f64| -> f64 {
        targets
            .iter()
            .zip(curv)
            .filter(|(_, h)| **h > 0.0)
            .map(|(t, h)| (h * (sign * t - a)).clamp(-pen_b, pen_b))
            .sum()
    };
    let at_zero = slope(0.0, 1.0);
    if at_zero.abs() <= pen_a {
        return 0.0;
    }
    // reflect so that the root lies at a > 0
    let sign = at_zero.signum();
    let mut breaks: Vec<f64> = targets
        .iter()
        .zip(curv)
        .filter(|(_, h)| **h > 0.0)
        .flat_map(|(t, h)| [sign * t - pen_b / h, sign * t + pen_b / h])
        .filter(|b| *b > 0.0)
        .collect();
    breaks.sort_by(f64::total_cmp);
    let (mut lo, mut g_lo) = (0.0, at_zero.abs());
    for b in breaks {
        let g_b = slope(b, sign);
        if g_b <= pen_a {
            // linear between lo and b
            return sign * (lo + (g_lo - pen_a) * (b - lo) / (g_lo - g_b));
        }
        lo = b;
        g_lo = g_b;
    }
    sign * lo
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn weighted_sq(h: &[f64], x: &[f64]) -> f64 {
    h.iter().zip(x).map(|(h, x)| h * x * x).sum()
}

/// A penalized regression over one or more groups of rows.
pub(crate) struct Problem<'a> {
    pub x: ColMatrix<'a>,
    /// One target vector per group, or a single vector shared by all groups.
    pub targets: Vec<&'a [f64]>,
    /// One sample-weight vector per group.
    pub weights: Vec<&'a [f64]>,
    pub family: Family,
    pub layout: Layout,
    pub lambda: f64,
    pub lambda0: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_outer: usize,
}

impl<'a> Problem<'a> {
    fn groups(&self) -> usize {
        self.weights.len()
    }

    fn target(&self, k: usize) -> &'a [f64] {
        if self.targets.len() == 1 {
            self.targets[0]
        } else {
            self.targets[k]
        }
    }

    fn etas(&self, params: &Params) -> Vec<Vec<f64>> {
        (0..self.groups())
            .map(|k| {
                let mut e = vec![0.0; self.x.n()];
                params.eta(self.x, k, &mut e);
                e
            })
            .collect()
    }

    fn loss(&self, etas: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (k, eta) in etas.iter().enumerate() {
            let (y, w) = (self.target(k), self.weights[k]);
            total += match self.family {
                Family::Linear => {
                    0.5 * eta
                        .iter()
                        .zip(y)
                        .zip(w)
                        .map(|((e, y), w)| w * (y - e) * (y - e))
                        .sum::<f64>()
                }
                Family::Logistic => eta
                    .iter()
                    .zip(y)
                    .zip(w)
                    .map(|((e, y), w)| if *w == 0.0 { 0.0 } else { w * softplus(-y * e) })
                    .sum::<f64>(),
            };
        }
        total
    }

    /// Penalized objective at `params`.
    pub fn objective(&self, params: &Params) -> f64 {
        self.loss(&self.etas(params)) + params.penalty(self.lambda, self.lambda0)
    }

    fn quad(&self, etas: &[Vec<f64>]) -> Quad<'a> {
        let mut h = Vec::with_capacity(self.groups());
        let mut v = Vec::with_capacity(self.groups());
        for (k, eta) in etas.iter().enumerate() {
            let (y, w) = (self.target(k), self.weights[k]);
            match self.family {
                Family::Linear => {
                    h.push(w.to_vec());
                    v.push(eta.iter().zip(y).zip(w).map(|((e, y), w)| w * (y - e)).collect());
                }
                Family::Logistic => {
                    let mut hk = Vec::with_capacity(eta.len());
                    let mut vk = Vec::with_capacity(eta.len());
                    for ((e, y), w) in eta.iter().zip(y).zip(w) {
                        let p = crate::math::sigmoid(*e);
                        hk.push(w * (p * (1.0 - p)).max(MIN_CURVATURE));
                        // −∂loss/∂η = w·y·σ(−yη)
                        vk.push(w * y * crate::math::sigmoid(-y * e));
                    }
                    h.push(hk);
                    v.push(vk);
                }
            }
        }
        Quad::new(self.x, self.layout, self.lambda, self.lambda0, h, v)
    }

    pub fn solve(&self, warm: Option<Params>) -> (Params, FitStatus) {
        let k = self.groups();
        let mut params = warm.unwrap_or_else(|| Params::zeros(self.layout, k, self.x.p()));
        let mut status = FitStatus::default();
        match self.family {
            Family::Linear => {
                let etas = self.etas(&params);
                let mut quad = self.quad(&etas);
                let (sweeps, ok) = quad.solve(&mut params, self.tol, self.max_sweeps);
                status.sweeps = sweeps;
                status.outer = 1;
                status.converged = ok;
            }
            Family::Logistic => {
                let all: Vec<Coord> = params.coords(self.layout, k, self.x.p()).collect();
                let mut member: Vec<bool> = all.iter().map(|&c| c.is_intercept() || params.get(c) != 0.0).collect();
                let mut etas = self.etas(&params);
                let mut f = self.loss(&etas) + params.penalty(self.lambda, self.lambda0);
                let mut first = true;
                loop {
                    // zero coordinates outside the working set that violate
                    // KKT; the worst ones join, at most doubling the set
                    let quad = self.quad(&etas);
                    let mut violators: Vec<(f64, usize)> = Vec::new();
                    for (i, &c) in all.iter().enumerate() {
                        if !member[i] {
                            let excess = quad.gradient(c).abs() / quad.penalty_of(c);
                            if excess > 1.0 {
                                violators.push((excess, i));
                            }
                        }
                    }
                    let size = member.iter().filter(|m| **m).count();
                    violators.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                    violators.truncate(size.max(WORKING_SET_MIN));
                    let added = violators.len();
                    for (_, i) in violators {
                        member[i] = true;
                    }
                    if added == 0 && !first {
                        status.converged = true;
                        break;
                    }
                    first = false;
                    let working: Vec<Coord> = all.iter().zip(&member).filter(|(_, m)| **m).map(|(c, _)| *c).collect();
                    if !self.newton(&working, &mut params, &mut etas, &mut f, &mut status) {
                        break;
                    }
                }
            }
        }
        (params, status)
    }

    /// Proximal-Newton iterations over `working` until the step is below
    /// tolerance. Returns false when the iteration budget runs out or the
    /// inner solver fails to converge.
    fn newton(
        &self,
        working: &[Coord],
        params: &mut Params,
        etas: &mut Vec<Vec<f64>>,
        f: &mut f64,
        status: &mut FitStatus,
    ) -> bool {
        while status.outer < self.max_outer {
            status.outer += 1;
            let mut quad = self.quad(etas).restrict(working.to_vec());
            let mut cand = params.clone();
            let (sweeps, inner_ok) = quad.solve(&mut cand, self.tol, self.max_sweeps);
            status.sweeps += sweeps;
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-12 {
                let trial = params.lerp(&cand, t);
                let trial_etas = self.etas(&trial);
                let ft = self.loss(&trial_etas) + trial.penalty(self.lambda, self.lambda0);
                if ft <= *f {
                    accepted = Some((trial, trial_etas, ft));
                    break;
                }
                t *= 0.5;
            }
            let Some((trial, trial_etas, ft)) = accepted else {
                // no descent left at machine precision
                return inner_ok;
            };
            let change = quad.scaled_distance(params, &trial);
            *params = trial;
            *etas = trial_etas;
            *f = ft;
            if change < self.tol && inner_ok {
                return true;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(a: f64, t: &[f64], h: &[f64], pen_b: f64, pen_a: f64) -> f64 {
        let huber = |u: f64, h: f64| {
            if h * u.abs() <= pen_b {
                0.5 * h * u * u
            } else {
                pen_b * u.abs() - pen_b * pen_b / (2.0 * h)
            }
        };
        pen_a * a.abs() + t.iter().zip(h).map(|(t, h)| huber(t - a, *h)).sum::<f64>()
    }

    proptest! {
        #[test]
        fn fused_global_minimizes_the_profile(
            t in prop::collection::vec(-3.0f64..3.0, 1..6),
            h_seed in prop::collection::vec(0.1f64..4.0, 6),
            pen_b in 0.01f64..2.0,
            pen_a in 0.01f64..2.0,
        ) {
            let h = &h_seed[..t.len()];
            let a = fused_global(&t, h, pen_b, pen_a);
            let f = profile(a, &t, h, pen_b, pen_a);
            // dense grid over the range holding every minimizer
            for i in -4000..=4000 {
                let b = i as f64 * 1e-3;
                prop_assert!(f <= profile(b, &t, h, pen_b, pen_a) + 1e-9);
            }
        }
    }

    #[test]
    fn fused_global_is_zero_inside_the_dead_zone() {
        assert_eq!(fused_global(&[0.1, -0.1], &[1.0, 1.0], 1.0, 0.5), 0.0);
        // groups that agree are carried by the shared coefficient alone,
        // shrunk by pen_a spread over the three groups
        let a = fused_global(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0], 0.5, 0.5);
        assert!((a - (2.0 - 0.5 / 3.0)).abs() < 1e-12, "{a}");
    }
}
