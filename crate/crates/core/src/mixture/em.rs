//! EM for (optionally gated) blocks of mixture components.

use rayon::prelude::*;

use super::components::{ComponentSet, DimParams};
use super::{MixtureModel, Responsibilities, SharingMode};
use crate::arn::{fit_conditional, residual_sigma, SolverWarning};
use crate::data::{DataKind, Dataset};
use crate::error::{Error, Result};
use crate::solvers::{
    fit_auto_shared, fit_multiclass_gate, fit_tied, Family, FitStatus, GateWeights, SampleWeights,
    SolverConfig, SparseWeights,
};

/// Stopping rule and collapse handling of an EM run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once the mean penalized objective improves by less than this.
    pub tol: f64,
    pub max_reseeds: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-5,
            max_reseeds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainingWarning {
    Solver {
        block: Option<usize>,
        warning: SolverWarning,
    },
    /// A component lost (almost) all responsibility mass.
    Collapse {
        block: Option<usize>,
        component: usize,
        reseeded: bool,
    },
    /// EM stopped at the iteration cap.
    IterationCap { block: Option<usize>, iterations: usize },
}

impl std::fmt::Display for TrainingWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let block = |b: &Option<usize>| b.map(|b| format!("block {b}: ")).unwrap_or_default();
        match self {
            TrainingWarning::Solver { block: b, warning } => write!(f, "{}{warning}", block(b)),
            TrainingWarning::Collapse {
                block: b,
                component,
                reseeded,
            } => {
                write!(f, "{}component {component} collapsed", block(b))?;
                if *reseeded {
                    write!(f, " and was reseeded")
                } else {
                    write!(f, "; reseed limit reached")
                }
            }
            TrainingWarning::IterationCap { block: b, iterations } => {
                write!(f, "{}EM stopped at the cap of {iterations} iterations", block(b))
            }
        }
    }
}

/// Reseeds every component with mass below `1e-8·N` from the rows with the
/// lowest log-likelihood. Returns whether anything was reseeded.
pub(crate) fn reseed_collapsed(
    r: &mut Responsibilities,
    logliks: &[f64],
    reseeds: &mut usize,
    max_reseeds: usize,
    block: Option<usize>,
    warnings: &mut Vec<TrainingWarning>,
) -> bool {
    let (n, k) = (r.n(), r.k());
    if k == 1 {
        return false;
    }
    let mass = r.mass();
    let collapsed: Vec<usize> = (0..k).filter(|c| mass[*c] < 1e-8 * n as f64).collect();
    if collapsed.is_empty() {
        return false;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| logliks[*a].total_cmp(&logliks[*b]).then(a.cmp(b)));
    let take = (n / (2 * k)).max(1);
    let mut cols = std::mem::replace(r, Responsibilities::ones(1)).into_columns();
    let mut changed = false;
    let mut next = 0;
    for c in collapsed {
        if *reseeds >= max_reseeds {
            warnings.push(TrainingWarning::Collapse {
                block,
                component: c,
                reseeded: false,
            });
            continue;
        }
        *reseeds += 1;
        changed = true;
        for &i in order.iter().cycle().skip(next).take(take) {
            for (h, col) in cols.iter_mut().enumerate() {
                col[i] = if h == c { 1.0 } else { 0.0 };
            }
        }
        next = (next + take) % n;
        warnings.push(TrainingWarning::Collapse {
            block,
            component: c,
            reseeded: true,
        });
    }
    *r = Responsibilities::from_columns(cols).expect("reseeded responsibilities are valid");
    changed
}

/// Which dimensions a block covers, and how its latent prior is modeled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BlockSpec {
    pub start: usize,
    pub end: usize,
    pub k: usize,
    pub mode: SharingMode,
    /// Whether the prior is a gate on `x_{<start}` (sequence blocks) rather
    /// than free mixing weights.
    pub gated: bool,
    pub block: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PriorFit {
    Mixing(Vec<f64>),
    Gate(GateWeights),
}

impl PriorFit {
    /// Log prior probabilities of every component for every row (K×N).
    fn log_probs(&self, data: &Dataset) -> Vec<Vec<f64>> {
        let n = data.n();
        match self {
            PriorFit::Mixing(m) => m.iter().map(|p| vec![p.ln(); n]).collect(),
            PriorFit::Gate(g) => {
                let rows: Vec<Vec<f64>> = (0..n)
                    .into_par_iter()
                    .map(|i| g.log_probs(&data.row(i)))
                    .collect();
                (0..g.len()).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
            }
        }
    }

    fn penalty(&self, cfg: &SolverConfig) -> f64 {
        match self {
            PriorFit::Mixing(_) => 0.0,
            PriorFit::Gate(g) => g.penalty(cfg.lambda, cfg.lambda0()),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BlockFit {
    pub components: ComponentSet,
    pub prior: PriorFit,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub responsibilities: Responsibilities,
    pub warnings: Vec<TrainingWarning>,
}

fn family(kind: DataKind) -> Family {
    match kind {
        DataKind::Binary => Family::Logistic,
        DataKind::Continuous => Family::Linear,
    }
}

fn m_step_prior(
    train: &Dataset,
    spec: &BlockSpec,
    cfg: &SolverConfig,
    r: &Responsibilities,
    warm: Option<&PriorFit>,
) -> Result<(PriorFit, Option<FitStatus>)> {
    let n = r.n() as f64;
    let mixing: Vec<f64> = r.mass().into_iter().map(|m| m / n).collect();
    if !spec.gated {
        return Ok((PriorFit::Mixing(mixing), None));
    }
    if spec.start == 0 || spec.k == 1 {
        return Ok((PriorFit::Gate(GateWeights::from_probabilities(&mixing)), None));
    }
    let warm = match warm {
        Some(PriorFit::Gate(g)) => Some(g),
        _ => None,
    };
    let fit = fit_multiclass_gate(
        train.predictors(spec.start),
        &r.columns(),
        &SampleWeights::uniform(train.n()),
        cfg,
        warm,
    )?;
    Ok((PriorFit::Gate(fit.value), Some(fit.status)))
}

type DimFit = (DimParams, Option<Vec<f64>>, Vec<(Option<usize>, FitStatus)>);

fn m_step_components(
    train: &Dataset,
    spec: &BlockSpec,
    cfg: &SolverConfig,
    r: &Responsibilities,
    warm: Option<&ComponentSet>,
) -> Result<(ComponentSet, Vec<SolverWarning>)> {
    let k = spec.k;
    let kind = train.kind();
    let dims: Vec<usize> = (spec.start..spec.end).collect();
    let fits: Vec<DimFit> = if k == 1 || spec.mode == SharingMode::Untied {
        let weights: Vec<SampleWeights> = (0..k)
            .map(|h| SampleWeights::new(r.column(h).to_vec()))
            .collect::<Result<_>>()?;
        // a single component keeps the plain network's zero intercept on
        // centered continuous data
        let intercept = k > 1;
        let tasks: Vec<(usize, usize)> = dims.iter().flat_map(|&d| (0..k).map(move |h| (d, h))).collect();
        let single: Vec<(SparseWeights, Option<f64>, FitStatus)> = tasks
            .par_iter()
            .map(|&(d, h)| {
                let ws = warm.map(|c| c.effective(d, h));
                let (cond, status) = fit_conditional(train, d, &weights[h], cfg, intercept, ws)?;
                Ok((cond.weights().clone(), cond.sigma(), status))
            })
            .collect::<Result<_>>()?;
        let mut it = single.into_iter();
        dims.iter()
            .map(|_| {
                let parts: Vec<_> = it.by_ref().take(k).collect();
                let sigma = match kind {
                    DataKind::Binary => None,
                    DataKind::Continuous => Some(parts.iter().map(|p| p.1.unwrap_or(1.0)).collect()),
                };
                let statuses = parts
                    .iter()
                    .enumerate()
                    .map(|(h, p)| ((k > 1).then_some(h), p.2))
                    .collect();
                let ws: Vec<SparseWeights> = parts.into_iter().map(|p| p.0).collect();
                let params = if k == 1 {
                    DimParams::from_single(spec.mode, ws.into_iter().next().expect("one component"))
                } else {
                    DimParams::Untied(ws)
                };
                (params, sigma, statuses)
            })
            .collect()
    } else {
        let resp = r.columns();
        dims.par_iter()
            .map(|&d| {
                let x = train.predictors(d);
                let y = train.column(d);
                let fam = family(kind);
                let (params, status) = match spec.mode {
                    SharingMode::Tied => {
                        let ws = match warm.map(|c| c.dim_params(d)) {
                            Some(DimParams::Tied(t)) => Some(t),
                            _ => None,
                        };
                        let fit = fit_tied(x, fam, &[y], &resp, cfg, ws)?;
                        (DimParams::Tied(fit.value), fit.status)
                    }
                    SharingMode::Auto => {
                        let ws = match warm.map(|c| c.dim_params(d)) {
                            Some(DimParams::Auto(s)) => Some(s),
                            _ => None,
                        };
                        let fit = fit_auto_shared(x, fam, &[y], &resp, cfg, true, ws)?;
                        (DimParams::Auto(fit.value), fit.status)
                    }
                    SharingMode::Untied => unreachable!("untied blocks are fit per component"),
                };
                let sigma = match kind {
                    DataKind::Binary => None,
                    DataKind::Continuous => Some(
                        (0..k)
                            .map(|h| residual_sigma(y, resp[h], &params.component(h), &x))
                            .collect(),
                    ),
                };
                Ok((params, sigma, vec![(None, status)]))
            })
            .collect::<Result<_>>()?
    };
    let mut params = Vec::with_capacity(fits.len());
    let mut sigmas = Vec::with_capacity(fits.len());
    let mut warnings = Vec::new();
    for (d, (p, s, statuses)) in dims.iter().zip(fits) {
        params.push(p);
        sigmas.push(s.unwrap_or_default());
        for (component, status) in statuses {
            if !status.converged {
                warnings.push(SolverWarning {
                    dim: *d,
                    component,
                    status,
                });
            }
        }
    }
    let sigma = (kind == DataKind::Continuous).then_some(sigmas);
    Ok((ComponentSet::new(kind, spec.start, params, sigma)?, warnings))
}

/// EM on one block. Each iteration runs the M-step on the current
/// responsibilities (warm-started from the previous iterate), records the
/// mean penalized training objective of the new parameters, and then runs the
/// E-step.
pub(crate) fn run_block_em(
    train: &Dataset,
    spec: BlockSpec,
    cfg: &SolverConfig,
    init: Responsibilities,
    opts: &EmOptions,
) -> Result<BlockFit> {
    cfg.validate()?;
    if spec.k == 0 {
        return Err(Error::invalid("the number of components must be at least 1"));
    }
    if spec.start >= spec.end || spec.end > train.dim() {
        return Err(Error::invalid("block dimension range is empty or out of bounds"));
    }
    if init.k() != spec.k || init.n() != train.n() {
        return Err(Error::invalid(format!(
            "initial responsibilities are {}×{}, expected {}×{}",
            init.n(),
            init.k(),
            train.n(),
            spec.k
        )));
    }
    if opts.max_iter == 0 {
        return Err(Error::invalid("EM needs at least one iteration"));
    }
    let n = train.n() as f64;
    let mut r = init;
    let mut comps: Option<ComponentSet> = None;
    let mut prior: Option<PriorFit> = None;
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut solver_warnings = Vec::new();
    let mut reseeds = 0;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let (p, gate_status) = m_step_prior(train, &spec, cfg, &r, prior.as_ref())?;
        let (c, sw) = m_step_components(train, &spec, cfg, &r, comps.as_ref())?;
        solver_warnings = sw;
        if let Some(status) = gate_status.filter(|s| !s.converged) {
            solver_warnings.push(SolverWarning {
                dim: spec.start,
                component: None,
                status,
            });
        }
        let log_prior = p.log_probs(train);
        let comp_ll = c.component_logliks(train);
        let log_joint: Vec<Vec<f64>> = log_prior
            .into_iter()
            .zip(comp_ll)
            .map(|(a, b)| a.into_iter().zip(b).map(|(a, b)| a + b).collect())
            .collect();
        let (next, lls) = Responsibilities::from_log_joint(&log_joint);
        let objective = (lls.iter().sum::<f64>() - c.penalty(cfg) - p.penalty(cfg)) / n;
        r = next;
        comps = Some(c);
        prior = Some(p);
        let reseeded = reseed_collapsed(&mut r, &lls, &mut reseeds, opts.max_reseeds, spec.block, &mut warnings);
        let improvement = trace.last().map(|last| objective - last);
        trace.push(objective);
        if spec.k == 1 || (!reseeded && improvement.is_some_and(|d| d < opts.tol)) {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(TrainingWarning::IterationCap {
            block: spec.block,
            iterations,
        });
    }
    warnings.extend(solver_warnings.into_iter().map(|warning| TrainingWarning::Solver {
        block: spec.block,
        warning,
    }));
    Ok(BlockFit {
        components: comps.expect("at least one iteration ran"),
        prior: prior.expect("at least one iteration ran"),
        trace,
        iterations,
        responsibilities: r,
        warnings,
    })
}

/// A trained mixture with its EM diagnostics.
#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub model: MixtureModel,
    /// Mean penalized training log-likelihood after every iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Responsibilities from the final E-step.
    pub responsibilities: Responsibilities,
    pub warnings: Vec<TrainingWarning>,
}

/// EM with the default stopping rule (improvement below 1e-5 nats per
/// example, at most 100 iterations).
pub fn em_fit(
    train: &Dataset,
    k: usize,
    mode: SharingMode,
    cfg: &SolverConfig,
    init: &Responsibilities,
) -> Result<MixtureFit> {
    em_fit_with(train, k, mode, cfg, init, &EmOptions::default())
}

pub fn em_fit_with(
    train: &Dataset,
    k: usize,
    mode: SharingMode,
    cfg: &SolverConfig,
    init: &Responsibilities,
    opts: &EmOptions,
) -> Result<MixtureFit> {
    let spec = BlockSpec {
        start: 0,
        end: train.dim(),
        k,
        mode,
        gated: false,
        block: None,
    };
    let fit = run_block_em(train, spec, cfg, init.clone(), opts)?;
    let mixing = match fit.prior {
        PriorFit::Mixing(m) => m,
        PriorFit::Gate(_) => unreachable!("ungated block"),
    };
    Ok(MixtureFit {
        model: MixtureModel::new(mixing, fit.components, train.meta().cloned())?,
        trace: fit.trace,
        iterations: fit.iterations,
        responsibilities: fit.responsibilities,
        warnings: fit.warnings,
    })
}
