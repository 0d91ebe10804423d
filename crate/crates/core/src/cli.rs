//! The experiment protocol behind the `sparn` binary: grid selection on a
//! validation split, evaluation, sampling and nearest-neighbor diagnostics.
//!
//! Every command returns a report that renders as `key=value` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::arn::{arn_lambda_max, fit_arn};
use crate::data::{encode, load_matrix, write_matrix, DataKind, Dataset, MatrixFormat, RawMatrix, Role};
use crate::error::{Error, Result};
use crate::format::{load_model, save_model, Model};
use crate::math::mean_and_stderr;
use crate::mixture::{component_grid, em_fit, init_product_mixture, SharingMode};
use crate::pnm;
use crate::seqmix::{fit_sequence, BlockConfig, Partition};
use crate::solvers::{lambda_grid, SolverConfig};

/// Process exit code for an error: 1 usage, 2 data, 3 training.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) => 1,
        Error::Training(_) => 3,
        Error::Parse { .. }
        | Error::Encoding { .. }
        | Error::Dimension { .. }
        | Error::Format { .. }
        | Error::File { .. }
        | Error::Io(_) => 2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Arn,
    Mixture,
    Sequence,
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arn" => Ok(ModelFamily::Arn),
            "mixture" => Ok(ModelFamily::Mixture),
            "sequence" => Ok(ModelFamily::Sequence),
            other => Err(Error::invalid(format!("unknown model family `{other}`"))),
        }
    }
}

/// Penalties to try: explicit values, or a log-spaced path below λ_max of
/// the training data.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    Values(Vec<f64>),
    Path { count: usize, min_ratio: f64 },
}

impl std::str::FromStr for LambdaGrid {
    type Err = Error;

    /// `"0.5,1,2"`, `"auto"` (30 values down to 1e-3·λ_max) or
    /// `"auto:COUNT:MIN_RATIO"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("auto") {
            if rest.is_empty() {
                return Ok(LambdaGrid::Path {
                    count: 30,
                    min_ratio: 1e-3,
                });
            }
            let parts: Vec<&str> = rest.trim_start_matches(':').split(':').collect();
            return match parts.as_slice() {
                [c, r] => {
                    let count: usize = c.parse().map_err(|_| Error::invalid(format!("bad grid size `{c}`")))?;
                    let min_ratio: f64 = r.parse().map_err(|_| Error::invalid(format!("bad ratio `{r}`")))?;
                    if count == 0 || !(min_ratio > 0.0 && min_ratio <= 1.0) {
                        return Err(Error::invalid("auto grids need a positive size and a ratio in (0, 1]"));
                    }
                    Ok(LambdaGrid::Path { count, min_ratio })
                }
                _ => Err(Error::invalid("expected `auto:COUNT:MIN_RATIO`")),
            };
        }
        let values: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad penalty `{v}`"))))
            .collect::<Result<_>>()?;
        if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("penalties must be positive and finite"));
        }
        Ok(LambdaGrid::Values(values))
    }
}

/// Component counts to try. Each candidate lists one K per block; a single
/// value applies to every block.
#[derive(Debug, Clone, PartialEq)]
pub enum ComponentsGrid {
    Values(Vec<Vec<usize>>),
    /// The default ladder for the training size and sharing mode.
    Auto,
}

impl std::str::FromStr for ComponentsGrid {
    type Err = Error;

    /// `"1,2,5"`, `"5/5/10/10"` (per block), or `"auto"`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "auto" {
            return Ok(ComponentsGrid::Auto);
        }
        let values = s
            .split(',')
            .map(|cand| {
                cand.split('/')
                    .map(|v| match v.trim().parse::<usize>() {
                        Ok(k) if k > 0 => Ok(k),
                        _ => Err(Error::invalid(format!("bad component count `{v}`"))),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ComponentsGrid::Values(values))
    }
}

/// One selection experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train: PathBuf,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub kind: DataKind,
    pub family: ModelFamily,
    pub mode: SharingMode,
    pub lambda_grid: LambdaGrid,
    pub components_grid: ComponentsGrid,
    /// Partition of a sequence model (see [`Partition::parse`]).
    pub partition: Option<String>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub intercept_scale: f64,
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 13] = [
        "train",
        "valid",
        "test",
        "kind",
        "family",
        "mode",
        "lambda-grid",
        "components-grid",
        "partition",
        "seed",
        "threads",
        "out",
        "intercept-scale",
    ];

    /// Reads `key=value` lines (`#` starts a comment).
    pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, found `{line}`"),
            })?;
            let key = k.trim().replace('_', "-");
            if !Self::KEYS.contains(&key.as_str()) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("unknown key `{}`", k.trim()),
                });
            }
            map.insert(key, v.trim().to_string());
        }
        Ok(map)
    }

    /// Builds a config from a config file's entries with flag values taking
    /// precedence.
    pub fn from_sources(
        file: BTreeMap<String, String>,
        overrides: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut map = file;
        for (k, v) in overrides {
            map.insert(k, v);
        }
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| map.get(k).map(String::as_str);
        let train = get("train")
            .ok_or_else(|| Error::invalid("a training file is required (--train)"))?
            .into();
        let kind = get("kind").unwrap_or("binary").parse()?;
        let family = get("family").unwrap_or("arn").parse()?;
        let mode = get("mode").unwrap_or("untied").parse()?;
        let lambda_grid = get("lambda-grid").unwrap_or("auto").parse()?;
        let components_grid = get("components-grid").unwrap_or("1").parse()?;
        let seed = match get("seed") {
            Some(s) => s.parse().map_err(|_| Error::invalid(format!("bad seed `{s}`")))?,
            None => 0,
        };
        let threads = match get("threads") {
            Some(s) => match s.parse::<usize>() {
                Ok(t) if t > 0 => Some(t),
                _ => return Err(Error::invalid(format!("bad thread count `{s}`"))),
            },
            None => None,
        };
        let intercept_scale = match get("intercept-scale") {
            Some(s) => s.parse().map_err(|_| Error::invalid(format!("bad intercept scale `{s}`")))?,
            None => SolverConfig::default().intercept_scale,
        };
        let cfg = Self {
            train,
            valid: get("valid").map(PathBuf::from),
            test: get("test").map(PathBuf::from),
            kind,
            family,
            mode,
            lambda_grid,
            components_grid,
            partition: get("partition").map(str::to_string),
            seed,
            threads,
            out: get("out").map(PathBuf::from),
            intercept_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let ComponentsGrid::Values(v) = &self.components_grid {
            if v.is_empty() {
                return Err(Error::invalid("the component grid is empty"));
            }
        }
        if let LambdaGrid::Values(v) = &self.lambda_grid {
            if v.is_empty() {
                return Err(Error::invalid("the penalty grid is empty"));
            }
        }
        if self.family == ModelFamily::Sequence && self.partition.is_none() {
            return Err(Error::invalid("sequence models need a partition (--partition)"));
        }
        SolverConfig {
            intercept_scale: self.intercept_scale,
            ..SolverConfig::default()
        }
        .validate()
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {t} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn load_raw(path: &Path) -> Result<RawMatrix> {
    load_matrix(path, MatrixFormat::from_path(path))
}

/// Test log-likelihood summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    /// Mean log-likelihood in nats per example (standardized space for
    /// continuous data).
    pub mean: f64,
    /// Sample standard deviation of the per-example values over √n.
    pub stderr: f64,
    pub logliks: Vec<f64>,
    pub lambda: Option<f64>,
    pub components: Vec<usize>,
    pub seconds: f64,
    pub warnings: Vec<String>,
    /// Σ log std of the training columns; `mean − log_jacobian` is the raw
    /// space value.
    pub log_jacobian: Option<f64>,
}

impl EvalReport {
    fn new(logliks: Vec<f64>, model: &Model, seconds: f64) -> Self {
        let (mean, stderr) = mean_and_stderr(&logliks);
        Self {
            n: logliks.len(),
            mean,
            stderr,
            logliks,
            lambda: None,
            components: model.components(),
            seconds,
            warnings: Vec::new(),
            log_jacobian: model.meta().map(|m| m.log_jacobian()),
        }
    }

    /// Machine-readable `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "mean_loglik={:?}", self.mean);
        let _ = writeln!(s, "std_error={:?}", self.stderr);
        if let Some(l) = self.lambda {
            let _ = writeln!(s, "lambda={l:?}");
        }
        let ks: Vec<String> = self.components.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(s, "components={}", ks.join("/"));
        if let Some(j) = self.log_jacobian {
            let _ = writeln!(s, "log_jacobian={j:?}");
            let _ = writeln!(s, "raw_mean_loglik={:?}", self.mean - j);
        }
        let _ = writeln!(s, "seconds={:.3}", self.seconds);
        let _ = writeln!(s, "warnings={}", self.warnings.len());
        s
    }

    /// One value per line, shortest round-trip representation.
    pub fn logliks_text(&self) -> String {
        self.logliks.iter().map(|v| format!("{v:?}\n")).collect()
    }
}

type Fitted = (Model, Vec<String>);

/// Outcome of one (λ, K) grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub lambda: f64,
    pub components: Vec<usize>,
    pub valid_mean: Option<f64>,
    pub error: Option<String>,
    pub warnings: usize,
}

#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub model: Model,
    pub lambda: f64,
    pub components: Vec<usize>,
    pub grid: Vec<GridPoint>,
    /// Test report, when a test split is configured.
    pub test: Option<EvalReport>,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

impl SelectionOutcome {
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let ks: Vec<String> = self.components.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(s, "family={}", self.model.family());
        let _ = writeln!(s, "selected_lambda={:?}", self.lambda);
        let _ = writeln!(s, "selected_components={}", ks.join("/"));
        let _ = writeln!(s, "grid_points={}", self.grid.len());
        let _ = writeln!(s, "failed_points={}", self.grid.iter().filter(|g| g.error.is_some()).count());
        let _ = writeln!(s, "train_seconds={:.3}", self.seconds);
        let _ = writeln!(s, "solver_warnings={}", self.warnings.len());
        if let Some(t) = &self.test {
            for line in t.to_kv().lines() {
                let _ = writeln!(s, "test_{line}");
            }
        }
        s
    }

    pub fn grid_text(&self) -> String {
        let mut s = String::new();
        for g in &self.grid {
            let ks: Vec<String> = g.components.iter().map(|k| k.to_string()).collect();
            let _ = write!(s, "lambda={:?} components={}", g.lambda, ks.join("/"));
            match (&g.valid_mean, &g.error) {
                (_, Some(e)) => {
                    let _ = write!(s, " status=failed reason={}", e.replace(char::is_whitespace, "_"));
                }
                (Some(v), None) => {
                    let _ = write!(s, " valid_mean_loglik={v:?} warnings={}", g.warnings);
                }
                (None, None) => {
                    let _ = write!(s, " warnings={}", g.warnings);
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Loaded and encoded splits of an experiment.
struct Splits {
    train: Dataset,
    valid: Option<Dataset>,
    test: Option<Dataset>,
    partition: Option<(Partition, Option<Vec<usize>>)>,
}

fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    let partition = cfg.partition.as_deref().map(Partition::parse).transpose()?;
    let order = partition.as_ref().and_then(|(_, o)| o.clone());
    let prepare = |path: &Path| -> Result<RawMatrix> {
        let raw = load_raw(path)?;
        match &order {
            Some(o) => raw.permute_columns(o),
            None => Ok(raw),
        }
    };
    let train_raw = prepare(&cfg.train)?;
    let train = encode(&train_raw, cfg.kind, None)?.with_role(Role::Train);
    let meta = train.meta().cloned();
    let other = |p: &Option<PathBuf>, role: Role| -> Result<Option<Dataset>> {
        p.as_deref()
            .map(|p| {
                let raw = prepare(p)?;
                if raw.cols() != train.dim() {
                    return Err(Error::Dimension {
                        expected: train.dim(),
                        got: raw.cols(),
                    });
                }
                Ok(encode(&raw, cfg.kind, meta.as_ref())?.with_role(role))
            })
            .transpose()
    };
    let valid = other(&cfg.valid, Role::Valid)?;
    let test = other(&cfg.test, Role::Test)?;
    if let Some((p, _)) = &partition {
        if p.dim() != train.dim() {
            return Err(Error::Dimension {
                expected: train.dim(),
                got: p.dim(),
            });
        }
    }
    Ok(Splits {
        train,
        valid,
        test,
        partition,
    })
}

fn train_point(
    splits: &Splits,
    cfg: &ExperimentConfig,
    lambda: f64,
    ks: &[usize],
) -> Result<(Model, Vec<String>)> {
    let solver = SolverConfig {
        lambda,
        intercept_scale: cfg.intercept_scale,
        ..SolverConfig::default()
    };
    let train = &splits.train;
    match cfg.family {
        ModelFamily::Arn => {
            let fit = fit_arn(train, &solver)?;
            Ok((Model::Arn(fit.model), fit.warnings.iter().map(|w| w.to_string()).collect()))
        }
        ModelFamily::Mixture => {
            let k = ks[0];
            let init = init_product_mixture(train, k, cfg.seed)?;
            let fit = em_fit(train, k, cfg.mode, &solver, &init.responsibilities)?;
            let warnings = init.warnings.iter().chain(&fit.warnings).map(|w| w.to_string()).collect();
            Ok((Model::Mixture(fit.model), warnings))
        }
        ModelFamily::Sequence => {
            let (partition, order) = splits.partition.as_ref().expect("validated partition");
            let blocks: Vec<BlockConfig> = (0..partition.len())
                .map(|l| BlockConfig {
                    k: if ks.len() == 1 { ks[0] } else { ks[l] },
                    mode: cfg.mode,
                })
                .collect();
            let fit = fit_sequence(train, partition, &blocks, &solver, cfg.seed)?;
            let model = match order {
                Some(o) => fit.model.with_order(o.clone())?,
                None => fit.model,
            };
            Ok((Model::Sequence(model), fit.warnings.iter().map(|w| w.to_string()).collect()))
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Grid search over (λ, K): every point trains on the training split and is
/// scored by mean validation log-likelihood. The best point wins (ties go to
/// the larger λ, then fewer components) and its model is kept as trained;
/// the test split is scored once, for that model only.
pub fn cmd_select_train(cfg: &ExperimentConfig) -> Result<SelectionOutcome> {
    cfg.validate()?;
    with_threads(cfg.threads, || select_inner(cfg))?
}

fn select_inner(cfg: &ExperimentConfig) -> Result<SelectionOutcome> {
    let start = Instant::now();
    let splits = load_splits(cfg)?;
    let n = splits.train.n();
    let lambdas = match &cfg.lambda_grid {
        LambdaGrid::Values(v) => v.clone(),
        LambdaGrid::Path { count, min_ratio } => {
            let lm = arn_lambda_max(&splits.train, cfg.intercept_scale)?;
            // data with no dependencies at all still needs a positive penalty
            let lm = if lm > 0.0 { lm } else { 1.0 };
            lambda_grid(lm, *count, *min_ratio)
        }
    };
    let blocks = splits.partition.as_ref().map_or(1, |(p, _)| p.len());
    let ks: Vec<Vec<usize>> = match (&cfg.components_grid, cfg.family) {
        (_, ModelFamily::Arn) => vec![vec![1]],
        (ComponentsGrid::Auto, _) => component_grid(n, cfg.mode).into_iter().map(|k| vec![k]).collect(),
        (ComponentsGrid::Values(v), _) => v.clone(),
    };
    for k in &ks {
        let ok = match cfg.family {
            ModelFamily::Sequence => k.len() == 1 || k.len() == blocks,
            _ => k.len() == 1,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "component candidate {k:?} does not match {blocks} block(s)"
            )));
        }
    }
    let points: Vec<(f64, Vec<usize>)> = ks
        .iter()
        .flat_map(|k| lambdas.iter().map(move |l| (*l, k.clone())))
        .collect();
    if points.len() > 1 && splits.valid.is_none() {
        return Err(Error::invalid("selecting among several grid points needs a validation file (--valid)"));
    }
    let results: Vec<(GridPoint, Option<Fitted>)> = points
        .par_iter()
        .map(|(lambda, k)| {
            let components = match cfg.family {
                ModelFamily::Sequence if k.len() == 1 => vec![k[0]; blocks],
                _ => k.clone(),
            };
            let scored = train_point(&splits, cfg, *lambda, k).and_then(|(m, w)| {
                let v = match &splits.valid {
                    Some(valid) => Some(mean(&m.loglik_dataset(valid)?)),
                    None => None,
                };
                Ok((m, w, v))
            });
            match scored {
                Ok((m, w, v)) if v.is_none_or(f64::is_finite) => (
                    GridPoint {
                        lambda: *lambda,
                        components,
                        valid_mean: v,
                        error: None,
                        warnings: w.len(),
                    },
                    Some((m, w)),
                ),
                Ok(_) => (
                    GridPoint {
                        lambda: *lambda,
                        components,
                        valid_mean: None,
                        error: Some("non-finite validation log-likelihood".into()),
                        warnings: 0,
                    },
                    None,
                ),
                Err(e) => (
                    GridPoint {
                        lambda: *lambda,
                        components,
                        valid_mean: None,
                        error: Some(e.to_string()),
                        warnings: 0,
                    },
                    None,
                ),
            }
        })
        .collect();
    let best = results
        .iter()
        .enumerate()
        .filter(|(_, (g, m))| g.error.is_none() && m.is_some())
        .max_by(|(_, (a, _)), (_, (b, _))| {
            let score = |g: &GridPoint| g.valid_mean.unwrap_or(0.0);
            score(a)
                .total_cmp(&score(b))
                .then(a.lambda.total_cmp(&b.lambda))
                .then(b.components.iter().sum::<usize>().cmp(&a.components.iter().sum::<usize>()))
        })
        .map(|(i, _)| i);
    let Some(best) = best else {
        let reasons: Vec<String> = results
            .iter()
            .filter_map(|(g, _)| g.error.clone())
            .collect();
        return Err(Error::Training(format!(
            "every grid point failed: {}",
            reasons.first().cloned().unwrap_or_default()
        )));
    };
    let grid: Vec<GridPoint> = results.iter().map(|(g, _)| g.clone()).collect();
    let (lambda, components) = (grid[best].lambda, grid[best].components.clone());
    let (model, warnings) = results
        .into_iter()
        .nth(best)
        .and_then(|(_, m)| m)
        .expect("best point has a model");
    let seconds = start.elapsed().as_secs_f64();
    let test = match &splits.test {
        Some(t) => {
            let t0 = Instant::now();
            let lls = model.loglik_dataset(t)?;
            let mut r = EvalReport::new(lls, &model, t0.elapsed().as_secs_f64());
            r.lambda = Some(lambda);
            r.warnings = warnings.clone();
            Some(r)
        }
        None => None,
    };
    let outcome = SelectionOutcome {
        model,
        lambda,
        components,
        grid,
        test,
        warnings,
        seconds,
    };
    if let Some(dir) = &cfg.out {
        write_selection(dir, &outcome)?;
    }
    Ok(outcome)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// Writes `model.txt`, `report.txt`, `grid.txt` and (with a test split)
/// `test_logliks.txt` into `dir`.
pub fn write_selection(dir: &Path, outcome: &SelectionOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    save_model(dir.join("model.txt"), &outcome.model)?;
    write_file(&dir.join("report.txt"), outcome.to_kv())?;
    write_file(&dir.join("grid.txt"), outcome.grid_text())?;
    if !outcome.warnings.is_empty() {
        write_file(&dir.join("warnings.txt"), outcome.warnings.join("\n") + "\n")?;
    }
    if let Some(t) = &outcome.test {
        write_file(&dir.join("test_logliks.txt"), t.logliks_text())?;
    }
    Ok(())
}

/// Encodes raw data for a trained model: reorders columns when the model
/// was trained on a grid partition, then applies the model's encoding.
pub fn encode_for_model(model: &Model, raw: &RawMatrix) -> Result<Dataset> {
    if raw.cols() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: raw.cols(),
        });
    }
    let raw = match model.order() {
        Some(o) => raw.permute_columns(o)?,
        None => raw.clone(),
    };
    encode(&raw, model.kind(), model.meta())
}

/// Scores every row of a data file under a saved model.
pub fn cmd_eval(model_path: &Path, data_path: &Path) -> Result<EvalReport> {
    let model = load_model(model_path)?;
    eval_model(&model, &load_raw(data_path)?)
}

pub fn eval_model(model: &Model, raw: &RawMatrix) -> Result<EvalReport> {
    let start = Instant::now();
    let data = encode_for_model(model, raw)?;
    let lls = model.loglik_dataset(&data)?;
    Ok(EvalReport::new(lls, model, start.elapsed().as_secs_f64()))
}

/// Image shape for sample and difference rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageShape {
    pub width: usize,
    pub height: usize,
}

impl std::str::FromStr for ImageShape {
    type Err = Error;

    /// `WIDTHxHEIGHT`, e.g. `28x28`.
    fn from_str(s: &str) -> Result<Self> {
        let (w, h) = s
            .split_once('x')
            .ok_or_else(|| Error::invalid(format!("expected WIDTHxHEIGHT, found `{s}`")))?;
        let num = |v: &str| match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::invalid(format!("bad image size `{v}`"))),
        };
        Ok(Self {
            width: num(w)?,
            height: num(h)?,
        })
    }
}

/// Draws `count` samples (sample `i` uses seed `seed + i`) and returns them
/// in raw data space and in the original column order: {0,1} for binary
/// data, de-standardized values for continuous data.
pub fn draw_samples(model: &Model, count: usize, seed: u64) -> RawMatrix {
    let dim = model.dim();
    let rows: Vec<Vec<f64>> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let x = model.sample(seed.wrapping_add(i));
            let decoded: Vec<f64> = match (model.kind(), model.meta()) {
                (DataKind::Binary, _) => x.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect(),
                (DataKind::Continuous, Some(m)) => x.iter().enumerate().map(|(j, z)| m.decode(j, *z)).collect(),
                (DataKind::Continuous, None) => x,
            };
            match model.order() {
                Some(o) => {
                    let mut raster = vec![0.0; dim];
                    for (i, &src) in o.iter().enumerate() {
                        raster[src] = decoded[i];
                    }
                    raster
                }
                None => decoded,
            }
        })
        .collect();
    RawMatrix::new(count, dim, rows.concat()).expect("consistent sample shape")
}

/// Writes `samples.txt` (one raw-space sample per line) and, with an image
/// shape, one P5 file per sample into `out`. Returns the written paths.
pub fn cmd_sample(
    model_path: &Path,
    count: usize,
    seed: u64,
    out: &Path,
    image: Option<ImageShape>,
) -> Result<Vec<PathBuf>> {
    let model = load_model(model_path)?;
    sample_to_dir(&model, count, seed, out, image)
}

pub fn sample_to_dir(
    model: &Model,
    count: usize,
    seed: u64,
    out: &Path,
    image: Option<ImageShape>,
) -> Result<Vec<PathBuf>> {
    if let Some(s) = image {
        if s.width * s.height != model.dim() {
            return Err(Error::invalid(format!(
                "a {}x{} image does not match {} dimensions",
                s.width,
                s.height,
                model.dim()
            )));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::file(out, e))?;
    let samples = draw_samples(model, count, seed);
    let text = out.join("samples.txt");
    write_matrix(&text, &samples, MatrixFormat::DenseText)?;
    let mut paths = vec![text];
    if let Some(shape) = image {
        for i in 0..count {
            let row = samples.row(i);
            let pixels = match model.kind() {
                DataKind::Binary => row.iter().map(|v| if *v > 0.0 { 255 } else { 0 }).collect(),
                DataKind::Continuous => pnm::continuous_to_gray(row),
            };
            let path = out.join(format!("sample_{i:04}.pgm"));
            write_file(&path, pnm::graymap(shape.width, shape.height, &pixels)?)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Hamming,
    Euclidean,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(Metric::Hamming),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Maps {0,1} or ±1 data to booleans; anything else is an encoding error.
fn bits(raw: &RawMatrix) -> Result<Vec<bool>> {
    raw.values()
        .iter()
        .enumerate()
        .map(|(i, v)| match *v {
            1.0 => Ok(true),
            0.0 | -1.0 => Ok(false),
            value => Err(Error::Encoding {
                row: i / raw.cols().max(1),
                col: i % raw.cols().max(1),
                value,
            }),
        })
        .collect()
}

/// Exact nearest training row of every sample (ties go to the lowest index).
/// Hamming distance requires binary data ({0,1} or ±1).
pub fn nearest(samples: &RawMatrix, train: &RawMatrix, metric: Metric) -> Result<Vec<Neighbor>> {
    if samples.cols() != train.cols() {
        return Err(Error::Dimension {
            expected: train.cols(),
            got: samples.cols(),
        });
    }
    if train.rows() == 0 {
        return Err(Error::invalid("the training file has no rows"));
    }
    let d = train.cols();
    let search = |dist: &(dyn Fn(usize, usize) -> f64 + Sync)| -> Vec<Neighbor> {
        (0..samples.rows())
            .into_par_iter()
            .map(|s| {
                let mut best = Neighbor {
                    index: 0,
                    distance: f64::INFINITY,
                };
                for t in 0..train.rows() {
                    let dv = dist(s, t);
                    if dv < best.distance {
                        best = Neighbor { index: t, distance: dv };
                    }
                }
                best
            })
            .collect()
    };
    Ok(match metric {
        Metric::Hamming => {
            let (sb, tb) = (bits(samples)?, bits(train)?);
            search(&|s, t| {
                sb[s * d..(s + 1) * d]
                    .iter()
                    .zip(&tb[t * d..(t + 1) * d])
                    .filter(|(a, b)| a != b)
                    .count() as f64
            })
        }
        Metric::Euclidean => search(&|s, t| {
            samples
                .row(s)
                .iter()
                .zip(train.row(t))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        }),
    })
}

/// Finds nearest training rows and optionally writes `nearest.txt` plus one
/// symmetric-difference P6 image per sample (binary data with an image
/// shape) into `out`.
pub fn cmd_nearest(
    samples_path: &Path,
    train_path: &Path,
    metric: Metric,
    image: Option<ImageShape>,
    out: Option<&Path>,
) -> Result<Vec<Neighbor>> {
    let samples = load_raw(samples_path)?;
    let train = load_raw(train_path)?;
    let found = nearest(&samples, &train, metric)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        write_file(&dir.join("nearest.txt"), nearest_text(&found))?;
        if let Some(shape) = image {
            let (sb, tb) = (bits(&samples)?, bits(&train)?);
            let d = train.cols();
            let pm = |b: &[bool]| -> Vec<f64> { b.iter().map(|v| if *v { 1.0 } else { -1.0 }).collect() };
            for (i, nb) in found.iter().enumerate() {
                let img = pnm::difference_pixmap(
                    shape.width,
                    shape.height,
                    &pm(&tb[nb.index * d..(nb.index + 1) * d]),
                    &pm(&sb[i * d..(i + 1) * d]),
                )?;
                write_file(&dir.join(format!("diff_{i:04}.ppm")), img)?;
            }
        }
    }
    Ok(found)
}

pub fn nearest_text(found: &[Neighbor]) -> String {
    found
        .iter()
        .enumerate()
        .map(|(i, n)| format!("sample={i} index={} distance={:?}\n", n.index, n.distance))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse() {
        assert_eq!("auto".parse::<LambdaGrid>().unwrap(), LambdaGrid::Path { count: 30, min_ratio: 1e-3 });
        assert_eq!(
            "auto:5:0.01".parse::<LambdaGrid>().unwrap(),
            LambdaGrid::Path { count: 5, min_ratio: 0.01 }
        );
        assert_eq!("1,2.5".parse::<LambdaGrid>().unwrap(), LambdaGrid::Values(vec![1.0, 2.5]));
        assert!("0,1".parse::<LambdaGrid>().is_err());
        assert_eq!(
            "2,5/5/10/10".parse::<ComponentsGrid>().unwrap(),
            ComponentsGrid::Values(vec![vec![2], vec![5, 5, 10, 10]])
        );
        assert!("0".parse::<ComponentsGrid>().is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let file = ExperimentConfig::parse_kv("train = a.txt\nseed=3 # comment\nfamily=mixture\n").unwrap();
        let cfg = ExperimentConfig::from_sources(file, [("seed".to_string(), "9".to_string())]).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.family, ModelFamily::Mixture);
        assert!(ExperimentConfig::parse_kv("bogus=1").is_err());
    }

    #[test]
    fn sequence_needs_partition() {
        let map: BTreeMap<String, String> = [("train", "a"), ("family", "sequence")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert!(matches!(ExperimentConfig::from_map(&map), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn hamming_example() {
        let s = RawMatrix::from_rows(&[vec![-1.0, 1.0, 1.0]]).unwrap();
        let t = RawMatrix::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let n = nearest(&s, &t, Metric::Hamming).unwrap();
        assert_eq!(n[0], Neighbor { index: 0, distance: 1.0 });
    }

    #[test]
    fn nearest_prefers_lowest_index() {
        let s = RawMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let t = RawMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(nearest(&s, &t, Metric::Euclidean).unwrap()[0], Neighbor { index: 2, distance: 0.0 });
        assert_eq!(nearest(&s, &t, Metric::Hamming).unwrap()[0].index, 2);
        let c = RawMatrix::from_rows(&[vec![0.5, 1.0]]).unwrap();
        assert!(matches!(nearest(&c, &t, Metric::Hamming), Err(Error::Encoding { .. })));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::invalid("x")), 1);
        assert_eq!(exit_code(&Error::Parse { line: 1, msg: "x".into() }), 2);
        assert_eq!(exit_code(&Error::Training("x".into())), 3);
    }
}
