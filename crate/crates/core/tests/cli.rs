mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use rand::Rng;
use sparn::cli::{
    cmd_eval, cmd_nearest, cmd_sample, cmd_select_train, eval_model, ComponentsGrid, ExperimentConfig,
    LambdaGrid, Metric, ModelFamily,
};
use sparn::data::{format_dense_text, write_matrix};
use sparn::format::{load_model, write_model};
use sparn::{AutoregressiveNet, DataKind, MatrixFormat, Model, RawMatrix, SharingMode};

fn chain_rows(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut row = vec![if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 }];
            for _ in 1..d {
                let p = if row[row.len() - 1] == 1.0 { 0.85 } else { 0.2 };
                row.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
            }
            row
        })
        .collect()
}

fn write_rows(path: &Path, rows: &[Vec<f64>]) {
    write_matrix(path, &RawMatrix::from_rows(rows).unwrap(), MatrixFormat::from_path(path)).unwrap();
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(d: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rng(d as u64);
        write_rows(&dir.path().join("train.txt"), &chain_rows(&mut r, 200, d));
        write_rows(&dir.path().join("valid.txt"), &chain_rows(&mut r, 80, d));
        write_rows(&dir.path().join("test.bin"), &chain_rows(&mut r, 80, d));
        Self { dir }
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, family: ModelFamily) -> ExperimentConfig {
        ExperimentConfig {
            train: self.path("train.txt"),
            valid: Some(self.path("valid.txt")),
            test: Some(self.path("test.bin")),
            kind: DataKind::Binary,
            family,
            mode: SharingMode::Untied,
            lambda_grid: LambdaGrid::Values(vec![2.0]),
            components_grid: ComponentsGrid::Values(vec![vec![1]]),
            partition: None,
            seed: 1,
            threads: None,
            out: Some(self.path("out")),
            intercept_scale: 10.0,
        }
    }
}

#[test]
fn single_point_grid_equals_plain_training() {
    let fx = Fixture::new(6);
    let cfg = fx.config(ModelFamily::Arn);
    let outcome = cmd_select_train(&cfg).unwrap();
    let train = sparn::data::encode_binary(&sparn::data::load_matrix(&cfg.train, MatrixFormat::DenseText).unwrap()).unwrap();
    let plain = sparn::arn::fit_arn(&train, &sparn::SolverConfig::with_lambda(2.0)).unwrap().model;
    assert_eq!(outcome.model, Model::Arn(plain));
    assert!(fx.path("out/model.txt").exists());
    assert!(fx.path("out/report.txt").exists());
}

#[test]
fn selection_prefers_the_better_validation_score() {
    let fx = Fixture::new(6);
    let mut cfg = fx.config(ModelFamily::Arn);
    cfg.lambda_grid = LambdaGrid::Values(vec![0.5, 400.0]);
    let outcome = cmd_select_train(&cfg).unwrap();
    let best = outcome
        .grid
        .iter()
        .max_by(|a, b| a.valid_mean.unwrap().total_cmp(&b.valid_mean.unwrap()))
        .unwrap();
    assert_eq!(outcome.lambda, best.lambda);
    // a huge penalty removes the chain dependencies and loses on validation
    assert_eq!(outcome.lambda, 0.5);
}

#[test]
fn ties_go_to_the_larger_penalty() {
    // independent uniform columns: every penalty above λ_max gives the same null model
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Vec<f64>> = (0..64).map(|i| (0..3).map(|j| ((i >> j) & 1) as f64).collect()).collect();
    for name in ["train.txt", "valid.txt"] {
        write_rows(&dir.path().join(name), &rows);
    }
    let cfg = ExperimentConfig {
        train: dir.path().join("train.txt"),
        valid: Some(dir.path().join("valid.txt")),
        test: None,
        kind: DataKind::Binary,
        family: ModelFamily::Arn,
        mode: SharingMode::Untied,
        lambda_grid: LambdaGrid::Values(vec![1e-6, 1e-7]),
        components_grid: ComponentsGrid::Values(vec![vec![1]]),
        partition: None,
        seed: 0,
        threads: None,
        out: None,
        intercept_scale: 10.0,
    };
    let outcome = cmd_select_train(&cfg).unwrap();
    assert_eq!(outcome.grid[0].valid_mean, outcome.grid[1].valid_mean);
    assert_eq!(outcome.lambda, 1e-6);
}

#[test]
fn report_arithmetic_is_recomputable_and_model_reloads_exactly() {
    let fx = Fixture::new(5);
    let mut cfg = fx.config(ModelFamily::Mixture);
    cfg.components_grid = ComponentsGrid::Values(vec![vec![1], vec![2]]);
    cfg.mode = SharingMode::Auto;
    let outcome = cmd_select_train(&cfg).unwrap();
    let test = outcome.test.clone().unwrap();
    let n = test.logliks.len() as f64;
    let mean = test.logliks.iter().sum::<f64>() / n;
    let sd = (test.logliks.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - test.mean).abs() <= 1e-12);
    assert!((sd / n.sqrt() - test.stderr).abs() <= 1e-12);
    let dumped: Vec<f64> = std::fs::read_to_string(fx.path("out/test_logliks.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(dumped, test.logliks);
    let report = cmd_eval(&fx.path("out/model.txt"), &fx.path("test.bin")).unwrap();
    assert_eq!(report.logliks, test.logliks);
}

#[test]
fn selection_is_deterministic_across_thread_counts() {
    let fx = Fixture::new(5);
    let mut cfg = fx.config(ModelFamily::Mixture);
    cfg.out = None;
    cfg.lambda_grid = LambdaGrid::Path { count: 3, min_ratio: 0.05 };
    cfg.components_grid = ComponentsGrid::Values(vec![vec![1], vec![2]]);
    cfg.threads = Some(1);
    let a = cmd_select_train(&cfg).unwrap();
    cfg.threads = Some(3);
    let b = cmd_select_train(&cfg).unwrap();
    assert_eq!(write_model(&a.model), write_model(&b.model));
    assert_eq!((a.lambda, &a.components), (b.lambda, &b.components));
}

#[test]
fn uniform_model_scores_minus_d_log_two() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::Arn(AutoregressiveNet::independent(DataKind::Binary, 784));
    let mut r = rng(9);
    let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..784).map(|_| (r.random::<f64>() < 0.3) as u8 as f64).collect()).collect();
    let report = eval_model(&model, &RawMatrix::from_rows(&rows).unwrap()).unwrap();
    // 784 equal terms: exact up to summation rounding
    assert!((report.mean + 784.0 * 2f64.ln()).abs() <= 1e-10);
    sparn::save_model(dir.path().join("m.txt"), &model).unwrap();
    assert_eq!(load_model(dir.path().join("m.txt")).unwrap(), model);
}

#[test]
fn sampling_writes_deterministic_images() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::Arn(AutoregressiveNet::independent(DataKind::Binary, 28 * 28));
    sparn::save_model(dir.path().join("m.txt"), &model).unwrap();
    let shape = Some("28x28".parse().unwrap());
    let a = cmd_sample(&dir.path().join("m.txt"), 2, 5, &dir.path().join("a"), shape).unwrap();
    let b = cmd_sample(&dir.path().join("m.txt"), 2, 5, &dir.path().join("b"), shape).unwrap();
    assert_eq!(a.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let img = std::fs::read(&a[1]).unwrap();
    assert!(img.starts_with(b"P5\n28 28\n255\n"));
    assert_eq!(img.len(), b"P5\n28 28\n255\n".len() + 784);
    let none = cmd_sample(&dir.path().join("m.txt"), 0, 5, &dir.path().join("c"), None).unwrap();
    assert_eq!(std::fs::read_to_string(&none[0]).unwrap(), "");
}

#[test]
fn nearest_finds_exact_copies_and_renders_white() {
    let fx = Fixture::new(4);
    let train = sparn::data::load_matrix(fx.path("train.txt"), MatrixFormat::DenseText).unwrap();
    let copy = RawMatrix::from_rows(&[train.row(17).to_vec()]).unwrap();
    std::fs::write(fx.path("s.txt"), format_dense_text(&copy)).unwrap();
    let out = fx.path("nn");
    let found = cmd_nearest(&fx.path("s.txt"), &fx.path("train.txt"), Metric::Hamming, Some("2x2".parse().unwrap()), Some(&out)).unwrap();
    assert_eq!(found[0].distance, 0.0);
    assert_eq!(train.row(found[0].index), train.row(17));
    assert!(found[0].index <= 17);
    let img = std::fs::read(out.join("diff_0000.ppm")).unwrap();
    assert!(img[b"P6\n2 2\n255\n".len()..].iter().all(|b| *b == 255));
}

#[test]
fn sequence_selection_with_grid_partition() {
    let fx = Fixture::new(16);
    let mut cfg = fx.config(ModelFamily::Sequence);
    cfg.partition = Some("grid 4x4 into 2x2".into());
    cfg.components_grid = "2,1/2/2/1".parse().unwrap();
    cfg.mode = SharingMode::Tied;
    let outcome = cmd_select_train(&cfg).unwrap();
    assert_eq!(outcome.grid.len(), 2);
    assert_eq!(outcome.grid[0].components, vec![2, 2, 2, 2]);
    let reloaded = load_model(fx.path("out/model.txt")).unwrap();
    assert!(reloaded.order().is_some());
    let report = cmd_eval(&fx.path("out/model.txt"), &fx.path("test.bin")).unwrap();
    assert_eq!(report.logliks, outcome.test.unwrap().logliks);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparn"))
}

#[test]
fn binary_exit_codes() {
    let fx = Fixture::new(4);
    let status = |c: &mut Command| c.output().unwrap().status.code().unwrap();
    assert_eq!(status(bin().arg("--help")), 0);
    assert_eq!(status(bin().arg("train").arg("--bogus")), 1);
    assert_eq!(status(bin().args(["train", "--lambda-grid", "1"])), 1);
    assert_eq!(status(bin().args(["eval", "--model", "missing.txt", "--data", "x.txt"])), 2);
    std::fs::write(fx.path("bad.txt"), "0 1\n2 1\n").unwrap();
    let bad = fx.path("bad.txt");
    assert_eq!(status(bin().args(["train", "--lambda-grid", "1", "--train"]).arg(&bad)), 2);
    // λ₀ = λ / scale underflows to zero, so every logistic fit refuses to run
    let out = bin()
        .args(["train", "--lambda-grid", "1e-300", "--intercept-scale", "1e300", "--train"])
        .arg(fx.path("train.txt"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn binary_train_and_eval_via_config_file() {
    let fx = Fixture::new(5);
    let cfg_path = fx.path("exp.cfg");
    std::fs::write(
        &cfg_path,
        format!(
            "train={}\nvalid={}\nfamily=mixture\nmode=tied\ncomponents-grid=1,2\nlambda-grid=3\nout={}\n",
            fx.path("train.txt").display(),
            fx.path("valid.txt").display(),
            fx.path("o").display()
        ),
    )
    .unwrap();
    let out = bin().arg("train").arg("--config").arg(&cfg_path).args(["--seed", "4"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("selected_lambda=3.0"));
    let out = bin()
        .args(["eval", "--model"])
        .arg(fx.path("o/model.txt"))
        .arg("--data")
        .arg(fx.path("test.bin"))
        .arg("--dump")
        .arg(fx.path("lls.txt"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("mean_loglik="));
    assert_eq!(std::fs::read_to_string(fx.path("lls.txt")).unwrap().lines().count(), 80);
}
