mod common;

use common::*;
use sparn::arn::fit_arn;
use sparn::mixture::{em_fit, init_product_mixture, ComponentSet, DimParams, EmOptions, SharingMode};
use sparn::seqmix::{fit_sequence, fit_sequence_with, BlockConfig, SequenceBlock};
use sparn::solvers::{GateWeights, SolverConfig};
use sparn::{AutoregressiveNet, Conditional, DataKind, LogisticConditional, Partition, SequenceModel};

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[test]
fn single_block_matches_mixture_em() {
    let mut r = rng(1);
    let train = binary_dataset(&random_binary_rows(&mut r, 200, 6, 1.0));
    let test = binary_dataset(&random_binary_rows(&mut r, 60, 6, 1.0));
    let cfg = SolverConfig::with_lambda(1.5);
    for mode in SharingMode::ALL {
        let seq = fit_sequence(&train, &Partition::single(6).unwrap(), &[BlockConfig { k: 2, mode }], &cfg, 17).unwrap();
        let init = init_product_mixture(&train, 2, 17).unwrap().responsibilities;
        let mix = em_fit(&train, 2, mode, &cfg, &init).unwrap();
        let a = seq.model.loglik_dataset(&test).unwrap();
        let b = mix.model.loglik_dataset(&test).unwrap();
        for (a, b) in a.iter().zip(&b) {
            assert!((a - b).abs() <= 1e-9, "{mode}: {a} vs {b}");
        }
    }
}

#[test]
fn one_block_per_dimension_matches_single_network() {
    let mut r = rng(2);
    let train = binary_dataset(&random_binary_rows(&mut r, 150, 7, 1.3));
    let test = binary_dataset(&random_binary_rows(&mut r, 50, 7, 1.3));
    let cfg = SolverConfig::with_lambda(1.0);
    let blocks = vec![BlockConfig { k: 1, mode: SharingMode::Untied }; 7];
    let seq = fit_sequence(&train, &Partition::per_dimension(7).unwrap(), &blocks, &cfg, 0).unwrap();
    let arn = fit_arn(&train, &cfg).unwrap().model;
    let a = seq.model.loglik_dataset(&test).unwrap();
    let b = arn.loglik_dataset(&test).unwrap();
    for (a, b) in a.iter().zip(&b) {
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn marginal_equals_brute_force_latent_sum() {
    let mut r = rng(3);
    for mode in SharingMode::ALL {
        let model = random_sequence(&mut r, &[0, 3, 8], &[2, 3], mode);
        let grid = latent_grid(&[2, 3]);
        assert_eq!(grid.len(), 6);
        let mut total = 0.0;
        for x in all_binary(8) {
            let joint: Vec<f64> = grid.iter().map(|h| model.log_joint(&x, h).unwrap()).collect();
            let got = model.loglik(&x).unwrap();
            assert!((got - lse(&joint)).abs() <= 1e-10, "{mode}");
            total += got.exp();
            // the brute-force joint posterior factorizes into per-block posteriors
            let post = model.posterior(&x).unwrap();
            let z = lse(&joint);
            for (h, j) in grid.iter().zip(&joint) {
                let product = post[0][h[0]] * post[1][h[1]];
                assert!(((j - z).exp() - product).abs() <= 1e-10);
            }
        }
        assert!((total - 1.0).abs() <= 1e-9, "{mode}: {total}");
    }
}

#[test]
fn uniform_gates_with_identical_components_collapse_to_one_network() {
    let mut r = rng(4);
    let single = random_components(&mut r, 0, 6, 1, SharingMode::Untied);
    let conds: Vec<Conditional> = (0..6)
        .map(|d| Conditional::Logistic(LogisticConditional { weights: single.effective(d, 0).clone() }))
        .collect();
    let net = AutoregressiveNet::new(DataKind::Binary, conds, None).unwrap();
    let partition = Partition::new(vec![0, 2, 6]).unwrap();
    let blocks = [(0..2, 3), (2..6, 2)]
        .into_iter()
        .map(|(range, k)| {
            let params = range
                .clone()
                .map(|d| DimParams::Untied(vec![single.effective(d, 0).clone(); k]))
                .collect();
            SequenceBlock {
                gate: GateWeights::uniform(k),
                components: ComponentSet::new(DataKind::Binary, range.start, params, None).unwrap(),
            }
        })
        .collect();
    let model = SequenceModel::new(partition, blocks, None).unwrap();
    for x in all_binary(6) {
        assert!((model.loglik(&x).unwrap() - net.loglik(&x).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn posterior_special_cases() {
    let mut r = rng(5);
    let model = random_sequence(&mut r, &[0, 2, 5], &[1, 2], SharingMode::Untied);
    let post = model.posterior(&[1.0, -1.0, 1.0, 1.0, -1.0]).unwrap();
    assert_eq!(post[0], vec![1.0]);
    // flat block likelihood: posterior equals the gate
    let comps = ComponentSet::new(
        DataKind::Binary,
        2,
        vec![DimParams::Untied(vec![sparn::SparseWeights::zero(); 3])],
        None,
    )
    .unwrap();
    let gate = random_gate(&mut r, 3, 2);
    let head = random_components(&mut r, 0, 2, 1, SharingMode::Untied);
    let m = SequenceModel::new(
        Partition::new(vec![0, 2, 3]).unwrap(),
        vec![
            SequenceBlock { gate: GateWeights::trivial(), components: head },
            SequenceBlock { gate: gate.clone(), components: comps },
        ],
        None,
    )
    .unwrap();
    let x = [1.0, -1.0, 1.0];
    let post = m.posterior(&x).unwrap();
    for (p, g) in post[1].iter().zip(gate.log_probs(&x)) {
        assert!((p - g.exp()).abs() <= 1e-12);
    }
}

#[test]
fn latent_frequencies_follow_intercept_gates() {
    let mut r = rng(6);
    let comps0 = random_components(&mut r, 0, 2, 2, SharingMode::Untied);
    let comps1 = random_components(&mut r, 2, 4, 3, SharingMode::Untied);
    let g0 = [0.7, 0.3];
    let g1 = [0.2, 0.5, 0.3];
    let model = SequenceModel::new(
        Partition::new(vec![0, 2, 4]).unwrap(),
        vec![
            SequenceBlock { gate: GateWeights::from_probabilities(&g0), components: comps0 },
            SequenceBlock { gate: GateWeights::from_probabilities(&g1), components: comps1 },
        ],
        None,
    )
    .unwrap();
    let draws = 10_000usize;
    let mut c0 = [0usize; 2];
    let mut c1 = [0usize; 3];
    for s in 0..draws as u64 {
        let (h, _) = model.sample_with_latents(s);
        c0[h[0]] += 1;
        c1[h[1]] += 1;
    }
    let check = |count: usize, p: f64| {
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((count as f64 - draws as f64 * p).abs() <= 3.0 * sd, "{count} vs {p}");
    };
    c0.iter().zip(g0).for_each(|(c, p)| check(*c, p));
    c1.iter().zip(g1).for_each(|(c, p)| check(*c, p));
    assert_eq!(model.sample(9), model.sample(9));
}

#[test]
fn gated_em_is_monotone_and_thread_invariant() {
    let mut r = rng(7);
    let (mut rows, _) = two_clusters(&mut r, 160, 8, 0.85);
    rows.extend(random_binary_rows(&mut r, 80, 8, 1.0));
    let train = binary_dataset(&rows);
    let partition = Partition::new(vec![0, 4, 8]).unwrap();
    let blocks = [
        BlockConfig { k: 2, mode: SharingMode::Auto },
        BlockConfig { k: 3, mode: SharingMode::Tied },
    ];
    let cfg = SolverConfig::with_lambda(1.0);
    let opts = EmOptions { max_iter: 25, tol: f64::NEG_INFINITY, ..EmOptions::default() };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit_sequence_with(&train, &partition, &blocks, &cfg, 5, &opts).unwrap())
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one.model, many.model);
    for trace in &one.traces {
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn grid_partition_trains_on_reordered_pixels() {
    let mut r = rng(8);
    let rows = random_binary_rows(&mut r, 120, 16, 1.0);
    let raw = sparn::RawMatrix::from_rows(&rows).unwrap();
    let (partition, order) = Partition::parse("grid 4x4 into 2x2").map(|(p, o)| (p, o.unwrap())).unwrap();
    let permuted = raw.permute_columns(&order).unwrap();
    let train = sparn::Dataset::from_encoded(&permuted, DataKind::Binary, None).unwrap();
    let blocks = vec![BlockConfig { k: 2, mode: SharingMode::Auto }; 4];
    let fit = fit_sequence(&train, &partition, &blocks, &SolverConfig::with_lambda(2.0), 1).unwrap();
    let model = fit.model.with_order(order).unwrap();
    assert_eq!(model.ks(), vec![2, 2, 2, 2]);
    assert!(model.loglik_dataset(&train).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn bad_inputs_are_rejected() {
    let mut r = rng(9);
    let train = binary_dataset(&random_binary_rows(&mut r, 30, 4, 1.0));
    let cfg = SolverConfig::with_lambda(1.0);
    let one = [BlockConfig { k: 2, mode: SharingMode::Untied }];
    assert!(fit_sequence(&train, &Partition::single(5).unwrap(), &one, &cfg, 0).is_err());
    assert!(fit_sequence(&train, &Partition::new(vec![0, 2, 4]).unwrap(), &one, &cfg, 0).is_err());
    let model = random_sequence(&mut r, &[0, 2, 4], &[2, 2], SharingMode::Tied);
    assert!(model.loglik(&[1.0, 1.0]).is_err());
}
