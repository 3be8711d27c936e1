//! Acceptance gate. Runs every criterion, prints one line each, and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use mlgcn::cheb::{cheb_conv_forward, ChebFilterBank};
use mlgcn::cpd::{cpd_check, hat_transform};
use mlgcn::gradcheck::random_graph;
use mlgcn::laplacian::{
    rescale_laplacian, AffinityKind, LaplacianDescriptor, LaplacianFamily, LaplacianStack,
};
use mlgcn::model::{self, ModelConfig, ModelShape, ModelState, PoolingMode, PreparedGraph};
use mlgcn::multilap::{multilap_forward, Activation, ActivationKind, MultiLapParams, SimplexJacobian};
use mlgcn::synthetic::{generate, SyntheticConfig};
use mlgcn::train::{self, TrainConfig};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn dmatrix(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn min_eigenvalue(m: &Array2<f64>) -> f64 {
    SymmetricEigen::new(dmatrix(m)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Per-group `max|a − n| / max(max|a|, max|n|, 1e-4)` with centered
/// differences computed here, independently of the library's checker.
fn finite_difference_errors(config: &ModelConfig, seed: u64, jacobian: SimplexJacobian) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let graph = random_graph(&mut rng, 5, 3, 2).unwrap();
    let shape = ModelShape {
        feature_dim: 3,
        num_labels: 2,
        num_classes: 3,
        max_nodes: 5,
    };
    let sample = PreparedGraph::new(graph, config, &shape).unwrap();
    let mut state = ModelState::new(config.clone(), shape, seed).unwrap();
    state.jacobian = jacobian;
    let label = rng.random_range(0..3);
    let (logits, cache) = model::forward(&sample, &state).unwrap();
    model::loss_and_backward(&logits, label, &cache, &sample, &mut state, 1.0).unwrap();
    let analytic = state.grads_flat();
    let base = state.params_flat();
    let h = 1e-6;
    let mut probe = state.clone();
    let numeric: Vec<f64> = (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.set_params_flat(&p).unwrap();
            let plus = model::loss(&sample, label, &probe).unwrap();
            p[i] = base[i] - h;
            probe.set_params_flat(&p).unwrap();
            let minus = model::loss(&sample, label, &probe).unwrap();
            (plus - minus) / (2.0 * h)
        })
        .collect();
    state
        .group_ranges()
        .into_iter()
        .map(|(name, r)| {
            let (a, n) = (&analytic[r.clone()], &numeric[r]);
            let err = a.iter().zip(n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let scale = a.iter().chain(n).map(|x| x.abs()).fold(1e-4, f64::max);
            (name, err / scale)
        })
        .collect()
}

fn gradient_correctness() -> Outcome {
    let config = ModelConfig::default();
    assert_eq!(config.menu.len(), 3);
    assert_eq!(config.multilap_widths, vec![1]);
    assert_eq!(config.cheb_order, 4);
    assert_eq!(config.pooling, PoolingMode::ExpandGp);
    assert_eq!(config.hops, 1);
    let mut worst = 0.0_f64;
    let mut worst_group = "";
    for seed in 0..5 {
        for (group, err) in finite_difference_errors(&config, seed, SimplexJacobian::Exact) {
            if err > worst {
                worst = err;
                worst_group = group;
            }
        }
    }
    outcome(worst <= 1e-5, format!("worst relative error {worst:.2e} ({worst_group}) over 5 instances"))
}

/// `T_k(λ) = cos(k·arccos λ)` on `[-1, 1]`.
fn chebyshev_closed_form(k: usize, lambda: f64) -> f64 {
    (k as f64 * lambda.clamp(-1.0, 1.0).acos()).cos()
}

fn spectral_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let families = [LaplacianFamily::Unnormalized, LaplacianFamily::Normalized];
    let mut worst = 0.0_f64;
    for trial in 0..50 {
        let n = rng.random_range(2..=16);
        let channels = rng.random_range(1..=3);
        let filters = rng.random_range(1..=3);
        let order = rng.random_range(1..=6);
        let graph = random_graph(&mut rng, n, 2, 1).unwrap();
        let kind = if trial % 2 == 0 { AffinityKind::Binary } else { AffinityKind::BinaryGaussian };
        let menu = [LaplacianDescriptor::new(families[trial % 2], kind, 1, 1.0)];
        let stack = LaplacianStack::build(&graph, &menu).unwrap();
        let l = rescale_laplacian(&stack.laplacians[0]).unwrap().values;
        let signal = Array2::from_shape_fn((n, channels), |_| rng.random_range(-1.0..1.0));
        let theta = Array3::from_shape_fn((channels, filters, order), |_| rng.random_range(-1.0..1.0));
        let bank = ChebFilterBank::from_theta(theta.clone()).unwrap();
        let (fast, _) = cheb_conv_forward(&l, &bank, &signal).unwrap();

        let eig = SymmetricEigen::new(dmatrix(&l));
        let u = &eig.eigenvectors;
        let mut reference = Array2::<f64>::zeros((n, filters));
        for f in 0..filters {
            for c in 0..channels {
                // U diag(Σ_k θ T_k(λ)) Uᵀ x
                let x = nalgebra::DVector::from_fn(n, |i, _| signal[[i, c]]);
                let mut coeffs = u.transpose() * x;
                for (i, lambda) in eig.eigenvalues.iter().enumerate() {
                    let response: f64 = (0..order).map(|k| theta[[c, f, k]] * chebyshev_closed_form(k, *lambda)).sum();
                    coeffs[i] *= response;
                }
                let y = u * coeffs;
                for i in 0..n {
                    reference[[i, f]] += y[i];
                }
            }
        }
        let scale = reference.iter().fold(1e-300_f64, |a, x| a.max(x.abs()));
        let err = fast.iter().zip(reference.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    outcome(worst <= 1e-8, format!("worst relative deviation {worst:.2e} over 50 operators"))
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let b = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
    b.dot(&b.t())
}

fn cpd_closure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for trial in 0..1000 {
        let n = rng.random_range(2..=8);
        let inputs = rng.random_range(1..=4);
        let widths: Vec<usize> = if trial % 3 == 0 { vec![rng.random_range(1..=3), 1] } else { vec![1] };
        let kind = if trial % 2 == 0 { ActivationKind::Softplus } else { ActivationKind::LeakySoftplus };
        let activation = Activation::new(kind, rng.random_range(0.001..0.2)).unwrap();
        let mut params = MultiLapParams::new(inputs, &widths, activation).unwrap();
        params.randomize(&mut rng, 3.0);
        let mats: Vec<Array2<f64>> = (0..inputs).map(|_| random_psd(&mut rng, n)).collect();
        let refs: Vec<&Array2<f64>> = mats.iter().collect();
        let (out, _) = multilap_forward(&refs, &params).unwrap();
        let report = cpd_check(out.view(), 1e-8).unwrap();
        worst = worst.min(report.min_centered_eigenvalue);
        failures += usize::from(!report.is_cpd);
    }
    outcome(failures == 0, format!("{failures} failures in 1000 trials, smallest centered eigenvalue {worst:.3e}"))
}

fn hat_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut disagreements = 0;
    let mut cpd_count = 0;
    for trial in 0..200 {
        let n = rng.random_range(2..=9);
        let m = match trial % 4 {
            // unstructured
            0 => {
                let a: Array2<f64> = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
                &a + &a.t()
            }
            // positive definite plus a negative constant
            1 => random_psd(&mut rng, n) + Array2::<f64>::eye(n) * 0.1 - rng.random_range(0.0..5.0_f64),
            // negated distance matrix of distinct points
            2 => {
                let pts: Array2<f64> = Array2::from_shape_fn((n, 3), |_| rng.random_range(-2.0..2.0));
                Array2::from_shape_fn((n, n), |(i, j)| {
                    -(0..3).map(|d| (pts[[i, d]] - pts[[j, d]]).powi(2)).sum::<f64>().sqrt()
                })
            }
            // positive definite with one direction flipped
            _ => {
                let v: Array2<f64> = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
                random_psd(&mut rng, n) + Array2::<f64>::eye(n) * 0.1 - v.dot(&v.t()) * 20.0
            }
        };
        let report = cpd_check(m.view(), 1e-9).unwrap();
        let hat = hat_transform(m.view()).unwrap();
        // entrywise hat, computed here
        let a = n - 1;
        let own = Array2::from_shape_fn((a, a), |(i, j)| m[[i, j]] - m[[i, a]] - m[[a, j]] + m[[a, a]]);
        assert!(hat.iter().zip(own.iter()).all(|(x, y)| (x - y).abs() <= 1e-12));
        let psd = min_eigenvalue(&hat) >= -1e-8;
        cpd_count += usize::from(report.is_cpd);
        disagreements += usize::from(report.is_cpd != psd);
    }
    outcome(disagreements == 0, format!("{disagreements} disagreements over 200 matrices ({cpd_count} c.p.d.)"))
}

fn permutation_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = ModelConfig {
        conv_filters: vec![8],
        ..ModelConfig::default()
    };
    let shape = ModelShape {
        feature_dim: 3,
        num_labels: 3,
        num_classes: 4,
        max_nodes: 16,
    };
    let state = ModelState::new(config.clone(), shape, 5).unwrap();
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=16);
        let graph = random_graph(&mut rng, n, 3, 3).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let moved = graph.permuted(&perm).unwrap();
        let a = PreparedGraph::new(graph, &config, &shape).unwrap();
        let b = PreparedGraph::new(moved, &config, &shape).unwrap();
        let (la, ca) = model::forward(&a, &state).unwrap();
        let (lb, cb) = model::forward(&b, &state).unwrap();
        let pooled = ca.readout().iter().zip(cb.readout()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let logits = la.iter().zip(&lb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(pooled).max(logits);
    }
    outcome(worst <= 1e-9, format!("largest deviation {worst:.2e} over 100 graphs"))
}

const SEEDS: u64 = 5;

/// Final-epoch held-out accuracy of one synthetic run.
fn synthetic_run(model: &ModelConfig, seed: u64) -> (f64, Vec<f64>, Duration) {
    let started = Instant::now();
    let data = generate(&SyntheticConfig {
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let tc = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let shape = train::shape_for(&data);
    let (tr, te) = data.split_indices(tc.test_fraction, seed).unwrap();
    let train_set = train::prepare_all(&data, &tr, model, &shape).unwrap();
    let test_set = train::prepare_all(&data, &te, model, &shape).unwrap();
    let out = train::train(model, &tc, shape, &train_set, &test_set, None).unwrap();
    let losses = out.history.iter().map(|r| r.train_loss).collect();
    (out.history.last().unwrap().test_acc.unwrap(), losses, started.elapsed())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

struct Synthetic {
    default_acc: Vec<f64>,
}

fn synthetic_classification() -> (Outcome, Synthetic) {
    let config = ModelConfig::default();
    let mut accs = Vec::new();
    let mut slowest = Duration::ZERO;
    let mut decreasing = 0;
    for seed in 0..SEEDS {
        let (acc, losses, took) = synthetic_run(&config, seed);
        accs.push(acc);
        slowest = slowest.max(took);
        decreasing += usize::from(losses[9] < losses[0]);
    }
    let good = accs.iter().filter(|&&a| a >= 0.95).count();
    let passed = good >= 4 && slowest <= Duration::from_secs(120) && decreasing >= 4;
    let detail = format!(
        "{good}/5 seeds ≥ 95% held-out (accuracies {accs:.3?}), loss fell over 10 epochs for {decreasing}/5, slowest seed {:.1}s",
        slowest.as_secs_f64()
    );
    (outcome(passed, detail), Synthetic { default_acc: accs })
}

fn mean_accuracy(model: &ModelConfig) -> f64 {
    mean(&(0..SEEDS).map(|s| synthetic_run(model, s).0).collect::<Vec<_>>())
}

fn ablation_direction(prior: &Synthetic) -> Outcome {
    let expand = mean(&prior.default_acc);
    let with = |pooling| ModelConfig {
        pooling,
        ..ModelConfig::default()
    };
    let gp = mean_accuracy(&with(PoolingMode::Gp));
    let none = mean_accuracy(&with(PoolingMode::None));
    outcome(
        expand >= gp && expand >= none,
        format!("mean held-out accuracy expand_gp {expand:.3}, gp {gp:.3}, none {none:.3}"),
    )
}

fn multilap_versus_single(prior: &Synthetic) -> Outcome {
    let multi = mean(&prior.default_acc);
    let base = ModelConfig::default();
    let singles: Vec<f64> = base
        .menu
        .iter()
        .map(|entry| {
            mean_accuracy(&ModelConfig {
                menu: vec![*entry],
                multilap_widths: Vec::new(),
                ..base.clone()
            })
        })
        .collect();
    let best = singles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        multi >= best - 0.01,
        format!("multilap {multi:.3} vs single laplacians {singles:.3?} (best {best:.3})"),
    )
}

fn determinism() -> Outcome {
    let data = generate(&SyntheticConfig {
        graphs: 60,
        seed: 9,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let model = ModelConfig::default();
    let tc = TrainConfig {
        epochs: 6,
        batch_size: 7,
        seed: 9,
        momentum: 0.5,
        ..TrainConfig::default()
    };
    let shape = train::shape_for(&data);
    let (tr, te) = data.split_indices(tc.test_fraction, 9).unwrap();
    let run = || {
        // fresh preparation each time, as two separate processes would do
        let train_set = train::prepare_all(&data, &tr, &model, &shape).unwrap();
        let test_set = train::prepare_all(&data, &te, &model, &shape).unwrap();
        let mut buf = Vec::new();
        train::train(&model, &tc, shape, &train_set, &test_set, Some(&mut buf)).unwrap();
        buf
    };
    let (a, b) = (run(), run());
    outcome(a == b && !a.is_empty(), format!("two runs wrote {} and {} bytes, identical: {}", a.len(), b.len(), a == b))
}

fn negative_control() -> Outcome {
    let config = ModelConfig::default();
    assert_eq!(config.menu.len(), 3);
    let errors = finite_difference_errors(&config, 0, SimplexJacobian::CollapsedNormalizer);
    let (_, multilap) = errors.iter().find(|(g, _)| *g == "multilap").copied().unwrap();
    let others_ok = errors.iter().filter(|(g, _)| *g != "multilap").all(|(_, e)| *e <= 1e-5);
    outcome(
        multilap > 1e-2 && others_ok,
        format!("collapsed-normalizer weight gradient relative error {multilap:.3e}; other groups still pass: {others_ok}"),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut timed = |id: usize, name: &'static str, limit: Option<u64>, f: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        let mut result = f();
        let took = started.elapsed();
        if let Some(limit) = limit {
            if took > Duration::from_secs(limit) {
                result.passed = false;
                result.detail.push_str(&format!("; exceeded {limit}s"));
            }
        }
        println!(
            "criterion {id:>2} {:<4} {name}: {} [{:.1}s]",
            if result.passed { "PASS" } else { "FAIL" },
            result.detail,
            took.as_secs_f64()
        );
        results.push((id, name, result, took));
    };
    timed(1, "gradient correctness", Some(60), &mut gradient_correctness);
    timed(2, "spectral equivalence", Some(30), &mut spectral_equivalence);
    timed(3, "c.p.d. closure", Some(60), &mut cpd_closure);
    timed(4, "hat-transform equivalence", None, &mut hat_equivalence);
    timed(5, "permutation invariance", None, &mut permutation_invariance);
    let mut synthetic = None;
    timed(6, "synthetic classification", None, &mut || {
        let (o, s) = synthetic_classification();
        synthetic = Some(s);
        o
    });
    let synthetic = synthetic.expect("criterion 6 ran");
    timed(7, "ablation direction", None, &mut || ablation_direction(&synthetic));
    timed(8, "multi-laplacian vs single", None, &mut || multilap_versus_single(&synthetic));
    timed(9, "determinism", None, &mut determinism);
    timed(10, "negative control", None, &mut negative_control);

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: criteria {failed:?} failed");
        std::process::exit(1);
    }
}
