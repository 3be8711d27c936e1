use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mlgcn::cheb::{cheb_conv_forward, ChebFilterBank};
use mlgcn::laplacian::{rescale_laplacian, LaplacianStack};
use mlgcn::linalg::eig_sym;
use mlgcn::model::{self, default_menu};
use mlgcn::multilap::{multilap_backward, multilap_forward, SimplexJacobian};
use mlgcn_bench::{graph, model_fixture, FEATURES};
use ndarray::Array2;
use rand::SeedableRng;

const SIZES: [usize; 3] = [15, 30, 60];

fn laplacians(c: &mut Criterion) {
    let mut group = c.benchmark_group("laplacian_stack");
    for n in SIZES {
        let g = graph(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| LaplacianStack::build(black_box(g), &default_menu()).unwrap())
        });
    }
    group.finish();
}

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("eig_sym");
    for n in SIZES {
        let stack = LaplacianStack::build(&graph(n, 2), &default_menu()).unwrap();
        let l = stack.laplacians[1].values.clone();
        group.bench_with_input(BenchmarkId::from_parameter(n), &l, |b, l| b.iter(|| eig_sym(black_box(l).view()).unwrap()));
    }
    group.finish();
}

fn multilap(c: &mut Criterion) {
    let mut group = c.benchmark_group("multilap_forward_backward");
    for n in SIZES {
        let (sample, state) = model_fixture(n, 3);
        let mats = sample.stack.matrices();
        let upstream = Array2::from_elem((n, n), 0.01);
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| {
                let (_, cache) = multilap_forward(&mats, &state.multilap).unwrap();
                multilap_backward(&cache, &upstream, SimplexJacobian::Exact).unwrap()
            })
        });
    }
    group.finish();
}

fn chebyshev(c: &mut Criterion) {
    let mut group = c.benchmark_group("cheb_conv_forward");
    for n in SIZES {
        let stack = LaplacianStack::build(&graph(n, 4), &default_menu()).unwrap();
        let l = rescale_laplacian(&stack.laplacians[0]).unwrap().values;
        let mut bank = ChebFilterBank::zeros(FEATURES, 32, 4).unwrap();
        bank.randomize(&mut rand_chacha::ChaCha8Rng::seed_from_u64(4));
        let x = Array2::from_elem((n, FEATURES), 0.5);
        group.bench_function(BenchmarkId::from_parameter(n), |b| b.iter(|| cheb_conv_forward(&l, &bank, black_box(&x)).unwrap()));
    }
    group.finish();
}

fn full_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_backward");
    for n in SIZES {
        let (sample, mut state) = model_fixture(n, 5);
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| {
                let (logits, cache) = model::forward(&sample, &state).unwrap();
                model::loss_and_backward(&logits, 0, &cache, &sample, &mut state, 1.0).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, laplacians, eigen, multilap, chebyshev, full_step);
criterion_main!(benches);
