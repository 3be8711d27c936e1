//! Fixtures shared by the benchmarks.

use mlgcn::gradcheck::random_graph;
use mlgcn::model::{ModelConfig, ModelShape, ModelState, PreparedGraph};
use mlgcn::Graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FEATURES: usize = 12;
pub const LABELS: usize = 15;

pub fn graph(n: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_graph(&mut rng, n, FEATURES, LABELS).expect("valid random graph")
}

/// A prepared `n`-node graph and a default model sized for it.
pub fn model_fixture(n: usize, seed: u64) -> (PreparedGraph, ModelState) {
    let config = ModelConfig::default();
    let shape = ModelShape {
        feature_dim: FEATURES,
        num_labels: LABELS,
        num_classes: 8,
        max_nodes: n,
    };
    let sample = PreparedGraph::new(graph(n, seed), &config, &shape).expect("graph fits the model");
    let state = ModelState::new(config, shape, seed).expect("default model");
    (sample, state)
}
