//! Finite-difference verification of the full backward pass.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::graph::Graph;
use crate::model::{self, ModelConfig, ModelShape, ModelState, PreparedGraph};
use crate::multilap::SimplexJacobian;

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Smallest gradient magnitude used as the relative-error denominator;
/// below it centered differences resolve nothing but round-off.
pub const SCALE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupError {
    pub group: &'static str,
    pub parameters: usize,
    pub max_abs_error: f64,
    /// `max |analytic − numeric| / max(max |analytic|, max |numeric|, SCALE_FLOOR)`.
    pub relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub groups: Vec<GroupError>,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn group(&self, name: &str) -> Option<&GroupError> {
        self.groups.iter().find(|g| g.group == name)
    }

    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.relative_error).fold(0.0, f64::max)
    }
}

/// Connected random graph: a random spanning tree plus extra edges, labels
/// cycling through `1..=num_labels`, features uniform in `[-1, 1]`.
pub fn random_graph(rng: &mut impl Rng, n: usize, feature_dim: usize, num_labels: usize) -> Result<Graph> {
    let features = Array2::from_shape_fn((n, feature_dim), |_| rng.random_range(-1.0..1.0));
    let labels = (0..n).map(|v| v % num_labels + 1).collect();
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.3) && !edges.contains(&(u, v)) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(features, labels, num_labels, edges)
}

/// Small instance used by [`gradcheck`]: 5 nodes, 2 labels, 3 features,
/// 3 classes.
pub fn check_instance(config: &ModelConfig, seed: u64) -> Result<(PreparedGraph, ModelState, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = random_graph(&mut rng, 5, 3, 2)?;
    let shape = ModelShape {
        feature_dim: 3,
        num_labels: 2,
        num_classes: 3,
        max_nodes: 5,
    };
    let sample = PreparedGraph::new(graph, config, &shape)?;
    let mut state = ModelState::new(config.clone(), shape, seed)?;
    // nonzero bias so the classifier-bias gradient is not degenerate
    state.classifier_bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    let label = rng.random_range(0..3);
    Ok((sample, state, label))
}

/// Compares every analytic gradient against centered differences on a
/// random 5-node instance.
pub fn gradcheck(config: &ModelConfig, seed: u64) -> Result<GradcheckReport> {
    gradcheck_with(config, seed, SimplexJacobian::Exact, DEFAULT_STEP, DEFAULT_TOLERANCE)
}

pub fn gradcheck_with(
    config: &ModelConfig,
    seed: u64,
    jacobian: SimplexJacobian,
    step: f64,
    tolerance: f64,
) -> Result<GradcheckReport> {
    let (sample, mut state, label) = check_instance(config, seed)?;
    state.jacobian = jacobian;
    state.zero_grads();
    let (logits, cache) = model::forward(&sample, &state)?;
    model::loss_and_backward(&logits, label, &cache, &sample, &mut state, 1.0)?;
    let analytic = state.grads_flat();
    let base = state.params_flat();

    let mut numeric = vec![0.0; base.len()];
    let mut probe = state.clone();
    let mut shifted = base.clone();
    for (i, slot) in numeric.iter_mut().enumerate() {
        shifted[i] = base[i] + step;
        probe.set_params_flat(&shifted)?;
        let plus = model::loss(&sample, label, &probe)?;
        shifted[i] = base[i] - step;
        probe.set_params_flat(&shifted)?;
        let minus = model::loss(&sample, label, &probe)?;
        shifted[i] = base[i];
        *slot = (plus - minus) / (2.0 * step);
    }

    let groups: Vec<GroupError> = state
        .group_ranges()
        .into_iter()
        .map(|(group, range)| {
            let a = &analytic[range.clone()];
            let n = &numeric[range];
            let max_abs_error = a.iter().zip(n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let scale = a.iter().chain(n).map(|x| x.abs()).fold(SCALE_FLOOR, f64::max);
            let relative_error = max_abs_error / scale;
            GroupError {
                group,
                parameters: a.len(),
                max_abs_error,
                relative_error,
                passed: relative_error <= tolerance,
            }
        })
        .collect();
    let passed = groups.iter().all(|g| g.passed);
    Ok(GradcheckReport {
        seed,
        step,
        tolerance,
        groups,
        passed,
    })
}
