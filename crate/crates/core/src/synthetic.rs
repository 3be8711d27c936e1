//! Generated two-class graph task.
//!
//! Every graph has nodes of three labels placed in the plane. In class 0
//! label-1 nodes cluster at `+δ e₀` and label-2 nodes at `−δ e₀`; class 1
//! swaps the two clusters. Label-3 nodes sit around the origin. Labels are
//! balanced, so the unlabelled sum of positions carries almost no class
//! signal; telling the classes apart needs to know which label sits where.
//! Edges link each node to its nearest neighbours in the plane.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{MlgcnError, Result};
use crate::graph::Graph;
use crate::skeleton::knn_edges;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub graphs: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Cluster offset along the first axis.
    pub separation: f64,
    /// Standard deviation of node positions around their cluster centre.
    pub spread: f64,
    pub neighbors: usize,
    /// Owned by the run rather than the config section.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            graphs: 200,
            min_nodes: 10,
            max_nodes: 20,
            separation: 1.0,
            spread: 0.5,
            neighbors: 3,
            seed: 0,
        }
    }
}

pub const SYNTHETIC_LABELS: usize = 3;

fn one_graph(rng: &mut ChaCha8Rng, config: &SyntheticConfig, class: usize, noise: &Normal<f64>) -> Result<Graph> {
    let n = rng.random_range(config.min_nodes..=config.max_nodes);
    let mut labels: Vec<usize> = (0..n).map(|v| v % SYNTHETIC_LABELS + 1).collect();
    labels.shuffle(rng);
    let sign = if class == 0 { 1.0 } else { -1.0 };
    let mut positions = Array2::zeros((n, 2));
    for (v, &label) in labels.iter().enumerate() {
        let centre = match label {
            1 => sign * config.separation,
            2 => -sign * config.separation,
            _ => 0.0,
        };
        positions[[v, 0]] = centre + noise.sample(rng);
        positions[[v, 1]] = noise.sample(rng);
    }
    let edges = knn_edges(&positions, config.neighbors);
    Graph::new(positions, labels, SYNTHETIC_LABELS, edges)
}

/// Balanced dataset with classes alternating by index.
pub fn generate(config: &SyntheticConfig) -> Result<Dataset> {
    if config.graphs < 2 || config.min_nodes < 2 || config.min_nodes > config.max_nodes || config.neighbors == 0 {
        return Err(MlgcnError::Parameter(format!("invalid synthetic configuration {config:?}")));
    }
    let noise = Normal::new(0.0, config.spread)
        .map_err(|e| MlgcnError::Parameter(format!("invalid spread {}: {e}", config.spread)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let samples = (0..config.graphs)
        .map(|i| {
            let class = i % 2;
            Ok(Sample {
                name: format!("synthetic_{i:04}"),
                graph: one_graph(&mut rng, config, class, &noise)?,
                class,
                split: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Dataset::new(vec!["left".into(), "right".into()], samples)?;
    data.num_labels = SYNTHETIC_LABELS;
    Ok(data)
}
