//! The full network: laplacian network → optional rescale → Chebyshev
//! convolution layers → pooling readout → affine classifier.

use std::ops::Range;

use ndarray::{Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cheb::{cheb_conv_backward, cheb_conv_forward, ChebCache, ChebFilterBank};
use crate::error::{MlgcnError, Result};
use crate::graph::Graph;
use crate::laplacian::{AffinityKind, LaplacianDescriptor, LaplacianFamily, LaplacianStack, RESCALE_ZERO_TOL};
use crate::linalg::{self, eig_sym};
use crate::multilap::{
    multilap_backward, multilap_forward, Activation, ActivationKind, MultiLapCache, MultiLapParams,
    SimplexJacobian, DEFAULT_LEAK,
};
use crate::pooling::{self, NeighborhoodIndex};

/// Readout applied after the last convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// Node features flattened in node order, zero-padded to `max_nodes`.
    None,
    /// Sum (or mean) of node features.
    Gp,
    /// Unpartitioned neighborhood propagation, flattened.
    Featprop,
    /// Unpartitioned neighborhood propagation, then global pooling.
    FeatpropGp,
    /// Label-partitioned expansion, then global pooling.
    ExpandGp,
}

impl PoolingMode {
    pub const ALL: [PoolingMode; 5] = [
        PoolingMode::None,
        PoolingMode::Gp,
        PoolingMode::Featprop,
        PoolingMode::FeatpropGp,
        PoolingMode::ExpandGp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PoolingMode::None => "none",
            PoolingMode::Gp => "gp",
            PoolingMode::Featprop => "featprop",
            PoolingMode::FeatpropGp => "featprop_gp",
            PoolingMode::ExpandGp => "expand_gp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        PoolingMode::ALL.into_iter().find(|m| m.as_str() == s)
    }

    fn flattens(self) -> bool {
        matches!(self, PoolingMode::None | PoolingMode::Featprop)
    }

    fn uses_neighborhoods(self) -> bool {
        matches!(self, PoolingMode::Featprop | PoolingMode::FeatpropGp | PoolingMode::ExpandGp)
    }
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub menu: Vec<LaplacianDescriptor>,
    /// Widths `n_2, ..., n_d` of the laplacian network; must end in 1.
    /// Empty means a single pass-through laplacian.
    pub multilap_widths: Vec<usize>,
    pub activation: ActivationKind,
    pub leak: f64,
    pub rescale_after_multilap: bool,
    pub cheb_order: usize,
    /// Output channels of each convolution layer.
    pub conv_filters: Vec<usize>,
    pub pooling: PoolingMode,
    pub hops: usize,
    /// Partition neighborhoods by node label; otherwise one subset.
    pub label_partition: bool,
    /// Divide the pooled vector by the node count.
    pub mean_readout: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            menu: default_menu(),
            multilap_widths: vec![1],
            activation: ActivationKind::LeakySoftplus,
            leak: DEFAULT_LEAK,
            rescale_after_multilap: true,
            cheb_order: 4,
            conv_filters: vec![32],
            pooling: PoolingMode::ExpandGp,
            hops: 1,
            label_partition: true,
            mean_readout: false,
        }
    }
}

/// Unnormalized binary, normalized binary and unnormalized gaussian at the
/// per-graph base scale.
pub fn default_menu() -> Vec<LaplacianDescriptor> {
    vec![
        LaplacianDescriptor::new(LaplacianFamily::Unnormalized, AffinityKind::Binary, 1, 1.0),
        LaplacianDescriptor::new(LaplacianFamily::Normalized, AffinityKind::Binary, 1, 1.0),
        LaplacianDescriptor::new(LaplacianFamily::Unnormalized, AffinityKind::BinaryGaussian, 1, 1.0),
    ]
}

impl ModelConfig {
    pub fn activation(&self) -> Result<Activation> {
        Activation::new(self.activation, self.leak)
    }

    pub fn validate(&self) -> Result<()> {
        if self.menu.is_empty() {
            return Err(MlgcnError::Usage("laplacian menu is empty".into()));
        }
        for d in &self.menu {
            d.validate()?;
        }
        self.activation()?;
        if self.cheb_order == 0 {
            return Err(MlgcnError::Parameter("Chebyshev order must be at least 1".into()));
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return Err(MlgcnError::Parameter("conv_filters must list positive widths".into()));
        }
        if self.hops == 0 {
            return Err(MlgcnError::Parameter("hops must be at least 1".into()));
        }
        // validates the width list against the menu size
        MultiLapParams::new(self.menu.len(), &self.multilap_widths, self.activation()?)?;
        Ok(())
    }

    /// Number of label subsets used by the expansion.
    pub fn subsets(&self, num_labels: usize) -> usize {
        if self.label_partition {
            num_labels
        } else {
            1
        }
    }
}

/// Dataset-derived dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub feature_dim: usize,
    pub num_labels: usize,
    pub num_classes: usize,
    /// Node budget of the flattening readouts.
    pub max_nodes: usize,
}

/// A graph with everything the forward pass needs precomputed.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub graph: Graph,
    pub stack: LaplacianStack,
    pub neighborhoods: Option<NeighborhoodIndex>,
}

impl PreparedGraph {
    pub fn new(graph: Graph, config: &ModelConfig, shape: &ModelShape) -> Result<Self> {
        if graph.feature_dim() != shape.feature_dim {
            return Err(MlgcnError::shape(
                "prepare",
                format!("graph has {}-dim features, model expects {}", graph.feature_dim(), shape.feature_dim),
            ));
        }
        if graph.num_labels() > shape.num_labels {
            return Err(MlgcnError::shape(
                "prepare",
                format!("graph uses {} labels, model expects at most {}", graph.num_labels(), shape.num_labels),
            ));
        }
        let stack = LaplacianStack::build(&graph, &config.menu).map_err(|e| e.in_stage("laplacian stack"))?;
        let neighborhoods = if config.pooling.uses_neighborhoods() {
            let subsets = config.subsets(shape.num_labels);
            Some(NeighborhoodIndex::build(&graph, config.hops, subsets).map_err(|e| e.in_stage("neighborhoods"))?)
        } else {
            None
        };
        Ok(PreparedGraph {
            graph,
            stack,
            neighborhoods,
        })
    }
}

/// Gradient buffers mirroring every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub multilap: Vec<Array2<f64>>,
    pub conv: Vec<Array3<f64>>,
    pub classifier_weight: Array2<f64>,
    pub classifier_bias: Array1<f64>,
}

/// Names of the parameter groups, in flat-vector order.
pub const PARAM_GROUPS: [&str; 4] = ["multilap", "cheb", "classifier_weight", "classifier_bias"];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub shape: ModelShape,
    pub multilap: MultiLapParams,
    pub conv: Vec<ChebFilterBank>,
    /// `D × n_classes`.
    pub classifier_weight: Array2<f64>,
    pub classifier_bias: Array1<f64>,
    pub grads: Gradients,
    pub seed: u64,
    pub step: u64,
    /// Differentiation rule for the simplex weights.
    pub jacobian: SimplexJacobian,
}

impl ModelState {
    /// Fresh parameters drawn from a generator seeded with `seed`.
    pub fn new(config: ModelConfig, shape: ModelShape, seed: u64) -> Result<Self> {
        config.validate()?;
        if shape.feature_dim == 0 || shape.num_labels == 0 || shape.num_classes < 2 {
            return Err(MlgcnError::Parameter(format!(
                "invalid model shape {shape:?}: need features, labels and at least two classes"
            )));
        }
        if config.pooling.flattens() && shape.max_nodes == 0 {
            return Err(MlgcnError::Parameter(format!(
                "pooling mode {} needs max_nodes > 0",
                config.pooling.as_str()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut multilap = MultiLapParams::new(config.menu.len(), &config.multilap_widths, config.activation()?)?;
        multilap.randomize(&mut rng, 0.5);

        let mut conv = Vec::with_capacity(config.conv_filters.len());
        let mut channels = shape.feature_dim;
        for &filters in &config.conv_filters {
            let mut bank = ChebFilterBank::zeros(channels, filters, config.cheb_order)?;
            bank.randomize(&mut rng);
            conv.push(bank);
            channels = filters;
        }
        let readout = readout_width(&config, &shape);
        let normal = Normal::new(0.0, 1.0 / (readout as f64).sqrt()).expect("positive std");
        let classifier_weight = Array2::from_shape_simple_fn((readout, shape.num_classes), || normal.sample(&mut rng));
        let classifier_bias = Array1::zeros(shape.num_classes);

        let grads = Gradients {
            multilap: multilap.raw().iter().map(|m| Array2::zeros(m.raw_dim())).collect(),
            conv: conv.iter().map(|b| Array3::zeros(b.theta.raw_dim())).collect(),
            classifier_weight: Array2::zeros(classifier_weight.raw_dim()),
            classifier_bias: Array1::zeros(shape.num_classes),
        };
        Ok(ModelState {
            config,
            shape,
            multilap,
            conv,
            classifier_weight,
            classifier_bias,
            grads,
            seed,
            step: 0,
            jacobian: SimplexJacobian::Exact,
        })
    }

    pub fn readout_width(&self) -> usize {
        readout_width(&self.config, &self.shape)
    }

    pub fn zero_grads(&mut self) {
        self.grads.multilap.iter_mut().for_each(|g| g.fill(0.0));
        self.grads.conv.iter_mut().for_each(|g| g.fill(0.0));
        self.grads.classifier_weight.fill(0.0);
        self.grads.classifier_bias.fill(0.0);
    }

    /// Flat index range of each group in [`PARAM_GROUPS`] order.
    pub fn group_ranges(&self) -> Vec<(&'static str, Range<usize>)> {
        let sizes = [
            self.multilap.raw().iter().map(|m| m.len()).sum::<usize>(),
            self.conv.iter().map(|b| b.theta.len()).sum(),
            self.classifier_weight.len(),
            self.classifier_bias.len(),
        ];
        let mut start = 0;
        PARAM_GROUPS
            .iter()
            .zip(sizes)
            .map(|(&name, size)| {
                let range = start..start + size;
                start += size;
                (name, range)
            })
            .collect()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for m in self.multilap.raw() {
            out.extend(m.iter());
        }
        for b in &self.conv {
            out.extend(b.theta.iter());
        }
        out.extend(self.classifier_weight.iter());
        out.extend(self.classifier_bias.iter());
        out
    }

    pub fn grads_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for m in &self.grads.multilap {
            out.extend(m.iter());
        }
        for t in &self.grads.conv {
            out.extend(t.iter());
        }
        out.extend(self.grads.classifier_weight.iter());
        out.extend(self.grads.classifier_bias.iter());
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total = self.group_ranges().last().map_or(0, |(_, r)| r.end);
        if flat.len() != total {
            return Err(MlgcnError::shape("set_params", format!("{} values for {total} parameters", flat.len())));
        }
        let mut values = flat.iter().copied();
        for m in self.multilap.raw_mut() {
            m.iter_mut().for_each(|x| *x = values.next().expect("length checked"));
        }
        for b in &mut self.conv {
            b.theta.iter_mut().for_each(|x| *x = values.next().expect("length checked"));
        }
        self.classifier_weight
            .iter_mut()
            .chain(self.classifier_bias.iter_mut())
            .for_each(|x| *x = values.next().expect("length checked"));
        Ok(())
    }
}

fn readout_width(config: &ModelConfig, shape: &ModelShape) -> usize {
    let features = *config.conv_filters.last().expect("validated non-empty");
    match config.pooling {
        PoolingMode::None | PoolingMode::Featprop => shape.max_nodes * features,
        PoolingMode::Gp | PoolingMode::FeatpropGp => features,
        PoolingMode::ExpandGp => features * (config.subsets(shape.num_labels) + 1),
    }
}

#[derive(Debug, Clone)]
struct RescaleCache {
    lambda: f64,
    /// `∂λ/∂L`, `None` when the spectrum collapsed and `-I` was used.
    lambda_gradient: Option<Array2<f64>>,
    input: Array2<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    multilap: MultiLapCache,
    rescale: Option<RescaleCache>,
    conv: Vec<ChebCache>,
    node_features: Array2<f64>,
    readout: Array1<f64>,
}

impl ForwardCache {
    /// The classifier input (pooled graph vector, or flattened node features).
    pub fn readout(&self) -> &Array1<f64> {
        &self.readout
    }

    /// Output of the last convolution layer.
    pub fn node_features(&self) -> &Array2<f64> {
        &self.node_features
    }
}

/// `2L/λ - I` with `λ` the largest eigenvalue (symmetric `L`) or the
/// dominant eigenvalue modulus (otherwise), plus what the backward pass needs.
fn rescale_forward(l: Array2<f64>) -> Result<(Array2<f64>, RescaleCache)> {
    let n = l.nrows();
    let (lambda, gradient) = if linalg::is_symmetric(l.view(), 1e-12) {
        let eig = eig_sym(l.view())?;
        let top = eig.vectors.column(n - 1).to_owned();
        let outer = Array2::from_shape_fn((n, n), |(i, j)| top[i] * top[j]);
        (eig.max_value(), outer)
    } else {
        let dom = linalg::dominant_eigen(l.view())?;
        let sign = dom.value.signum();
        (dom.value.abs(), dom.value_gradient() * sign)
    };
    let scale = linalg::max_abs(l.view()).max(1.0);
    if lambda <= RESCALE_ZERO_TOL * scale {
        log::warn!("learned laplacian has largest eigenvalue {lambda:e}; rescaling to -I");
        return Ok((
            -Array2::<f64>::eye(n),
            RescaleCache {
                lambda,
                lambda_gradient: None,
                input: l,
            },
        ));
    }
    let out = crate::laplacian::rescale_with(&l, lambda);
    Ok((
        out,
        RescaleCache {
            lambda,
            lambda_gradient: Some(gradient),
            input: l,
        },
    ))
}

fn rescale_backward(cache: &RescaleCache, grad: &Array2<f64>) -> Array2<f64> {
    match &cache.lambda_gradient {
        None => Array2::zeros(grad.raw_dim()),
        Some(dlambda) => {
            let lambda = cache.lambda;
            let coupling = linalg::inner(grad.view(), cache.input.view());
            let mut out = grad * (2.0 / lambda);
            out.scaled_add(-2.0 * coupling / (lambda * lambda), dlambda);
            out
        }
    }
}

fn flatten_padded(x: &Array2<f64>, max_nodes: usize) -> Result<Array1<f64>> {
    if x.nrows() > max_nodes {
        return Err(MlgcnError::shape(
            "readout",
            format!("graph has {} nodes, flattening readout holds {max_nodes}", x.nrows()),
        ));
    }
    let mut out = Array1::zeros(max_nodes * x.ncols());
    for (i, value) in x.iter().enumerate() {
        out[i] = *value;
    }
    Ok(out)
}

fn unflatten(grad: &Array1<f64>, n: usize, features: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, features), |(i, j)| grad[i * features + j])
}

/// Class logits for one graph.
pub fn forward(sample: &PreparedGraph, state: &ModelState) -> Result<(Array1<f64>, ForwardCache)> {
    let config = &state.config;
    let mats = sample.stack.matrices();
    let (learned, multilap_cache) = multilap_forward(&mats, &state.multilap).map_err(|e| e.in_stage("multilap"))?;

    let (operator, rescale) = if config.rescale_after_multilap {
        let (op, cache) = rescale_forward(learned).map_err(|e| e.in_stage("rescale"))?;
        (op, Some(cache))
    } else {
        (learned, None)
    };

    let mut x = sample.graph.features().to_owned();
    let mut conv_caches = Vec::with_capacity(state.conv.len());
    for bank in &state.conv {
        let (out, cache) = cheb_conv_forward(&operator, bank, &x).map_err(|e| e.in_stage("chebyshev convolution"))?;
        conv_caches.push(cache);
        x = out;
    }

    let neighborhoods = || {
        sample
            .neighborhoods
            .as_ref()
            .ok_or_else(|| MlgcnError::Usage("graph was prepared without neighborhoods".into()).in_stage("pooling"))
    };
    let readout = match config.pooling {
        PoolingMode::None => flatten_padded(&x, state.shape.max_nodes),
        PoolingMode::Gp => pooling::global_pool(&x, config.mean_readout),
        PoolingMode::Featprop => flatten_padded(&pooling::propagate(&x, neighborhoods()?)?, state.shape.max_nodes),
        PoolingMode::FeatpropGp => pooling::global_pool(&pooling::propagate(&x, neighborhoods()?)?, config.mean_readout),
        PoolingMode::ExpandGp => pooling::global_pool(&pooling::expand(&x, neighborhoods()?)?, config.mean_readout),
    }
    .map_err(|e| e.in_stage("pooling"))?;

    if readout.len() != state.classifier_weight.nrows() {
        return Err(MlgcnError::shape(
            "classifier",
            format!("readout has {} values, classifier expects {}", readout.len(), state.classifier_weight.nrows()),
        ));
    }
    let logits = state.classifier_weight.t().dot(&readout) + &state.classifier_bias;
    Ok((
        logits,
        ForwardCache {
            multilap: multilap_cache,
            rescale,
            conv: conv_caches,
            node_features: x,
            readout,
        },
    ))
}

/// Numerically stable softmax.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|z| (z - max).exp());
    let total = exps.sum();
    exps / total
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &Array1<f64>, label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(MlgcnError::Parameter(format!(
            "class label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    Ok(log_total - logits[label])
}

/// Cross-entropy loss of one graph; adds `weight × ∂loss/∂θ` into the
/// state's gradient buffers for every parameter.
pub fn loss_and_backward(
    logits: &Array1<f64>,
    label: usize,
    cache: &ForwardCache,
    sample: &PreparedGraph,
    state: &mut ModelState,
    weight: f64,
) -> Result<f64> {
    let loss = cross_entropy(logits, label)?;
    let mut grad_logits = softmax(logits);
    grad_logits[label] -= 1.0;
    grad_logits *= weight;
    backward(cache, sample, state, &grad_logits)?;
    Ok(loss)
}

/// Accumulates gradients for an arbitrary upstream `∂J/∂logits`.
pub fn backward(cache: &ForwardCache, sample: &PreparedGraph, state: &mut ModelState, grad_logits: &Array1<f64>) -> Result<()> {
    let n = sample.graph.n();
    let readout = &cache.readout;
    for (i, &h) in readout.iter().enumerate() {
        for (c, &g) in grad_logits.iter().enumerate() {
            state.grads.classifier_weight[[i, c]] += h * g;
        }
    }
    state.grads.classifier_bias += grad_logits;
    let grad_readout = state.classifier_weight.dot(grad_logits);

    let features = cache.node_features.ncols();
    let mean = state.config.mean_readout;
    let index = sample.neighborhoods.as_ref();
    let missing = || MlgcnError::Usage("graph was prepared without neighborhoods".into()).in_stage("pooling backward");
    let mut grad_x = match state.config.pooling {
        PoolingMode::None => unflatten(&grad_readout, n, features),
        PoolingMode::Gp => pooling::global_pool_backward(&grad_readout, n, mean),
        PoolingMode::Featprop => pooling::propagate_backward(&unflatten(&grad_readout, n, features), index.ok_or_else(missing)?)?,
        PoolingMode::FeatpropGp => {
            pooling::propagate_backward(&pooling::global_pool_backward(&grad_readout, n, mean), index.ok_or_else(missing)?)?
        }
        PoolingMode::ExpandGp => pooling::expand_backward(
            &pooling::global_pool_backward(&grad_readout, n, mean),
            index.ok_or_else(missing)?,
            features,
        )?,
    };

    let mut grad_operator = Array2::<f64>::zeros((n, n));
    for (layer, (bank, conv_cache)) in state.conv.iter().zip(&cache.conv).enumerate().rev() {
        let grads = cheb_conv_backward(conv_cache, bank, &grad_x).map_err(|e| e.in_stage("chebyshev backward"))?;
        state.grads.conv[layer] += &grads.theta;
        grad_operator += &grads.laplacian;
        grad_x = grads.signal;
    }

    let grad_learned = match &cache.rescale {
        Some(rc) => rescale_backward(rc, &grad_operator),
        None => grad_operator,
    };
    let multilap_grads =
        multilap_backward(&cache.multilap, &grad_learned, state.jacobian).map_err(|e| e.in_stage("multilap backward"))?;
    for (acc, g) in state.grads.multilap.iter_mut().zip(multilap_grads) {
        *acc += &g;
    }
    Ok(())
}

/// Loss only, no gradients.
pub fn loss(sample: &PreparedGraph, label: usize, state: &ModelState) -> Result<f64> {
    let (logits, _) = forward(sample, state)?;
    cross_entropy(&logits, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single_node_graph(feature: &[f64]) -> Graph {
        Graph::new(Array2::from_shape_vec((1, feature.len()), feature.to_vec()).unwrap(), vec![1], 1, []).unwrap()
    }

    #[test]
    fn zero_classifier_gives_uniform_loss() {
        for classes in [2usize, 3, 8] {
            let config = ModelConfig::default();
            let shape = ModelShape {
                feature_dim: 2,
                num_labels: 1,
                num_classes: classes,
                max_nodes: 4,
            };
            let mut state = ModelState::new(config.clone(), shape, 1).unwrap();
            state.classifier_weight.fill(0.0);
            let g = Graph::new(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], vec![1; 3], 1, [(0, 1), (1, 2)]).unwrap();
            let sample = PreparedGraph::new(g, &config, &shape).unwrap();
            let (logits, cache) = forward(&sample, &state).unwrap();
            let l = loss_and_backward(&logits, 0, &cache, &sample, &mut state, 1.0).unwrap();
            assert!((l - (classes as f64).ln()).abs() < 1e-12);
            // dJ/dlogit = 1/C - δ
            for c in 0..classes {
                let expected = 1.0 / classes as f64 - if c == 0 { 1.0 } else { 0.0 };
                assert!((state.grads.classifier_bias[c] - expected).abs() < 1e-15);
            }
        }
        assert!((8f64.ln() - 2.0794).abs() < 1e-4);
    }

    #[test]
    fn confident_logits_have_vanishing_loss() {
        let logits = array![60.0, -60.0, 0.0];
        assert!(cross_entropy(&logits, 0).unwrap() < 1e-25);
        let p = softmax(&logits);
        assert!((p[0] - 1.0).abs() < 1e-25 && p[1] < 1e-50);
        assert!(cross_entropy(&logits, 3).is_err());
    }

    #[test]
    fn identity_configuration_reproduces_node_feature() {
        let config = ModelConfig {
            menu: vec![LaplacianDescriptor::new(LaplacianFamily::Unnormalized, AffinityKind::Binary, 1, 1.0)],
            multilap_widths: vec![],
            cheb_order: 1,
            conv_filters: vec![2],
            pooling: PoolingMode::Gp,
            ..ModelConfig::default()
        };
        let shape = ModelShape {
            feature_dim: 2,
            num_labels: 1,
            num_classes: 2,
            max_nodes: 1,
        };
        let mut state = ModelState::new(config.clone(), shape, 5).unwrap();
        let mut theta = Array3::zeros((2, 2, 1));
        theta[[0, 0, 0]] = 1.0;
        theta[[1, 1, 0]] = 1.0;
        state.conv[0] = ChebFilterBank::from_theta(theta).unwrap();
        let sample = PreparedGraph::new(single_node_graph(&[0.25, -4.0]), &config, &shape).unwrap();
        let (_, cache) = forward(&sample, &state).unwrap();
        assert_eq!(cache.readout().to_vec(), vec![0.25, -4.0]);
    }

    #[test]
    fn flat_parameter_round_trip() {
        let config = ModelConfig::default();
        let shape = ModelShape {
            feature_dim: 3,
            num_labels: 2,
            num_classes: 3,
            max_nodes: 5,
        };
        let mut state = ModelState::new(config, shape, 9).unwrap();
        let flat = state.params_flat();
        let total = state.group_ranges().last().unwrap().1.end;
        assert_eq!(flat.len(), total);
        let shifted: Vec<f64> = flat.iter().map(|x| x + 1.0).collect();
        state.set_params_flat(&shifted).unwrap();
        assert_eq!(state.params_flat(), shifted);
        assert!(state.set_params_flat(&flat[1..]).is_err());
    }

    #[test]
    fn flattening_modes_need_a_node_budget() {
        let config = ModelConfig {
            pooling: PoolingMode::None,
            ..ModelConfig::default()
        };
        let shape = ModelShape {
            feature_dim: 1,
            num_labels: 1,
            num_classes: 2,
            max_nodes: 0,
        };
        assert!(ModelState::new(config, shape, 0).is_err());
    }

    #[test]
    fn oversized_graph_rejected_by_flattening_readout() {
        let config = ModelConfig {
            pooling: PoolingMode::None,
            ..ModelConfig::default()
        };
        let shape = ModelShape {
            feature_dim: 1,
            num_labels: 1,
            num_classes: 2,
            max_nodes: 2,
        };
        let state = ModelState::new(config.clone(), shape, 0).unwrap();
        let g = Graph::new(array![[1.0], [2.0], [3.0]], vec![1; 3], 1, [(0, 1), (1, 2)]).unwrap();
        let sample = PreparedGraph::new(g, &config, &shape).unwrap();
        let err = forward(&sample, &state).unwrap_err();
        assert!(err.to_string().contains("pooling"), "{err}");
    }

    #[test]
    fn pooling_mode_names_round_trip() {
        for mode in PoolingMode::ALL {
            assert_eq!(PoolingMode::parse(mode.as_str()), Some(mode));
        }
        assert_eq!(PoolingMode::parse("bogus"), None);
    }
}
