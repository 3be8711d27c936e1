//! The laplacian network: layers of simplex-weighted, entrywise-activated
//! combinations of laplacians, ending in a single learned laplacian.
//!
//! Layer `ℓ` unit `p` computes `g(Σ_q w[p, q] L_q)` where the row `w[p, ·]`
//! is the exp-normalization of unconstrained weights `ŵ[p, ·]`, so it always
//! lies on the probability simplex.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlgcnError, Result};
use crate::linalg::inner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Identity,
    /// `log(1 + e^x)`
    Softplus,
    /// `a·x + softplus((1 - a)·x)`
    LeakySoftplus,
    Relu,
    LeakyRelu,
}

impl ActivationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Softplus => "softplus",
            ActivationKind::LeakySoftplus => "leaky_softplus",
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky_relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "identity" => ActivationKind::Identity,
            "softplus" => ActivationKind::Softplus,
            "leaky_softplus" => ActivationKind::LeakySoftplus,
            "relu" => ActivationKind::Relu,
            "leaky_relu" => ActivationKind::LeakyRelu,
            _ => return None,
        })
    }
}

pub const DEFAULT_LEAK: f64 = 0.01;

/// Entrywise activation; `leak` is only read by the leaky kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub kind: ActivationKind,
    pub leak: f64,
}

impl Default for Activation {
    fn default() -> Self {
        Activation {
            kind: ActivationKind::LeakySoftplus,
            leak: DEFAULT_LEAK,
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn new(kind: ActivationKind, leak: f64) -> Result<Self> {
        let act = Activation { kind, leak };
        act.validate()?;
        Ok(act)
    }

    pub fn validate(&self) -> Result<()> {
        let leaky = matches!(self.kind, ActivationKind::LeakySoftplus | ActivationKind::LeakyRelu);
        if leaky && !(self.leak > 0.0 && self.leak < 1.0) {
            return Err(MlgcnError::Parameter(format!(
                "leak must lie in (0, 1), got {}",
                self.leak
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: f64) -> f64 {
        let a = self.leak;
        match self.kind {
            ActivationKind::Identity => x,
            ActivationKind::Softplus => softplus(x),
            ActivationKind::LeakySoftplus => a * x + softplus((1.0 - a) * x),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let a = self.leak;
        match self.kind {
            ActivationKind::Identity => 1.0,
            ActivationKind::Softplus => sigmoid(x),
            ActivationKind::LeakySoftplus => a + (1.0 - a) * sigmoid((1.0 - a) * x),
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
        }
    }

    pub fn apply_matrix(&self, m: &Array2<f64>) -> Array2<f64> {
        m.mapv(|x| self.apply(x))
    }
}

/// `w_q = exp(ŵ_q - max ŵ) / Σ_r exp(ŵ_r - max ŵ)`.
pub fn constrain_weights(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(MlgcnError::Parameter("empty weight vector".into()));
    }
    if let Some(bad) = raw.iter().find(|x| !x.is_finite()) {
        return Err(MlgcnError::Parameter(format!("non-finite raw weight {bad}")));
    }
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// How the simplex reparametrization is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimplexJacobian {
    /// Full softmax Jacobian `∂w_q/∂ŵ_r = w_q (δ_qr - w_r)`.
    #[default]
    Exact,
    /// Diagonal-only `e^{Σ_r ŵ_r} / (e^{ŵ_q} + e^{Σ_{r≠q} ŵ_r})²`, which
    /// evaluates the normalizer at the sum of the other raw weights. Wrong
    /// for more than two inputs; kept as a gradient-check negative control.
    CollapsedNormalizer,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl SimplexJacobian {
    /// Maps `∂J/∂w` for one unit to `∂J/∂ŵ`.
    pub fn pull_back(self, raw: &[f64], weights: &[f64], grad_w: &[f64]) -> Vec<f64> {
        match self {
            SimplexJacobian::Exact => {
                let mean: f64 = weights.iter().zip(grad_w).map(|(w, g)| w * g).sum();
                weights
                    .iter()
                    .zip(grad_w)
                    .map(|(w, g)| w * (g - mean))
                    .collect()
            }
            SimplexJacobian::CollapsedNormalizer => {
                let total: f64 = raw.iter().sum();
                raw.iter()
                    .zip(grad_w)
                    .map(|(&r, g)| {
                        let others = total - r;
                        g * (total - 2.0 * log_add_exp(r, others)).exp()
                    })
                    .collect()
            }
        }
    }
}

/// Unconstrained weights of every layer plus the shared activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLapParams {
    input_size: usize,
    widths: Vec<usize>,
    /// Layer `ℓ` has shape `(n_{ℓ+1}, n_ℓ)`; row `p` holds unit `p`'s `ŵ`.
    raw: Vec<Array2<f64>>,
    activation: Activation,
}

impl MultiLapParams {
    /// `widths` lists `n_2, ..., n_d` and must end in 1. An empty `widths`
    /// means depth 1: the single input laplacian passes through unchanged.
    pub fn new(input_size: usize, widths: &[usize], activation: Activation) -> Result<Self> {
        activation.validate()?;
        if input_size == 0 {
            return Err(MlgcnError::Parameter("laplacian network needs at least one input".into()));
        }
        if widths.is_empty() && input_size != 1 {
            return Err(MlgcnError::Parameter(format!(
                "a depth-1 laplacian network takes exactly one input laplacian, got {input_size}"
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(MlgcnError::Parameter("layer widths must be positive".into()));
        }
        if let Some(&last) = widths.last() {
            if last != 1 {
                return Err(MlgcnError::Parameter(format!(
                    "final laplacian layer must have one unit, got {last}"
                )));
            }
        }
        let mut fan_in = input_size;
        let raw = widths
            .iter()
            .map(|&units| {
                let layer = Array2::zeros((units, fan_in));
                fan_in = units;
                layer
            })
            .collect();
        Ok(MultiLapParams {
            input_size,
            widths: widths.to_vec(),
            raw,
            activation,
        })
    }

    /// Draws every raw weight uniformly from `[-spread, spread]`.
    pub fn randomize(&mut self, rng: &mut impl Rng, spread: f64) {
        for layer in &mut self.raw {
            layer.mapv_inplace(|_| rng.random_range(-spread..=spread));
        }
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of laplacian levels including the input level.
    pub fn depth(&self) -> usize {
        self.widths.len() + 1
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn raw(&self) -> &[Array2<f64>] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.raw
    }

    /// Simplex weights of layer `layer`, same shape as its raw weights.
    pub fn weights(&self, layer: usize) -> Result<Array2<f64>> {
        let raw = &self.raw[layer];
        let mut out = Array2::zeros(raw.raw_dim());
        for (p, row) in raw.rows().into_iter().enumerate() {
            let w = constrain_weights(&row.to_vec())?;
            out.row_mut(p).assign(&ndarray::Array1::from(w));
        }
        Ok(out)
    }

    /// Replaces the raw weights, checking shapes.
    pub fn set_raw(&mut self, raw: Vec<Array2<f64>>) -> Result<()> {
        if raw.len() != self.raw.len()
            || raw.iter().zip(&self.raw).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(MlgcnError::shape("multilap", "raw weight shapes do not match the network"));
        }
        self.raw = raw;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    inputs: Vec<Array2<f64>>,
    raw: Array2<f64>,
    weights: Array2<f64>,
    pre_activations: Vec<Array2<f64>>,
}

/// Everything the backward pass needs from one forward call.
#[derive(Debug, Clone)]
pub struct MultiLapCache {
    n: usize,
    activation: Activation,
    layers: Vec<LayerCache>,
}

/// Forward pass. Returns the final learned laplacian.
pub fn multilap_forward(
    inputs: &[&Array2<f64>],
    params: &MultiLapParams,
) -> Result<(Array2<f64>, MultiLapCache)> {
    if inputs.len() != params.input_size {
        return Err(MlgcnError::Parameter(format!(
            "laplacian network expects {} input laplacians, got {}",
            params.input_size,
            inputs.len()
        )));
    }
    let n = inputs[0].nrows();
    if inputs.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(MlgcnError::Parameter(
            "input laplacians must all be n×n with the same n".into(),
        ));
    }

    let mut current: Vec<Array2<f64>> = inputs.iter().map(|m| (*m).clone()).collect();
    let mut layers = Vec::with_capacity(params.raw.len());
    for (index, raw) in params.raw.iter().enumerate() {
        let weights = params.weights(index)?;
        let mut pre_activations = Vec::with_capacity(raw.nrows());
        let mut outputs = Vec::with_capacity(raw.nrows());
        for unit in weights.rows() {
            let mut z = Array2::<f64>::zeros((n, n));
            for (w, lap) in unit.iter().zip(&current) {
                z.scaled_add(*w, lap);
            }
            outputs.push(params.activation.apply_matrix(&z));
            pre_activations.push(z);
        }
        layers.push(LayerCache {
            inputs: std::mem::replace(&mut current, outputs),
            raw: raw.clone(),
            weights,
            pre_activations,
        });
    }
    let out = current.pop().expect("network has one output");
    Ok((
        out,
        MultiLapCache {
            n,
            activation: params.activation,
            layers,
        },
    ))
}

/// Reverse pass: gradient of the loss with respect to every raw weight,
/// shaped like [`MultiLapParams::raw`].
pub fn multilap_backward(
    cache: &MultiLapCache,
    upstream: &Array2<f64>,
    jacobian: SimplexJacobian,
) -> Result<Vec<Array2<f64>>> {
    if upstream.nrows() != cache.n || upstream.ncols() != cache.n {
        return Err(MlgcnError::Usage(format!(
            "upstream gradient is {}x{}, but the cached forward pass was {n}x{n}",
            upstream.nrows(),
            upstream.ncols(),
            n = cache.n
        )));
    }
    let mut grads: Vec<Array2<f64>> = cache
        .layers
        .iter()
        .map(|l| Array2::zeros(l.raw.raw_dim()))
        .collect();
    let mut grad_outputs = vec![upstream.clone()];
    for (index, layer) in cache.layers.iter().enumerate().rev() {
        let mut grad_inputs: Vec<Array2<f64>> = layer
            .inputs
            .iter()
            .map(|_| Array2::zeros((cache.n, cache.n)))
            .collect();
        for (unit, grad_out) in grad_outputs.iter().enumerate() {
            let pre = &layer.pre_activations[unit];
            let mut grad_pre = grad_out.clone();
            grad_pre.zip_mut_with(pre, |g, &z| *g *= cache.activation.derivative(z));

            let weights = layer.weights.row(unit);
            let grad_w: Vec<f64> = layer
                .inputs
                .iter()
                .map(|lap| inner(grad_pre.view(), lap.view()))
                .collect();
            for (gi, &w) in grad_inputs.iter_mut().zip(weights.iter()) {
                gi.scaled_add(w, &grad_pre);
            }
            let raw_row = layer.raw.row(unit).to_vec();
            let pulled = jacobian.pull_back(&raw_row, &weights.to_vec(), &grad_w);
            for (q, g) in pulled.into_iter().enumerate() {
                grads[index][[unit, q]] += g;
            }
        }
        grad_outputs = grad_inputs;
    }
    Ok(grads)
}
