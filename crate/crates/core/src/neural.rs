//! Small dependency-free Q-network: a two-hidden-layer ReLU MLP with either a
//! plain linear output or dueling value/advantage heads, trained with Adam.
//!
//! Parameters live in one flat vector (each layer's row-major weights followed
//! by its bias), which keeps the optimizer and gradient checks simple.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
    #[error("DimensionMismatch: expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("NonFiniteInput")]
    NonFiniteInput,
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("CorruptCheckpoint: {0}")]
    CorruptCheckpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden_dims: [usize; 2],
    pub output_dim: usize,
    pub dueling: bool,
    pub seed: u64,
}

impl NetSpec {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(NetError::InvalidSpec(format!("all dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }

    /// (rows = outputs, cols = inputs) for each dense layer in storage order.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let [h1, h2] = self.hidden_dims;
        let mut shapes = vec![(h1, self.input_dim), (h2, h1)];
        if self.dueling {
            shapes.push((1, h2));
            shapes.push((self.output_dim, h2));
        } else {
            shapes.push((self.output_dim, h2));
        }
        shapes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    rows: usize,
    cols: usize,
    w: usize,
    b: usize,
}

impl Layer {
    fn end(&self) -> usize {
        self.b + self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Activations kept for the backward pass.
struct Trace {
    h1: Vec<f64>,
    h2: Vec<f64>,
    value: f64,
    advantages: Vec<f64>,
    q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    spec: NetSpec,
    layers: Vec<Layer>,
    params: Vec<f64>,
    adam_cfg: AdamConfig,
    adam: AdamState,
}

fn dense(params: &[f64], layer: &Layer, input: &[f64], relu: bool) -> Vec<f64> {
    let w = &params[layer.w..layer.b];
    let b = &params[layer.b..layer.end()];
    (0..layer.rows)
        .map(|r| {
            let row = &w[r * layer.cols..(r + 1) * layer.cols];
            let z = b[r] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
            if relu { z.max(0.0) } else { z }
        })
        .collect()
}

/// Accumulates the gradient of a dense layer and returns d(loss)/d(input).
fn dense_backward(params: &[f64], grad: &mut [f64], layer: &Layer, input: &[f64], g_out: &[f64], want_input_grad: bool) -> Vec<f64> {
    let mut g_in = if want_input_grad { vec![0.0; layer.cols] } else { Vec::new() };
    for (r, &g) in g_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grad[layer.b + r] += g;
        let w_off = layer.w + r * layer.cols;
        for (gw, x) in grad[w_off..w_off + layer.cols].iter_mut().zip(input) {
            *gw += g * x;
        }
        if want_input_grad {
            for (gi, w) in g_in.iter_mut().zip(&params[w_off..w_off + layer.cols]) {
                *gi += g * w;
            }
        }
    }
    g_in
}

/// Combines the value and advantage streams: `V + (A - mean(A))`.
pub fn dueling_aggregate(value: f64, advantages: &[f64]) -> Vec<f64> {
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    advantages.iter().map(|a| value + (a - mean)).collect()
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl QNetwork {
    /// Random init: weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn new(spec: NetSpec) -> Result<Self, NetError> {
        spec.validate()?;
        let mut net = Self::zeroed(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for layer in net.layers.clone() {
            let limit = (6.0 / (layer.rows + layer.cols) as f64).sqrt();
            for w in &mut net.params[layer.w..layer.b] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    fn zeroed(spec: NetSpec) -> Self {
        let mut layers = Vec::new();
        let mut offset = 0;
        for (rows, cols) in spec.layer_shapes() {
            let layer = Layer { rows, cols, w: offset, b: offset + rows * cols };
            offset = layer.end();
            layers.push(layer);
        }
        QNetwork {
            spec,
            layers,
            params: vec![0.0; offset],
            adam_cfg: AdamConfig::default(),
            adam: AdamState { step: 0, m: vec![0.0; offset], v: vec![0.0; offset] },
        }
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn adam_step(&self) -> u64 {
        self.adam.step
    }

    pub fn set_adam_config(&mut self, cfg: AdamConfig) {
        self.adam_cfg = cfg;
    }

    fn check_input(&self, state: &[f64]) -> Result<(), NetError> {
        if state.len() != self.spec.input_dim {
            return Err(NetError::DimensionMismatch { expected: self.spec.input_dim, got: state.len() });
        }
        if !state.iter().all(|x| x.is_finite()) {
            return Err(NetError::NonFiniteInput);
        }
        Ok(())
    }

    fn trace(&self, state: &[f64]) -> Trace {
        let h1 = dense(&self.params, &self.layers[0], state, true);
        let h2 = dense(&self.params, &self.layers[1], &h1, true);
        if self.spec.dueling {
            let value = dense(&self.params, &self.layers[2], &h2, false)[0];
            let advantages = dense(&self.params, &self.layers[3], &h2, false);
            let q = dueling_aggregate(value, &advantages);
            Trace { h1, h2, value, advantages, q }
        } else {
            let q = dense(&self.params, &self.layers[2], &h2, false);
            Trace { h1, h2, value: 0.0, advantages: Vec::new(), q }
        }
    }

    /// Q-values for every action.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>, NetError> {
        self.check_input(state)?;
        Ok(self.trace(state).q)
    }

    /// Raw value and advantage head outputs (dueling networks only).
    pub fn dueling_heads(&self, state: &[f64]) -> Result<(f64, Vec<f64>), NetError> {
        if !self.spec.dueling {
            return Err(NetError::ShapeMismatch("network has no dueling heads".into()));
        }
        self.check_input(state)?;
        let t = self.trace(state);
        Ok((t.value, t.advantages))
    }

    fn check_batch(&self, states: &[Vec<f64>], actions: &[usize], targets: &[f64]) -> Result<(), NetError> {
        if states.is_empty() || states.len() != actions.len() || states.len() != targets.len() {
            return Err(NetError::ShapeMismatch(format!(
                "batch sizes: {} states, {} actions, {} targets",
                states.len(),
                actions.len(),
                targets.len()
            )));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.spec.output_dim) {
            return Err(NetError::ShapeMismatch(format!("action {a} out of range")));
        }
        if !targets.iter().all(|t| t.is_finite()) {
            return Err(NetError::NonFiniteInput);
        }
        for s in states {
            self.check_input(s)?;
        }
        Ok(())
    }

    /// Mean squared error between targets and the taken actions' Q-values,
    /// with its gradient with respect to the flat parameter vector.
    pub fn loss_and_grad(&self, states: &[Vec<f64>], actions: &[usize], targets: &[f64]) -> Result<(f64, Vec<f64>), NetError> {
        self.check_batch(states, actions, targets)?;
        let batch = states.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let out_dim = self.spec.output_dim;
        for ((state, &action), &target) in states.iter().zip(actions).zip(targets) {
            let tr = self.trace(state);
            let err = tr.q[action] - target;
            loss += err * err;
            let g = 2.0 * err / batch;
            let mut g_h2 = if self.spec.dueling {
                let g_adv: Vec<f64> = (0..out_dim)
                    .map(|j| if j == action { g } else { 0.0 } - g / out_dim as f64)
                    .collect();
                let from_value = dense_backward(&self.params, &mut grad, &self.layers[2], &tr.h2, &[g], true);
                let from_adv = dense_backward(&self.params, &mut grad, &self.layers[3], &tr.h2, &g_adv, true);
                from_value.iter().zip(&from_adv).map(|(a, b)| a + b).collect::<Vec<_>>()
            } else {
                let mut g_out = vec![0.0; out_dim];
                g_out[action] = g;
                dense_backward(&self.params, &mut grad, &self.layers[2], &tr.h2, &g_out, true)
            };
            for (gh, h) in g_h2.iter_mut().zip(&tr.h2) {
                if *h <= 0.0 {
                    *gh = 0.0;
                }
            }
            let mut g_h1 = dense_backward(&self.params, &mut grad, &self.layers[1], &tr.h1, &g_h2, true);
            for (gh, h) in g_h1.iter_mut().zip(&tr.h1) {
                if *h <= 0.0 {
                    *gh = 0.0;
                }
            }
            dense_backward(&self.params, &mut grad, &self.layers[0], state, &g_h1, false);
        }
        Ok((loss / batch, grad))
    }

    pub fn loss(&self, states: &[Vec<f64>], actions: &[usize], targets: &[f64]) -> Result<f64, NetError> {
        self.check_batch(states, actions, targets)?;
        let total: f64 = states
            .iter()
            .zip(actions)
            .zip(targets)
            .map(|((s, &a), &t)| {
                let e = self.trace(s).q[a] - t;
                e * e
            })
            .sum();
        Ok(total / states.len() as f64)
    }

    /// One Adam step on the batch MSE. Returns the loss before the update.
    pub fn train_step(&mut self, states: &[Vec<f64>], actions: &[usize], targets: &[f64], lr: f64) -> Result<f64, NetError> {
        let (loss, grad) = self.loss_and_grad(states, actions, targets)?;
        let AdamConfig { beta1, beta2, eps } = self.adam_cfg;
        self.adam.step += 1;
        let bc1 = 1.0 - beta1.powi(self.adam.step as i32);
        let bc2 = 1.0 - beta2.powi(self.adam.step as i32);
        for (((p, m), v), g) in self.params.iter_mut().zip(&mut self.adam.m).zip(&mut self.adam.v).zip(&grad) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(loss)
    }

    /// Versioned JSON checkpoint with row-major weights and optimizer state.
    pub fn save(&self) -> Vec<u8> {
        let names: &[&str] = if self.spec.dueling {
            &["hidden1", "hidden2", "value", "advantage"]
        } else {
            &["hidden1", "hidden2", "output"]
        };
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            spec: self.spec,
            layers: self
                .layers
                .iter()
                .zip(names)
                .map(|(l, name)| LayerRecord {
                    name: name.to_string(),
                    rows: l.rows,
                    cols: l.cols,
                    weights: self.params[l.w..l.b].to_vec(),
                    bias: self.params[l.b..l.end()].to_vec(),
                })
                .collect(),
            adam: self.adam.clone(),
            adam_config: self.adam_cfg,
        };
        serde_json::to_vec(&ckpt).expect("checkpoint serialization cannot fail")
    }

    pub fn load(bytes: &[u8]) -> Result<Self, NetError> {
        let corrupt = |m: String| NetError::CorruptCheckpoint(m);
        let ckpt: Checkpoint = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported format {} v{}", ckpt.format, ckpt.version)));
        }
        ckpt.spec.validate().map_err(|e| corrupt(e.to_string()))?;
        let mut net = Self::zeroed(ckpt.spec);
        if ckpt.layers.len() != net.layers.len() {
            return Err(corrupt(format!("expected {} layers, found {}", net.layers.len(), ckpt.layers.len())));
        }
        for (layer, rec) in net.layers.clone().iter().zip(&ckpt.layers) {
            if rec.rows != layer.rows
                || rec.cols != layer.cols
                || rec.weights.len() != layer.rows * layer.cols
                || rec.bias.len() != layer.rows
            {
                return Err(corrupt(format!("layer {} has inconsistent shape", rec.name)));
            }
            net.params[layer.w..layer.b].copy_from_slice(&rec.weights);
            net.params[layer.b..layer.end()].copy_from_slice(&rec.bias);
        }
        if ckpt.adam.m.len() != net.params.len() || ckpt.adam.v.len() != net.params.len() {
            return Err(corrupt("optimizer state has wrong length".into()));
        }
        if !net.params.iter().all(|p| p.is_finite()) {
            return Err(corrupt("non-finite parameter".into()));
        }
        net.adam = ckpt.adam;
        net.adam_cfg = ckpt.adam_config;
        Ok(net)
    }
}

const CHECKPOINT_FORMAT: &str = "mmrl-qnetwork";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    name: String,
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    spec: NetSpec,
    layers: Vec<LayerRecord>,
    adam: AdamState,
    adam_config: AdamConfig,
}
