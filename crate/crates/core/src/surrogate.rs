//! Fully connected rectifier network with mini-batch Adam training and
//! per-layer freezing.
//!
//! Model files are JSON documents:
//!
//! ```text
//! { "format": "enginecal-mlp", "version": 1,
//!   "spec": {...}, "layers": [{ "n_in", "n_out", "weights", "biases" }, ...],
//!   "scalers": { "inputs": {...}, "outputs": {...} } | null }
//! ```
//!
//! `weights` is row-major `n_out × n_in`. Floats are written with enough
//! digits to round-trip exactly.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetScalers, N_INPUTS, N_OUTPUTS};
use crate::rng::SeededRng;

pub const MODEL_FORMAT: &str = "enginecal-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid freeze mask: {0}")]
    InvalidFreezeMask(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: String },
    #[error("model file parse error: {0}")]
    Parse(String),
    #[error("model has no scalers attached")]
    MissingScalers,
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Default for MlpSpec {
    /// 10 inputs, six hidden layers of 16 rectifier units, 5 linear outputs.
    fn default() -> Self {
        let mut layer_sizes = vec![N_INPUTS];
        layer_sizes.extend([16; 6]);
        layer_sizes.push(N_OUTPUTS);
        Self {
            layer_sizes,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        }
    }
}

impl MlpSpec {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(SurrogateError::ShapeMismatch("need at least two non-empty layers".into()));
        }
        Ok(())
    }

    pub fn n_hidden(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }
}

/// One affine map; `weights` is row-major `n_out × n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let mut z = self.biases[o];
            for (w, xi) in row.iter().zip(x) {
                z += w * xi;
            }
            out.push(z);
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub spec: MlpSpec,
    /// Hidden layers first, output layer last.
    pub layers: Vec<Layer>,
    pub scalers: Option<DatasetScalers>,
}

/// He fan-in initialization: `N(0, 2/fan_in)` weights, zero biases.
pub fn init_model(spec: &MlpSpec, seed: u64) -> Result<MlpModel, SurrogateError> {
    spec.validate()?;
    let mut rng = SeededRng::new(seed);
    let layers = spec
        .layer_sizes
        .windows(2)
        .map(|w| {
            let mut layer = Layer::zeros(w[0], w[1]);
            let scale = (2.0 / w[0] as f64).sqrt();
            for v in &mut layer.weights {
                let z: f64 = StandardNormal.sample(rng.inner_mut());
                *v = scale * z;
            }
            layer
        })
        .collect();
    Ok(MlpModel {
        spec: spec.clone(),
        layers,
        scalers: None,
    })
}

/// Per-layer trainability. Hidden layer `k` is the affine map feeding the
/// `k`-th rectifier block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezeMask {
    pub hidden_trainable: Vec<bool>,
    #[serde(default = "yes")]
    pub output_trainable: bool,
}

fn yes() -> bool {
    true
}

impl FreezeMask {
    pub fn all_trainable(n_hidden: usize) -> Self {
        Self {
            hidden_trainable: vec![true; n_hidden],
            output_trainable: true,
        }
    }

    /// The first `k` hidden layers frozen.
    pub fn freeze_first(n_hidden: usize, k: usize) -> Self {
        Self {
            hidden_trainable: (0..n_hidden).map(|i| i >= k).collect(),
            output_trainable: true,
        }
    }

    pub fn all_frozen(n_hidden: usize) -> Self {
        Self {
            hidden_trainable: vec![false; n_hidden],
            output_trainable: false,
        }
    }

    /// Trainability of layer `i` in `MlpModel::layers` order.
    pub fn layer_trainable(&self, i: usize) -> bool {
        self.hidden_trainable.get(i).copied().unwrap_or(self.output_trainable)
    }

    pub fn validate(&self, spec: &MlpSpec) -> Result<(), SurrogateError> {
        if self.hidden_trainable.len() != spec.n_hidden() {
            return Err(SurrogateError::InvalidFreezeMask(format!(
                "{} flags for {} hidden layers",
                self.hidden_trainable.len(),
                spec.n_hidden()
            )));
        }
        if !self.output_trainable && self.hidden_trainable.iter().all(|t| !t) {
            return Err(SurrogateError::InvalidFreezeMask("every layer is frozen".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub shuffle_seed: u64,
    /// `None` trains every layer.
    pub freeze: Option<FreezeMask>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            adam: AdamConfig::default(),
            shuffle_seed: 0,
            freeze: None,
        }
    }
}

/// Gradient container with the same shapes as the model layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.biases.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Activations of one forward pass, kept for backpropagation.
struct Tape {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl MlpModel {
    pub fn with_scalers(mut self, scalers: DatasetScalers) -> Self {
        self.scalers = Some(scalers);
        self
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.spec.output_activation
        } else {
            self.spec.hidden_activation
        }
    }

    fn new_tape(&self) -> Tape {
        let mut acts = vec![Vec::with_capacity(self.spec.n_inputs())];
        let mut pre = Vec::new();
        for l in &self.layers {
            acts.push(Vec::with_capacity(l.n_out));
            pre.push(Vec::with_capacity(l.n_out));
        }
        Tape { acts, pre }
    }

    fn run(&self, x: &[f64], tape: &mut Tape) {
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = tape.acts.split_at_mut(i + 1);
            layer.affine(&before[i], &mut tape.pre[i]);
            let act = self.activation(i);
            after[0].clear();
            after[0].extend(tape.pre[i].iter().map(|&z| act.apply(z)));
        }
    }

    /// Forward pass of one scaled input row.
    pub fn forward_row(&self, x: &[f64]) -> Vec<f64> {
        let mut tape = self.new_tape();
        self.run(x, &mut tape);
        tape.acts.pop().expect("output layer")
    }

    /// Forward pass on scaled rows. Each row is computed independently, so
    /// batched and single-row results agree bit for bit.
    pub fn forward(&self, inputs: &[[f64; N_INPUTS]]) -> Vec<[f64; N_OUTPUTS]> {
        let mut tape = self.new_tape();
        inputs
            .iter()
            .map(|x| {
                self.run(x, &mut tape);
                let y = &tape.acts[self.layers.len()];
                std::array::from_fn(|j| y[j])
            })
            .collect()
    }

    /// Predictions on raw (unscaled) inputs, returned on the original scale.
    pub fn predict(&self, inputs: &[[f64; N_INPUTS]]) -> Result<Vec<[f64; N_OUTPUTS]>, SurrogateError> {
        let s = self.scalers.as_ref().ok_or(SurrogateError::MissingScalers)?;
        let mut tape = self.new_tape();
        Ok(inputs
            .iter()
            .map(|x| {
                self.run(&s.inputs.transform_row(x), &mut tape);
                let y = &tape.acts[self.layers.len()];
                s.outputs.inverse_row(&std::array::from_fn(|j| y[j]))
            })
            .collect())
    }

    /// Mean squared error over rows and outputs on scaled data.
    pub fn loss(&self, inputs: &[[f64; N_INPUTS]], targets: &[[f64; N_OUTPUTS]]) -> f64 {
        let pred = self.forward(inputs);
        let mut sum = 0.0;
        for (p, t) in pred.iter().zip(targets) {
            for j in 0..N_OUTPUTS {
                sum += (p[j] - t[j]).powi(2);
            }
        }
        sum / (inputs.len() * N_OUTPUTS) as f64
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn check_shape(&self) -> Result<(), SurrogateError> {
        self.spec.validate()?;
        if self.spec.n_inputs() != N_INPUTS || self.spec.n_outputs() != N_OUTPUTS {
            return Err(SurrogateError::ShapeMismatch(format!(
                "model maps {} → {}, data has {N_INPUTS} → {N_OUTPUTS}",
                self.spec.n_inputs(),
                self.spec.n_outputs()
            )));
        }
        if self.layers.len() + 1 != self.spec.layer_sizes.len() {
            return Err(SurrogateError::ShapeMismatch("layer count disagrees with spec".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (self.spec.layer_sizes[i], self.spec.layer_sizes[i + 1]);
            if l.n_in != n_in || l.n_out != n_out || l.weights.len() != n_in * n_out || l.biases.len() != n_out {
                return Err(SurrogateError::ShapeMismatch(format!("layer {i} has the wrong shape")));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(SurrogateError::ShapeMismatch(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Accumulate `scale · ∂(Σ (y - t)²)/∂θ` for one row into `grads`; returns
/// the row's squared error.
fn backprop_row(
    model: &MlpModel,
    tape: &mut Tape,
    delta: &mut Vec<f64>,
    next: &mut Vec<f64>,
    x: &[f64],
    t: &[f64],
    scale: f64,
    mask: Option<&FreezeMask>,
    grads: &mut Gradients,
) -> f64 {
    model.run(x, tape);
    let n_layers = model.layers.len();
    let y = &tape.acts[n_layers];
    let mut sq = 0.0;
    delta.clear();
    for (yi, ti) in y.iter().zip(t) {
        let e = yi - ti;
        sq += e * e;
        delta.push(2.0 * e * scale);
    }
    // The earliest trainable layer bounds how far back the pass must go.
    let first = match mask {
        Some(m) => (0..n_layers).find(|&i| m.layer_trainable(i)).unwrap_or(n_layers),
        None => 0,
    };
    for i in (first..n_layers).rev() {
        let layer = &model.layers[i];
        if model.activation(i) == Activation::Relu {
            for (d, &z) in delta.iter_mut().zip(&tape.pre[i]) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let input = &tape.acts[i];
        if mask.map_or(true, |m| m.layer_trainable(i)) {
            let g = &mut grads.layers[i];
            for o in 0..layer.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
        }
        if i > first {
            next.clear();
            next.resize(layer.n_in, 0.0);
            for o in 0..layer.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            std::mem::swap(delta, next);
        }
    }
    sq
}

/// Exact reverse-mode gradients of the batch MSE (mean over rows and
/// outputs). Frozen layers get zero gradient.
pub fn gradients(
    model: &MlpModel,
    inputs: &[[f64; N_INPUTS]],
    targets: &[[f64; N_OUTPUTS]],
    mask: Option<&FreezeMask>,
) -> Result<(Gradients, f64), SurrogateError> {
    model.check_shape()?;
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(SurrogateError::ShapeMismatch("batch inputs and targets differ in length".into()));
    }
    let mut grads = Gradients::zeros_like(model);
    let loss = accumulate(model, inputs, targets, mask, &mut grads);
    Ok((grads, loss))
}

fn accumulate(
    model: &MlpModel,
    inputs: &[[f64; N_INPUTS]],
    targets: &[[f64; N_OUTPUTS]],
    mask: Option<&FreezeMask>,
    grads: &mut Gradients,
) -> f64 {
    let mut tape = model.new_tape();
    let mut delta = Vec::with_capacity(16);
    let mut next = Vec::with_capacity(16);
    let scale = 1.0 / (inputs.len() * N_OUTPUTS) as f64;
    let mut sq = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        sq += backprop_row(model, &mut tape, &mut delta, &mut next, x, t, scale, mask, grads);
    }
    sq * scale
}

struct Adam {
    config: AdamConfig,
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl Adam {
    fn new(model: &MlpModel, config: AdamConfig) -> Self {
        Self {
            config,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut MlpModel, grads: &Gradients, mask: Option<&FreezeMask>) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        for (i, layer) in model.layers.iter_mut().enumerate() {
            if !mask.map_or(true, |m| m.layer_trainable(i)) {
                continue;
            }
            let (g, m, v) = (&grads.layers[i], &mut self.m.layers[i], &mut self.v.layers[i]);
            let pairs = [
                (&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights),
                (&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases),
            ];
            for (theta, g, m, v) in pairs {
                for k in 0..theta.len() {
                    m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
                    v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    theta[k] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
                }
            }
        }
    }
}

/// Shuffled mini-batch Adam on scaled data. Returns the trained model and
/// the mean training loss of every epoch.
pub fn train(model: &MlpModel, data: &Dataset, config: &TrainConfig) -> Result<(MlpModel, Vec<f64>), SurrogateError> {
    model.check_shape()?;
    if config.batch_size == 0 {
        return Err(SurrogateError::InvalidConfig("batch size must be at least 1".into()));
    }
    if let Some(mask) = &config.freeze {
        mask.validate(&model.spec)?;
    }
    let mut model = model.clone();
    if config.epochs == 0 {
        return Ok((model, Vec::new()));
    }
    if data.is_empty() {
        return Err(SurrogateError::InvalidConfig("training data is empty".into()));
    }
    let mask = config.freeze.as_ref();
    let mut adam = Adam::new(&model, config.adam);
    let mut rng = SeededRng::new(config.shuffle_seed);
    let mut grads = Gradients::zeros_like(&model);
    let mut history = Vec::with_capacity(config.epochs);
    let mut bx: Vec<[f64; N_INPUTS]> = Vec::with_capacity(config.batch_size);
    let mut by: Vec<[f64; N_OUTPUTS]> = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        let order = rng.permutation(data.len());
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            bx.extend(batch.iter().map(|&i| data.inputs[i]));
            by.extend(batch.iter().map(|&i| data.outputs[i]));
            grads.clear();
            let loss = accumulate(&model, &bx, &by, mask, &mut grads);
            if !loss.is_finite() {
                return Err(SurrogateError::NonFiniteLoss { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            adam.update(&mut model, &grads, mask);
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() {
            return Err(SurrogateError::NonFiniteLoss { epoch });
        }
        history.push(mean);
    }
    Ok((model, history))
}

/// Fine-tuning on a small shifted data set with some layers frozen. The data
/// must be scaled with the model's original scalers.
pub fn transfer_train(model: &MlpModel, new_data: &Dataset, config: &TrainConfig) -> Result<(MlpModel, Vec<f64>), SurrogateError> {
    let mask = config
        .freeze
        .as_ref()
        .ok_or_else(|| SurrogateError::InvalidFreezeMask("transfer training needs a freeze mask".into()))?;
    mask.validate(&model.spec)?;
    train(model, new_data, config)
}

/// Fit scalers on raw training data, initialize and train.
pub fn fit_mlp(
    spec: &MlpSpec,
    raw: &Dataset,
    config: &TrainConfig,
    init_seed: u64,
) -> Result<(MlpModel, Vec<f64>), SurrogateError> {
    let scalers = crate::dataset::fit_scalers(raw)?;
    let scaled = crate::dataset::transform(raw, &scalers)?;
    let model = init_model(spec, init_seed)?.with_scalers(scalers);
    train(&model, &scaled, config)
}

#[derive(Serialize, Deserialize)]
struct ModelBody {
    spec: MlpSpec,
    layers: Vec<Layer>,
    scalers: Option<DatasetScalers>,
}

pub fn model_to_json(model: &MlpModel) -> String {
    let doc = serde_json::json!({
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": model.spec,
        "layers": model.layers,
        "scalers": model.scalers,
    });
    serde_json::to_string(&doc).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<MlpModel, SurrogateError> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| SurrogateError::Parse(e.to_string()))?;
    let format = doc.get("format").and_then(|f| f.as_str()).unwrap_or_default();
    if format != MODEL_FORMAT {
        return Err(SurrogateError::Parse(format!("unexpected format tag {format:?}")));
    }
    let version = doc.get("version").cloned().unwrap_or(serde_json::Value::Null);
    if version != serde_json::json!(MODEL_VERSION) {
        return Err(SurrogateError::VersionMismatch {
            found: version.to_string(),
            expected: MODEL_VERSION.to_string(),
        });
    }
    let body: ModelBody = serde_json::from_value(doc).map_err(|e| SurrogateError::Parse(e.to_string()))?;
    let model = MlpModel {
        spec: body.spec,
        layers: body.layers,
        scalers: body.scalers,
    };
    model.check_shape()?;
    Ok(model)
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<(), SurrogateError> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel, SurrogateError> {
    model_from_json(&std::fs::read_to_string(path)?)
}
