//! Feed-forward regression network: sigmoid hidden layers, an
//! `output_scale·σ` head, mean-squared-error cost and full-batch Adam.
//!
//! Batches are row-major: one observation per row. Layer weights are stored
//! `out × in`, so a layer computes `σ(X·Wᵀ + b)`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activation::{sigmoid, sigmoid_in_place};
use crate::dataset::Dataset;
use crate::rng;

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_OUTPUT_SCALE: f64 = 110.0;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("input has {found} features, network expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("no observations")]
    Empty,
    #[error("cost became non-finite at epoch {epoch} (J = {cost})")]
    NonFinite { epoch: usize, cost: f64 },
    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("inconsistent model file: {0}")]
    Shape(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub neurons_per_layer: usize,
    #[serde(default = "default_output_scale")]
    pub output_scale: f64,
}

fn default_output_scale() -> f64 {
    DEFAULT_OUTPUT_SCALE
}

impl NetworkSpec {
    pub fn new(
        input_dim: usize,
        hidden_layers: usize,
        neurons_per_layer: usize,
    ) -> Result<Self, NetworkError> {
        let spec = Self {
            input_dim,
            hidden_layers,
            neurons_per_layer,
            output_scale: DEFAULT_OUTPUT_SCALE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.input_dim == 0 || self.hidden_layers == 0 || self.neurons_per_layer == 0 {
            return Err(NetworkError::Spec(format!(
                "input_dim, hidden_layers and neurons_per_layer must be >= 1 (got {}, {}, {})",
                self.input_dim, self.hidden_layers, self.neurons_per_layer
            )));
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(NetworkError::Spec(format!(
                "output_scale must be > 0, got {}",
                self.output_scale
            )));
        }
        Ok(())
    }

    /// `(out, in)` of every layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let n = self.neurons_per_layer;
        let mut shapes = vec![(n, self.input_dim)];
        shapes.extend(std::iter::repeat_n((n, n), self.hidden_layers - 1));
        shapes.push((1, n));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl DenseLayer {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weights: Array2::zeros((out, inp)),
            biases: Array1::zeros(out),
        }
    }
}

/// Network parameters. Also used for gradients and Adam moments, which share
/// the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    spec: NetworkSpec,
    layers: Vec<DenseLayer>,
}

impl NetworkModel {
    pub fn zeros(spec: NetworkSpec) -> Result<Self, NetworkError> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| DenseLayer::zeros(o, i))
            .collect();
        Ok(Self { spec, layers })
    }

    /// Weights uniform on `±1/√fan_in`, zero biases, drawn from the seed's
    /// init stream in layer order, row-major.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self, NetworkError> {
        let mut model = Self::zeros(spec)?;
        let mut rng = rng::stream(seed, rng::INIT);
        for layer in &mut model.layers {
            let bound = 1.0 / (layer.weights.ncols() as f64).sqrt();
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-bound..=bound));
        }
        Ok(model)
    }

    /// Builds a model from explicit layers, checking their shapes.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<DenseLayer>) -> Result<Self, NetworkError> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(NetworkError::Shape(format!(
                "{} layers, spec requires {}",
                layers.len(),
                shapes.len()
            )));
        }
        for (k, (layer, &(o, i))) in layers.iter().zip(&shapes).enumerate() {
            if layer.weights.dim() != (o, i) || layer.biases.len() != o {
                return Err(NetworkError::Shape(format!(
                    "layer {k}: weights {:?} and {} biases, expected ({o}, {i}) and {o}",
                    layer.weights.dim(),
                    layer.biases.len()
                )));
            }
            if layer
                .weights
                .iter()
                .chain(&layer.biases)
                .any(|x| !x.is_finite())
            {
                return Err(NetworkError::Shape(format!(
                    "layer {k}: non-finite parameter"
                )));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Every parameter, layer by layer, weights (row-major) before biases.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    /// Predicted concentration for one ratio vector.
    pub fn forward(&self, ratios: &[f64]) -> Result<f64, NetworkError> {
        if ratios.len() != self.spec.input_dim {
            return Err(NetworkError::Dimension {
                expected: self.spec.input_dim,
                found: ratios.len(),
            });
        }
        let mut x = ratios.to_vec();
        let (out, hidden) = self.layers.split_last().expect("at least two layers");
        for layer in hidden {
            x = layer
                .weights
                .rows()
                .into_iter()
                .zip(&layer.biases)
                .map(|(w, b)| sigmoid(w.iter().zip(&x).fold(0.0, |s, (w, x)| s + w * x) + b))
                .collect();
        }
        let w = out.weights.row(0);
        let z = w.iter().zip(&x).fold(0.0, |s, (w, x)| s + w * x) + out.biases[0];
        Ok(self.spec.output_scale * sigmoid(z))
    }

    /// Predictions for a row-major batch.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, NetworkError> {
        if x.ncols() != self.spec.input_dim {
            return Err(NetworkError::Dimension {
                expected: self.spec.input_dim,
                found: x.ncols(),
            });
        }
        let mut ws = Workspace::new(&self.spec, x.nrows());
        ws.forward(self, x);
        Ok(ws.predictions())
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Array1<f64>, NetworkError> {
        self.predict_batch(design_matrix(data).view())
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        ModelFile::new(self, None, None).save(path)
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        Ok(ModelFile::load(path)?.into_parts()?.0)
    }
}

/// Observations as a row-major `m × N` matrix.
pub fn design_matrix(data: &Dataset) -> Array2<f64> {
    let n = data.input_dim();
    let flat: Vec<f64> = data
        .observations()
        .iter()
        .flat_map(|o| o.ratios.iter().copied())
        .collect();
    Array2::from_shape_vec((data.len(), n), flat).expect("observations conform to the grid")
}

pub fn label_vector(data: &Dataset) -> Array1<f64> {
    data.labels().into()
}

/// Preallocated activations and back-propagated errors for one batch size.
struct Workspace {
    // acts[k] is the output of layer k; the last holds the head's logits
    acts: Vec<Array2<f64>>,
    delta: Array2<f64>,
    delta_next: Array2<f64>,
    out_delta: Array2<f64>,
    scale: f64,
}

impl Workspace {
    fn new(spec: &NetworkSpec, m: usize) -> Self {
        let n = spec.neurons_per_layer;
        let mut acts = vec![Array2::zeros((m, n)); spec.hidden_layers];
        acts.push(Array2::zeros((m, 1)));
        Self {
            acts,
            delta: Array2::zeros((m, n)),
            delta_next: Array2::zeros((m, n)),
            out_delta: Array2::zeros((m, 1)),
            scale: spec.output_scale,
        }
    }

    fn forward(&mut self, model: &NetworkModel, x: ArrayView2<f64>) {
        let last = model.layers.len() - 1;
        for (k, layer) in model.layers.iter().enumerate() {
            let (done, rest) = self.acts.split_at_mut(k);
            let out = &mut rest[0];
            let input = if k == 0 { x } else { done[k - 1].view() };
            general_mat_mul(1.0, &input, &layer.weights.t(), 0.0, out);
            for mut row in out.rows_mut() {
                row.zip_mut_with(&layer.biases, |z, &b| *z += b);
            }
            if k < last {
                sigmoid_in_place(out.as_slice_mut().expect("standard layout"));
            }
        }
        let scale = self.scale;
        self.acts[last].mapv_inplace(|z| scale * sigmoid(z));
    }

    fn predictions(&self) -> Array1<f64> {
        self.acts.last().expect("output layer").column(0).to_owned()
    }

    fn cost(&self, y: &Array1<f64>) -> f64 {
        let pred = self.acts.last().expect("output layer").column(0);
        let sum = pred
            .iter()
            .zip(y)
            .fold(0.0, |s, (p, y)| s + (p - y) * (p - y));
        sum / y.len() as f64
    }

    /// Gradient of the MSE cost into `grads`; `forward` must have run on `x`.
    fn backward(
        &mut self,
        model: &NetworkModel,
        x: ArrayView2<f64>,
        y: &Array1<f64>,
        grads: &mut NetworkModel,
    ) {
        let m = y.len() as f64;
        let last = model.layers.len() - 1;
        let scale = self.scale;
        // dJ/dz at the head: (2/m)(ŷ − y)·ŷ(1 − ŷ/S)
        let pred = self.acts[last].column(0);
        for ((d, &p), &t) in self.out_delta.column_mut(0).iter_mut().zip(pred).zip(y) {
            *d = 2.0 / m * (p - t) * p * (1.0 - p / scale);
        }

        for k in (0..=last).rev() {
            let delta = if k == last {
                &self.out_delta
            } else {
                &self.delta
            };
            let input = if k == 0 { x } else { self.acts[k - 1].view() };
            let g = &mut grads.layers[k];
            general_mat_mul(1.0, &delta.t(), &input, 0.0, &mut g.weights);
            g.biases.assign(&delta.sum_axis(Axis(0)));
            if k == 0 {
                break;
            }
            // propagate through W_k, then through σ' of layer k−1
            general_mat_mul(
                1.0,
                delta,
                &model.layers[k].weights,
                0.0,
                &mut self.delta_next,
            );
            let h = &self.acts[k - 1];
            self.delta_next.zip_mut_with(h, |d, &a| *d *= a * (1.0 - a));
            std::mem::swap(&mut self.delta, &mut self.delta_next);
        }
    }
}

fn check_data(model: &NetworkModel, data: &Dataset) -> Result<(), NetworkError> {
    if data.is_empty() {
        return Err(NetworkError::Empty);
    }
    if data.input_dim() != model.spec.input_dim {
        return Err(NetworkError::Dimension {
            expected: model.spec.input_dim,
            found: data.input_dim(),
        });
    }
    Ok(())
}

/// `J = (1/m)·Σ (ŷ − y)²` over the dataset.
pub fn cost_mse(model: &NetworkModel, data: &Dataset) -> Result<f64, NetworkError> {
    check_data(model, data)?;
    let x = design_matrix(data);
    let mut ws = Workspace::new(&model.spec, data.len());
    ws.forward(model, x.view());
    Ok(ws.cost(&label_vector(data)))
}

/// Cost and its exact gradient with respect to every parameter.
pub fn backward(model: &NetworkModel, data: &Dataset) -> Result<(f64, NetworkModel), NetworkError> {
    check_data(model, data)?;
    let x = design_matrix(data);
    let y = label_vector(data);
    Ok(backward_batch(model, x.view(), &y))
}

pub fn backward_batch(
    model: &NetworkModel,
    x: ArrayView2<f64>,
    y: &Array1<f64>,
) -> (f64, NetworkModel) {
    let mut ws = Workspace::new(&model.spec, y.len());
    let mut grads = NetworkModel::zeros(model.spec).expect("valid spec");
    ws.forward(model, x);
    let cost = ws.cost(y);
    ws.backward(model, x, y, &mut grads);
    (cost, grads)
}

/// Central-difference gradient of the cost, one parameter at a time, in
/// [`NetworkModel::flat`] order.
pub fn numerical_gradient(
    model: &NetworkModel,
    x: ArrayView2<f64>,
    y: &Array1<f64>,
    step: f64,
) -> Vec<f64> {
    let mut ws = Workspace::new(&model.spec, y.len());
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(model.spec.parameter_count());
    let mut cost_at = |probe: &NetworkModel| {
        ws.forward(probe, x);
        ws.cost(y)
    };
    for k in 0..probe.layers.len() {
        let n_w = probe.layers[k].weights.len();
        let n_b = probe.layers[k].biases.len();
        for i in 0..n_w + n_b {
            let orig = get_param(&probe, k, i);
            set_param(&mut probe, k, i, orig + step);
            let plus = cost_at(&probe);
            set_param(&mut probe, k, i, orig - step);
            let minus = cost_at(&probe);
            set_param(&mut probe, k, i, orig);
            out.push((plus - minus) / (2.0 * step));
        }
    }
    out
}

fn get_param(model: &NetworkModel, k: usize, i: usize) -> f64 {
    let l = &model.layers[k];
    let n_w = l.weights.len();
    if i < n_w {
        l.weights[[i / l.weights.ncols(), i % l.weights.ncols()]]
    } else {
        l.biases[i - n_w]
    }
}

fn set_param(model: &mut NetworkModel, k: usize, i: usize, value: f64) {
    let l = &mut model.layers[k];
    let n_w = l.weights.len();
    if i < n_w {
        let cols = l.weights.ncols();
        l.weights[[i / cols, i % cols]] = value;
    } else {
        l.biases[i - n_w] = value;
    }
}

/// Norm-wise relative difference `‖a − n‖ / (‖a‖ + ‖n‖)` between an analytic
/// and a numerical gradient; 0 when both vanish.
pub fn gradient_relative_error(analytic: &[f64], numerical: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numerical).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numerical.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Analytic gradient checked against central differences of the given step.
pub fn gradient_check(model: &NetworkModel, x: ArrayView2<f64>, y: &Array1<f64>, step: f64) -> f64 {
    let (_, g) = backward_batch(model, x, y);
    gradient_relative_error(&g.flat(), &numerical_gradient(model, x, y, step))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 100_000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            log_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |what: &str| Err(NetworkError::Config(what.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if self.log_every == 0 {
            return bad("log_every must be >= 1");
        }
        Ok(())
    }
}

/// Adam moment estimates and the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: NetworkModel,
    pub v: NetworkModel,
}

impl AdamState {
    pub fn new(spec: NetworkSpec) -> Result<Self, NetworkError> {
        Ok(Self {
            t: 0,
            m: NetworkModel::zeros(spec)?,
            v: NetworkModel::zeros(spec)?,
        })
    }
}

/// One bias-corrected Adam update; advances `state.t`.
pub fn adam_step(
    model: &mut NetworkModel,
    grads: &NetworkModel,
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.learning_rate, cfg.epsilon);
    let params = model.params_mut();
    let g = grads
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.biases));
    let m = state.m.params_mut();
    let v = state.v.params_mut();
    for (((p, &g), m), v) in params.zip(g).zip(m).zip(v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    /// `(epoch, J)` where `J` is the cost after `epoch` updates.
    pub cost_trace: Vec<(usize, f64)>,
    pub duration_s: f64,
    pub config: TrainConfig,
}

/// Initializes from `cfg.seed` and trains for `cfg.epochs` full-batch steps.
pub fn train(
    spec: NetworkSpec,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(NetworkModel, TrainReport), NetworkError> {
    let mut model = NetworkModel::init(spec, cfg.seed)?;
    let mut state = AdamState::new(spec)?;
    let report = train_from(&mut model, &mut state, data, cfg)?;
    Ok((model, report))
}

/// Runs `cfg.epochs` more steps on an existing model and optimizer state.
/// Epoch numbers in the trace count from the state's current step.
pub fn train_from(
    model: &mut NetworkModel,
    state: &mut AdamState,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainReport, NetworkError> {
    cfg.validate()?;
    check_data(model, data)?;
    if state.m.spec != model.spec || state.v.spec != model.spec {
        return Err(NetworkError::Shape(
            "optimizer state does not match the model".into(),
        ));
    }
    let start = Instant::now();
    let x = design_matrix(data);
    let y = label_vector(data);
    let mut ws = Workspace::new(&model.spec, data.len());
    let mut grads = NetworkModel::zeros(model.spec)?;
    let first = usize::try_from(state.t).unwrap_or(usize::MAX);
    let mut trace = Vec::new();
    let mut initial_cost = f64::NAN;

    for e in 0..=cfg.epochs {
        let epoch = first + e;
        ws.forward(model, x.view());
        let cost = ws.cost(&y);
        if !cost.is_finite() {
            return Err(NetworkError::NonFinite { epoch, cost });
        }
        if e == 0 {
            initial_cost = cost;
        }
        if e % cfg.log_every == 0 || e == cfg.epochs {
            trace.push((epoch, cost));
        }
        if e == cfg.epochs {
            return Ok(TrainReport {
                initial_cost,
                final_cost: cost,
                cost_trace: trace,
                duration_s: start.elapsed().as_secs_f64(),
                config: *cfg,
            });
        }
        ws.backward(model, x.view(), &y, &mut grads);
        adam_step(model, &grads, state, cfg);
    }
    unreachable!("loop returns on the last epoch")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamStateFile {
    pub t: u64,
    pub m_weights: Vec<Vec<Vec<f64>>>,
    pub m_biases: Vec<Vec<f64>>,
    pub v_weights: Vec<Vec<Vec<f64>>>,
    pub v_biases: Vec<Vec<f64>>,
}

/// Model document: spec, row-major weights, biases and optional optimizer
/// state and training-config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    pub spec: NetworkSpec,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_state: Option<AdamStateFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
}

fn nested_weights(model: &NetworkModel) -> Vec<Vec<Vec<f64>>> {
    model
        .layers
        .iter()
        .map(|l| l.weights.rows().into_iter().map(|r| r.to_vec()).collect())
        .collect()
}

fn nested_biases(model: &NetworkModel) -> Vec<Vec<f64>> {
    model.layers.iter().map(|l| l.biases.to_vec()).collect()
}

fn model_from_nested(
    spec: NetworkSpec,
    weights: &[Vec<Vec<f64>>],
    biases: &[Vec<f64>],
) -> Result<NetworkModel, NetworkError> {
    if weights.len() != biases.len() {
        return Err(NetworkError::Shape(format!(
            "{} weight matrices but {} bias vectors",
            weights.len(),
            biases.len()
        )));
    }
    let layers = weights
        .iter()
        .zip(biases)
        .enumerate()
        .map(|(k, (w, b))| {
            let cols = w.first().map_or(0, Vec::len);
            if w.iter().any(|row| row.len() != cols) {
                return Err(NetworkError::Shape(format!(
                    "layer {k}: ragged weight rows"
                )));
            }
            let flat: Vec<f64> = w.iter().flatten().copied().collect();
            Ok(DenseLayer {
                weights: Array2::from_shape_vec((w.len(), cols), flat)
                    .map_err(|e| NetworkError::Shape(format!("layer {k}: {e}")))?,
                biases: Array1::from(b.clone()),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    NetworkModel::from_layers(spec, layers)
}

impl ModelFile {
    pub fn new(
        model: &NetworkModel,
        state: Option<&AdamState>,
        config: Option<&TrainConfig>,
    ) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            spec: model.spec,
            weights: nested_weights(model),
            biases: nested_biases(model),
            adam_state: state.map(|s| AdamStateFile {
                t: s.t,
                m_weights: nested_weights(&s.m),
                m_biases: nested_biases(&s.m),
                v_weights: nested_weights(&s.v),
                v_biases: nested_biases(&s.v),
            }),
            train_config: config.copied(),
        }
    }

    pub fn into_parts(
        self,
    ) -> Result<(NetworkModel, Option<AdamState>, Option<TrainConfig>), NetworkError> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(NetworkError::Version {
                found: self.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let model = model_from_nested(self.spec, &self.weights, &self.biases)?;
        let state = self
            .adam_state
            .map(|s| -> Result<AdamState, NetworkError> {
                Ok(AdamState {
                    t: s.t,
                    m: model_from_nested(self.spec, &s.m_weights, &s.m_biases)?,
                    v: model_from_nested(self.spec, &s.v_weights, &s.v_biases)?,
                })
            })
            .transpose()?;
        Ok((model, state, self.train_config))
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        let mut text = serde_json::to_string_pretty(self).expect("model serializes");
        text.push('\n');
        fs::write(path, text).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        let shown = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| NetworkError::Io {
            path: shown.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| NetworkError::Json {
            path: shown,
            source,
        })
    }
}
