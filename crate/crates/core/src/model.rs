//! A small fully connected predictor `F(x_t, y, t)` with hand-written
//! backpropagation, the data-prediction and flow-matching losses, and an
//! Adam training loop.
//!
//! The network input is the concatenation `[x_t, y, time_features(t)]`. The
//! final layer starts at zero so an untrained model is the zero function.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{NoiseDomain, PairedBatch, PathFamily, PathSpec};
use crate::sampler::{LossKind, Predictor};

/// Lowest and highest frequency of the sinusoidal time embedding.
const TIME_FREQ_RANGE: (f64, f64) = (1.0, 1000.0);

/// Sinusoidal time embedding `[sin(2 pi f_i t), cos(2 pi f_i t)]_i` with
/// geometrically spaced frequencies from 1 to 1000.
pub fn time_features(t: f64, dim: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dim];
    write_time_features(t, &mut out)?;
    Ok(out)
}

fn write_time_features(t: f64, out: &mut [f64]) -> Result<()> {
    let dim = out.len();
    if !dim.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "time feature dimension must be even, got {dim}"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("time {t} outside [0, 1]")));
    }
    let m = dim / 2;
    let (lo, hi) = TIME_FREQ_RANGE;
    for i in 0..m {
        let f = if m == 1 {
            lo
        } else {
            lo * (hi / lo).powf(i as f64 / (m - 1) as f64)
        };
        let (sin, cos) = (std::f64::consts::TAU * f * t).sin_cos();
        out[2 * i] = sin;
        out[2 * i + 1] = cos;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// `x * sigmoid(x)`.
    #[default]
    Silu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Tanh => {
                let th = z.tanh();
                1.0 - th * th
            }
        }
    }
}

/// Architecture of a [`PredictorModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub data_dim: usize,
    pub hidden: Vec<usize>,
    pub time_feature_dim: usize,
    pub activation: Activation,
}

impl ModelShape {
    pub fn new(data_dim: usize) -> Self {
        ModelShape {
            data_dim,
            hidden: vec![128, 128, 128],
            time_feature_dim: 16,
            activation: Activation::Silu,
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.data_dim + self.time_feature_dim
    }

    fn validate(&self) -> Result<()> {
        if self.data_dim == 0 {
            return Err(Error::invalid("data dimension must be positive"));
        }
        if !self.time_feature_dim.is_multiple_of(2) {
            return Err(Error::invalid("time feature dimension must be even"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layers must have at least one unit"));
        }
        Ok(())
    }
}

/// Weights (`fan_in x fan_out`) and bias of one affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn param_mut(&mut self, i: usize) -> &mut f64 {
        let nw = self.w.len();
        if i < nw {
            let cols = self.w.ncols();
            &mut self.w[[i / cols, i % cols]]
        } else {
            &mut self.b[i - nw]
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.w.iter().chain(self.b.iter())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w.iter_mut().chain(self.b.iter_mut())
    }
}

/// Parameter gradients, laid out exactly like [`PredictorModel::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    /// Gradient entry for flat parameter index `i` (see [`PredictorModel::param`]).
    pub fn get(&self, mut i: usize) -> f64 {
        for layer in &self.layers {
            let n = layer.len();
            if i < n {
                return *layer.params().nth(i).unwrap();
            }
            i -= n;
        }
        panic!("gradient index out of range")
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.params().copied())
    }

    pub fn is_zero(&self) -> bool {
        self.iter().all(|g| g == 0.0)
    }
}

/// `F(x_t, y, t)` as a multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    shape: ModelShape,
    layers: Vec<Dense>,
    loss_kind: LossKind,
    path: PathSpec,
}

struct ForwardCache {
    /// Layer inputs; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
}

impl PredictorModel {
    /// Random hidden layers (variance `1 / fan_in`), zero output layer.
    pub fn new<R: Rng + ?Sized>(shape: ModelShape, loss_kind: LossKind, path: PathSpec, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        check_loss_path(loss_kind, &path)?;
        let mut layers = Vec::with_capacity(shape.hidden.len() + 1);
        let mut fan_in = shape.input_dim();
        for &width in &shape.hidden {
            let mut layer = Dense::zeros(fan_in, width);
            let std = (1.0 / fan_in as f64).sqrt();
            layer.w.mapv_inplace(|_| std * rng.sample::<f64, _>(StandardNormal));
            layers.push(layer);
            fan_in = width;
        }
        layers.push(Dense::zeros(fan_in, shape.data_dim));
        Ok(PredictorModel {
            shape,
            layers,
            loss_kind,
            path,
        })
    }

    /// Replaces the output layer with random weights of the given scale.
    pub fn randomize_head<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        let head = self.layers.last_mut().expect("model has an output layer");
        for p in head.params_mut() {
            *p = scale * rng.sample::<f64, _>(StandardNormal);
        }
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn path(&self) -> &PathSpec {
        &self.path
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::len).sum()
    }

    /// Flat parameter access: layers in order, each as row-major weights
    /// followed by the bias.
    pub fn param(&self, mut i: usize) -> f64 {
        for layer in &self.layers {
            let n = layer.len();
            if i < n {
                return *layer.params().nth(i).unwrap();
            }
            i -= n;
        }
        panic!("parameter index out of range")
    }

    pub fn set_param(&mut self, mut i: usize, value: f64) {
        for layer in &mut self.layers {
            let n = layer.len();
            if i < n {
                *layer.param_mut(i) = value;
                return;
            }
            i -= n;
        }
        panic!("parameter index out of range")
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.params().copied())
    }

    fn build_input(&self, x_t: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, t: &[f64]) -> Result<Array2<f64>> {
        let d = self.shape.data_dim;
        for m in [&x_t, &y] {
            if m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: m.ncols(),
                });
            }
        }
        if x_t.nrows() != y.nrows() || (t.len() != 1 && t.len() != x_t.nrows()) {
            return Err(Error::invalid("batch rows of x_t, y and t disagree"));
        }
        if x_t.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite model input"));
        }
        let rows = x_t.nrows();
        let tf = self.shape.time_feature_dim;
        let mut input = Array2::zeros((rows, self.shape.input_dim()));
        input.slice_mut(s![.., ..d]).assign(&x_t);
        input.slice_mut(s![.., d..2 * d]).assign(&y);
        let mut feats = vec![0.0; tf];
        for (r, mut row) in input.axis_iter_mut(Axis(0)).enumerate() {
            let tr = if t.len() == 1 { t[0] } else { t[r] };
            if r == 0 || t.len() != 1 {
                write_time_features(tr, &mut feats)?;
            }
            for (dst, &f) in row.slice_mut(s![2 * d..]).iter_mut().zip(&feats) {
                *dst = f;
            }
        }
        Ok(input)
    }

    fn forward_cached(&self, input: Array2<f64>) -> (Array2<f64>, ForwardCache) {
        let act = self.shape.activation;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len() - 1),
        };
        let mut h = input;
        let (head, hidden) = self.layers.split_last().unwrap();
        for layer in hidden {
            let z = h.dot(&layer.w) + &layer.b;
            let next = z.mapv(|v| act.apply(v));
            cache.inputs.push(h);
            cache.pre.push(z);
            h = next;
        }
        let out = h.dot(&head.w) + &head.b;
        cache.inputs.push(h);
        (out, cache)
    }

    fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>) -> Gradients {
        let act = self.shape.activation;
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut g = d_out;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if l + 1 < self.layers.len() {
                ndarray::Zip::from(&mut g)
                    .and(&cache.pre[l])
                    .for_each(|g, &z| *g *= act.derivative(z));
            }
            let h = &cache.inputs[l];
            let gw = h.t().dot(&g);
            let gb = g.sum_axis(Axis(0));
            if l > 0 {
                g = g.dot(&layer.w.t());
            }
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    /// Evaluates the network on a batch with per-row times.
    pub fn forward_batch(&self, x_t: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, t: &[f64]) -> Result<Array2<f64>> {
        let input = self.build_input(x_t, y, t)?;
        Ok(self.forward_cached(input).0)
    }

    /// Single-item forward pass.
    pub fn forward(&self, x_t: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
        let xv = ArrayView2::from_shape((1, x_t.len()), x_t).expect("row view");
        let yv = ArrayView2::from_shape((1, y.len()), y).expect("row view");
        Ok(self.forward_batch(xv, yv, &[t])?.into_raw_vec_and_offset().0)
    }

    /// Mean over rows of `||F - target||^2`, with exact parameter gradients.
    pub fn loss_on(&self, inputs: &TrainingInputs) -> Result<(f64, Gradients)> {
        let input = self.build_input(inputs.x_t.view(), inputs.y.view(), &inputs.t)?;
        let (out, cache) = self.forward_cached(input);
        let rows = out.nrows() as f64;
        let resid = out - &inputs.target;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / rows;
        let d_out = resid * (2.0 / rows);
        Ok((loss, self.backward(&cache, d_out)))
    }

    /// Loss value only.
    pub fn loss_value(&self, inputs: &TrainingInputs) -> Result<f64> {
        let out = self.forward_batch(inputs.x_t.view(), inputs.y.view(), &inputs.t)?;
        Ok(mean_sq_rows(&out, &inputs.target))
    }

    fn apply_update(&mut self, grads: &Gradients, adam: &mut Adam) {
        adam.step += 1;
        let t = adam.step as i32;
        let bc1 = 1.0 - adam.beta1.powi(t);
        let bc2 = 1.0 - adam.beta2.powi(t);
        let lr = adam.lr;
        for (((p_layer, g_layer), m_layer), v_layer) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut adam.m)
            .zip(&mut adam.v)
        {
            let params = p_layer.params_mut();
            let grads = g_layer.params();
            let ms = m_layer.params_mut();
            let vs = v_layer.params_mut();
            for (((p, &g), m), v) in params.zip(grads).zip(ms).zip(vs) {
                *m = adam.beta1 * *m + (1.0 - adam.beta1) * g;
                *v = adam.beta2 * *v + (1.0 - adam.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + adam.eps);
            }
        }
    }
}

impl Predictor for PredictorModel {
    fn loss_kind(&self) -> LossKind {
        self.loss_kind
    }

    fn dim(&self) -> usize {
        self.shape.data_dim
    }

    fn predict(&self, x_t: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, t: f64) -> Result<Array2<f64>> {
        self.forward_batch(x_t, y, &[t])
    }
}

fn check_loss_path(loss_kind: LossKind, path: &PathSpec) -> Result<()> {
    if loss_kind == LossKind::Fm && path.family() != PathFamily::Icfm {
        return Err(Error::invalid(
            "flow-matching targets are only defined for the ICFM path",
        ));
    }
    Ok(())
}

pub(crate) fn mean_sq_rows(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows().max(1) as f64;
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

/// Network inputs and regression targets for one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInputs {
    pub x_t: Array2<f64>,
    pub y: Array2<f64>,
    pub t: Vec<f64>,
    pub target: Array2<f64>,
}

/// Draws `t ~ U[t_min, 1]` and `x_t ~ p_t(. | x0, y)` for every pair and sets
/// the target to `x0` (DP) or `x0 - y` (FM).
pub fn draw_training_inputs<R: Rng + ?Sized>(
    batch: &PairedBatch,
    path: &PathSpec,
    loss_kind: LossKind,
    t_min: f64,
    domain: NoiseDomain,
    rng: &mut R,
) -> Result<TrainingInputs> {
    check_loss_path(loss_kind, path)?;
    if batch.is_empty() {
        return Err(Error::invalid("loss needs a non-empty batch"));
    }
    if !(0.0..1.0).contains(&t_min) {
        return Err(Error::invalid(format!("t_min must lie in [0, 1), got {t_min}")));
    }
    let (n, d) = (batch.len(), batch.dim());
    let mut x_t = Array2::zeros((n, d));
    let mut y = Array2::zeros((n, d));
    let mut target = Array2::zeros((n, d));
    let mut ts = Vec::with_capacity(n);
    for (i, (x0_i, y_i)) in batch.iter().enumerate() {
        let t = t_min + (1.0 - t_min) * rng.random::<f64>();
        let xt = path.sample_perturbation_in(domain, x0_i, y_i, t, rng)?;
        for j in 0..d {
            x_t[[i, j]] = xt[j];
            y[[i, j]] = y_i[j];
            target[[i, j]] = match loss_kind {
                LossKind::Dp => x0_i[j],
                LossKind::Fm => x0_i[j] - y_i[j],
            };
        }
        ts.push(t);
    }
    Ok(TrainingInputs { x_t, y, t: ts, target })
}

/// One stochastic evaluation of the model's training loss on `batch`.
pub fn loss<R: Rng + ?Sized>(
    model: &PredictorModel,
    batch: &PairedBatch,
    path: &PathSpec,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    let inputs = draw_training_inputs(batch, path, model.loss_kind, 0.0, NoiseDomain::Real, rng)?;
    model.loss_on(&inputs)
}

/// Source of training pairs.
pub trait PairSource {
    fn dim(&self) -> usize;

    fn sample_pairs(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<PairedBatch>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub hidden: Vec<usize>,
    pub time_feature_dim: usize,
    pub activation: Activation,
    pub loss_kind: LossKind,
    /// Lower end of the training time distribution.
    pub t_min: f64,
    pub noise_domain: NoiseDomain,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 64,
            steps: 20_000,
            hidden: vec![128, 128, 128],
            time_feature_dim: 16,
            activation: Activation::Silu,
            loss_kind: LossKind::Dp,
            t_min: 0.0,
            noise_domain: NoiseDomain::Real,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.t_min) {
            return Err(Error::Config("t_min must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn shape(&self, data_dim: usize) -> ModelShape {
        ModelShape {
            data_dim,
            hidden: self.hidden.clone(),
            time_feature_dim: self.time_feature_dim,
            activation: self.activation,
        }
    }
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    fn new(cfg: &TrainConfig, model: &PredictorModel) -> Self {
        let zeros = || {
            model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.w.nrows(), l.w.ncols()))
                .collect()
        };
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// A trained model and its per-step loss trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PredictorModel,
    pub loss_trace: Vec<f64>,
}

/// Trains a fresh model; fully determined by `(cfg, path, source, seed)`.
pub fn train<S: PairSource + ?Sized>(
    cfg: &TrainConfig,
    path: &PathSpec,
    source: &S,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = PredictorModel::new(cfg.shape(source.dim()), cfg.loss_kind, *path, &mut rng)?;
    let mut adam = Adam::new(cfg, &model);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = source.sample_pairs(cfg.batch_size, &mut rng)?;
        let inputs = draw_training_inputs(&batch, path, cfg.loss_kind, cfg.t_min, cfg.noise_domain, &mut rng)?;
        let (loss, grads) = model.loss_on(&inputs)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step, loss });
        }
        model.apply_update(&grads, &mut adam);
        trace.push(loss);
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}

/// Result of comparing analytic gradients with central finite differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Relative-error denominator floor; keeps parameters with vanishing
/// gradients from dominating the report.
pub const GRADCHECK_FLOOR: f64 = 1e-7;

/// Compares `loss_on` gradients against central differences with step `h` on
/// `n_params` parameters drawn uniformly without replacement.
pub fn gradient_check<R: Rng + ?Sized>(
    model: &PredictorModel,
    inputs: &TrainingInputs,
    h: f64,
    n_params: usize,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_on(inputs)?;
    let total = model.param_count();
    let picks = rand::seq::index::sample(rng, total, n_params.min(total));
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for i in picks.iter() {
        let orig = model.param(i);
        probe.set_param(i, orig + h);
        let up = probe.loss_value(inputs)?;
        probe.set_param(i, orig - h);
        let down = probe.loss_value(inputs)?;
        probe.set_param(i, orig);
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get(i);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

pub const CHECKPOINT_FORMAT: &str = "flowse-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    loss_kind: LossKind,
    path: PathSpec,
    shape: ModelShape,
    layers: Vec<CheckpointLayer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointLayer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl PredictorModel {
    /// Serialises the model as a JSON checkpoint.
    pub fn to_checkpoint_string(&self) -> String {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            loss_kind: self.loss_kind,
            path: self.path,
            shape: self.shape.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    rows: l.w.nrows(),
                    cols: l.w.ncols(),
                    weights: l.w.iter().copied().collect(),
                    bias: l.b.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&ckpt).expect("checkpoint serialisation") + "\n"
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid checkpoint: {e}")))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        ckpt.shape.validate()?;
        check_loss_path(ckpt.loss_kind, &ckpt.path)?;
        let mut expected_in = ckpt.shape.input_dim();
        let widths = ckpt.shape.hidden.iter().chain(std::iter::once(&ckpt.shape.data_dim));
        if ckpt.layers.len() != ckpt.shape.hidden.len() + 1 {
            return Err(Error::Config("checkpoint layer count does not match its shape".into()));
        }
        let mut layers = Vec::with_capacity(ckpt.layers.len());
        for (layer, &width) in ckpt.layers.into_iter().zip(widths) {
            if layer.rows != expected_in || layer.cols != width || layer.bias.len() != width {
                return Err(Error::Config("checkpoint layer shapes do not chain".into()));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::Config("checkpoint contains non-finite parameters".into()));
            }
            let w = Array2::from_shape_vec((layer.rows, layer.cols), layer.weights)
                .map_err(|e| Error::Config(format!("checkpoint weights: {e}")))?;
            layers.push(Dense {
                w,
                b: Array1::from(layer.bias),
            });
            expected_in = width;
        }
        Ok(PredictorModel {
            shape: ckpt.shape,
            layers,
            loss_kind: ckpt.loss_kind,
            path: ckpt.path,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text)
    }
}
