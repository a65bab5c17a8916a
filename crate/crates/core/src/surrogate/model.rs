use rand::seq::SliceRandom;
use rand::Rng;

use super::{split_outputs, AncillaryData, DataBuffer, LabeledSample, Scaler};
use crate::rng::{self, tag};
use crate::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 3] = [128, 32, 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Mlp,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Activation {
    Elu,
    Identity,
}

/// ELU with alpha = 1.
#[inline]
pub fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

#[inline]
fn elu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub(super) struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
            activation,
        }
    }

    fn affine(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        z.extend(self.weights.chunks_exact(self.inputs).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi)
        }));
    }

    fn activate(&self, z: &[f64]) -> Vec<f64> {
        match self.activation {
            Activation::Elu => z.iter().map(|&v| elu(v)).collect(),
            Activation::Identity => z.to_vec(),
        }
    }
}

/// Parameter-shaped collection: one `(weights, biases)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(layers: &[Dense]) -> Self {
        Self {
            layers: layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    fn shape_matches(&self, layers: &[Dense]) -> bool {
        self.layers.len() == layers.len()
            && self
                .layers
                .iter()
                .zip(layers)
                .all(|((w, b), l)| w.len() == l.weights.len() && b.len() == l.biases.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid Adam hyperparameters {self:?}")))
        }
    }

    /// One bias-corrected Adam update of `params` in place. `step` is the
    /// 1-based step number after incrementing.
    pub fn update(&self, params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], step: u64) {
        let bc1 = 1.0 - self.beta1.powi(step as i32);
        let bc2 = 1.0 - self.beta2.powi(step as i32);
        for (((p, &g), mi), vi) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
            *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 20,
            shuffle_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AdamState {
    m: Gradients,
    v: Gradients,
    step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub f_hat: f64,
    pub m_hat: [f64; 2],
    pub alpha_hat: Option<AncillaryData>,
}

/// A feed-forward surrogate: ELU hidden layers and an identity output layer.
/// A linear model is the zero-hidden-layer case.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    kind: ModelKind,
    pub(super) layers: Vec<Dense>,
    adam: AdamState,
    pub(super) scaler: Scaler,
}

/// Fan-in uniform initialization, zero biases, deterministic from `seed`.
pub fn initialize_model(kind: ModelKind, input_dim: usize, output_dim: usize, seed: u64) -> Result<SurrogateModel> {
    let hidden: &[usize] = match kind {
        ModelKind::Mlp => &DEFAULT_HIDDEN,
        ModelKind::Linear => &[],
    };
    SurrogateModel::with_hidden(kind, input_dim, hidden, output_dim, seed)
}

impl SurrogateModel {
    pub fn with_hidden(kind: ModelKind, input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.contains(&0) {
            return Err(Error::invalid("layer sizes must be >= 1"));
        }
        if kind == ModelKind::Linear && !hidden.is_empty() {
            return Err(Error::invalid("a linear model has no hidden layers"));
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        let mut rng = rng::derived_stream(seed, &[tag::INIT]);
        let mut layers = Self::zero_layers(&sizes);
        for layer in &mut layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            layer.weights.iter_mut().for_each(|w| *w = rng.gen_range(-bound..=bound));
        }
        Ok(Self::from_layers(kind, layers, Scaler::identity(output_dim)))
    }

    pub(super) fn zero_layers(sizes: &[usize]) -> Vec<Dense> {
        let n = sizes.len() - 1;
        (0..n)
            .map(|k| {
                let act = if k + 1 == n { Activation::Identity } else { Activation::Elu };
                Dense::zeros(sizes[k], sizes[k + 1], act)
            })
            .collect()
    }

    pub(super) fn from_layers(kind: ModelKind, layers: Vec<Dense>, scaler: Scaler) -> Self {
        let zeros = Gradients::zeros_like(&layers);
        Self {
            kind,
            adam: AdamState {
                m: zeros.clone(),
                v: zeros,
                step: 0,
            },
            layers,
            scaler,
        }
    }

    /// Builds a model from explicit `(weights, biases)` per layer.
    pub fn from_parameters(kind: ModelKind, sizes: &[usize], params: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if sizes.len() < 2 || params.len() != sizes.len() - 1 {
            return Err(Error::invalid("parameter list does not match layer sizes"));
        }
        let mut layers = Self::zero_layers(sizes);
        for (layer, (w, b)) in layers.iter_mut().zip(params) {
            if w.len() != layer.weights.len() || b.len() != layer.biases.len() {
                return Err(Error::invalid("parameter shape mismatch"));
            }
            layer.weights = w;
            layer.biases = b;
        }
        let out = *sizes.last().unwrap();
        Ok(Self::from_layers(kind, layers, Scaler::identity(out)))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn set_scaler(&mut self, scaler: Scaler) -> Result<()> {
        if scaler.dim() != self.output_dim() {
            return Err(Error::invalid("scaler dimension does not match output dimension"));
        }
        self.scaler = scaler;
        Ok(())
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam.step
    }

    pub fn parameters(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.layers.iter().map(|l| (l.weights.clone(), l.biases.clone())).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if idx < layer.weights.len() {
                return &mut layer.weights[idx];
            }
            idx -= layer.weights.len();
            if idx < layer.biases.len() {
                return &mut layer.biases[idx];
            }
            idx -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} entries, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Raw (standardized-space) outputs.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let mut z = Vec::new();
        for layer in &self.layers {
            layer.affine(&a, &mut z);
            a = layer.activate(&z);
        }
        Ok(a)
    }

    /// Accumulates `scale * d(sum sq err)/d(params)` for one sample into
    /// `grads` and returns the sample's summed squared error.
    fn backprop_into(&self, x: &[f64], target: &[f64], scale: f64, grads: &mut Gradients) -> f64 {
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let mut z = Vec::new();
            layer.affine(acts.last().unwrap(), &mut z);
            acts.push(layer.activate(&z));
            pre.push(z);
        }
        let out = acts.last().unwrap();
        let mut sse = 0.0;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(target)
            .map(|(y, t)| {
                let e = y - t;
                sse += e * e;
                2.0 * e * scale
            })
            .collect();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if layer.activation == Activation::Elu {
                for (d, &z) in delta.iter_mut().zip(&pre[k]) {
                    *d *= elu_grad(z);
                }
            }
            let input = &acts[k];
            let (gw, gb) = &mut grads.layers[k];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, &xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if k > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
        sse
    }

    /// MSE over batch and outputs against already-standardized targets.
    pub fn loss_and_gradients_raw(&self, xs: &[&[f64]], targets: &[Vec<f64>]) -> Result<(f64, Gradients)> {
        if xs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if xs.len() != targets.len() {
            return Err(Error::invalid("inputs and targets differ in length"));
        }
        let out_dim = self.output_dim();
        let denom = (xs.len() * out_dim) as f64;
        let mut grads = Gradients::zeros_like(&self.layers);
        let mut sse = 0.0;
        for (x, t) in xs.iter().zip(targets) {
            self.check_input(x)?;
            if t.len() != out_dim {
                return Err(Error::invalid("target dimension mismatch"));
            }
            sse += self.backprop_into(x, t, 1.0 / denom, &mut grads);
        }
        Ok((sse / denom, grads))
    }

    /// MSE of the batch with targets standardized by the model's scaler.
    pub fn loss_and_gradients(&self, batch: &[&LabeledSample]) -> Result<(f64, Gradients)> {
        let xs: Vec<&[f64]> = batch.iter().map(|s| s.x.as_slice()).collect();
        let targets = self.scaled_targets(batch)?;
        self.loss_and_gradients_raw(&xs, &targets)
    }

    fn scaled_targets(&self, batch: &[&LabeledSample]) -> Result<Vec<Vec<f64>>> {
        batch
            .iter()
            .map(|s| s.target(self.output_dim()).map(|t| self.scaler.standardize(&t)))
            .collect()
    }

    pub fn loss(&self, batch: &[&LabeledSample]) -> Result<f64> {
        let targets = self.scaled_targets(batch)?;
        self.raw_loss(batch, &targets)
    }

    fn raw_loss(&self, batch: &[&LabeledSample], targets: &[Vec<f64>]) -> Result<f64> {
        let mut sse = 0.0;
        for (s, t) in batch.iter().zip(targets) {
            let y = self.forward(&s.x)?;
            sse += y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(sse / (batch.len() * self.output_dim()) as f64)
    }

    pub fn adam_step(&mut self, grads: &Gradients, config: &AdamConfig) -> Result<()> {
        config.validate()?;
        if !grads.shape_matches(&self.layers) {
            return Err(Error::invalid("gradient shapes do not match the model"));
        }
        self.adam.step += 1;
        let step = self.adam.step;
        for (k, layer) in self.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[k];
            let (mw, mb) = &mut self.adam.m.layers[k];
            let (vw, vb) = &mut self.adam.v.layers[k];
            config.update(&mut layer.weights, gw, mw, vw, step);
            config.update(&mut layer.biases, gb, mb, vb, step);
        }
        Ok(())
    }

    /// Trains on the whole buffer, warm-starting from the current parameters.
    /// The scaler is refit on the buffer first. Returns per-epoch mean loss.
    pub fn train(&mut self, buffer: &DataBuffer, config: &TrainConfig) -> Result<Vec<f64>> {
        if buffer.is_empty() {
            return Err(Error::invalid("cannot train on an empty buffer"));
        }
        if config.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        config.adam.validate()?;
        self.scaler = buffer.fit_scaler(self.output_dim())?;
        let samples = buffer.samples();
        let targets: Vec<Vec<f64>> = self.scaled_targets(&samples.iter().collect::<Vec<_>>())?;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut history = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let mut rng = rng::derived_stream(config.shuffle_seed, &[tag::TRAIN, epoch as u64]);
            order.sort_unstable();
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let xs: Vec<&[f64]> = chunk.iter().map(|&i| samples[i].x.as_slice()).collect();
                let ts: Vec<Vec<f64>> = chunk.iter().map(|&i| targets[i].clone()).collect();
                let (loss, grads) = self.loss_and_gradients_raw(&xs, &ts)?;
                total += loss * chunk.len() as f64;
                self.adam_step(&grads, &config.adam)?;
            }
            history.push(total / samples.len() as f64);
        }
        Ok(history)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let raw = self.forward(x)?;
        let y = self.scaler.destandardize(&raw);
        if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite prediction {bad}")));
        }
        let (f_hat, m_hat, alpha_hat) = split_outputs(&y)?;
        Ok(Prediction { f_hat, m_hat, alpha_hat })
    }

    /// Mean squared error of de-standardized measure predictions.
    pub fn measure_mse(&self, samples: &[LabeledSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::invalid("no samples"));
        }
        let mut sse = 0.0;
        for s in samples {
            let p = self.predict(&s.x)?;
            sse += (p.m_hat[0] - s.m[0]).powi(2) + (p.m_hat[1] - s.m[1]).powi(2);
        }
        Ok(sse / (2 * samples.len()) as f64)
    }
}

/// Largest relative error between backprop gradients and central finite
/// differences of the single-sample loss, over every parameter.
pub fn finite_difference_check(model: &SurrogateModel, sample: &LabeledSample, h: f64) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid("step h must be > 0"));
    }
    let (_, grads) = model.loss_and_gradients(&[sample])?;
    let analytic = grads.flatten();
    let target = model.scaled_targets(&[sample])?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (idx, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(idx);
        *probe.param_mut(idx) = orig + h;
        let plus = probe.raw_loss(&[sample], &target)?;
        *probe.param_mut(idx) = orig - h;
        let minus = probe.raw_loss(&[sample], &target)?;
        *probe.param_mut(idx) = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
