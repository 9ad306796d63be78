//! Fully-connected sigmoid autoencoder trained with mini-batch SGD.
//!
//! Every layer computes `a' = s(W·a + b)` with the logistic sigmoid `s`.
//! Weights are untied: the decoder has its own matrices. The per-example cost
//! is `½‖x − z‖²`, so the output delta is `(z − x) ⊙ z ⊙ (1 − z)`; the
//! reported loss is the plain squared error `‖x − z‖²`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub const DEFAULT_EPOCHS: usize = 300;
pub const DEFAULT_BATCH_SIZE: usize = 10;
pub const DEFAULT_LEARNING_RATE: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum AutoencoderError {
    #[error("invalid architecture {dims:?}: {reason}")]
    InvalidArchitecture { dims: Vec<usize>, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty training set")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid architecture spec {0:?}")]
    InvalidArchSpec(String),
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks the layer chain `[d, h₁, …, h_L, d]`.
///
/// Each hidden layer grows or shrinks its predecessor by a power of two
/// (`h' = h·2^m` or `h' = ⌊h/2^m⌋`, m ≥ 1) and the output must match the input.
pub fn validate_architecture(dims: &[usize]) -> Result<(), AutoencoderError> {
    let invalid = |reason: &str| AutoencoderError::InvalidArchitecture {
        dims: dims.to_vec(),
        reason: reason.to_string(),
    };
    if dims.len() < 3 {
        return Err(invalid("need input, at least one hidden layer and output"));
    }
    if dims.contains(&0) {
        return Err(invalid("layer sizes must be positive"));
    }
    if dims[0] != dims[dims.len() - 1] {
        return Err(invalid("output size must equal input size"));
    }
    for pair in dims[..dims.len() - 1].windows(2) {
        if !power_of_two_step(pair[0], pair[1]) {
            return Err(invalid(&format!(
                "{} -> {} is not a power-of-two step",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

fn power_of_two_step(from: usize, to: usize) -> bool {
    (1..usize::BITS).any(|m| {
        let f = 1usize << m;
        from.checked_mul(f) == Some(to) || from / f == to
    })
}

/// Hidden-layer recipe such as `h/2`, `h/4` or `h/2,h/4,h/2`, where `h` is
/// the input dimension. Each divisor must be a power of two ≥ 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    divisors: Vec<usize>,
}

impl ArchSpec {
    pub fn parse(spec: &str) -> Result<Self, AutoencoderError> {
        let bad = || AutoencoderError::InvalidArchSpec(spec.to_string());
        let divisors = spec
            .split(',')
            .map(|part| {
                let div = part.trim().strip_prefix("h/").ok_or_else(bad)?;
                match div.parse::<usize>() {
                    Ok(n) if n >= 2 && n.is_power_of_two() => Ok(n),
                    _ => Err(bad()),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if divisors.is_empty() {
            return Err(bad());
        }
        // consecutive layers must still differ by a power of two
        for w in divisors.windows(2) {
            if w[0] == w[1] {
                return Err(bad());
            }
        }
        Ok(ArchSpec { divisors })
    }

    pub fn num_hidden(&self) -> usize {
        self.divisors.len()
    }

    /// Full layer dimensions for input size `d`.
    pub fn layer_dims(&self, d: usize) -> Result<Vec<usize>, AutoencoderError> {
        let mut dims = Vec::with_capacity(self.divisors.len() + 2);
        dims.push(d);
        dims.extend(self.divisors.iter().map(|k| d / k));
        dims.push(d);
        validate_architecture(&dims)?;
        Ok(dims)
    }
}

impl std::fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.divisors.iter().map(|d| format!("h/{d}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl AutoencoderModel {
    /// Assembles a model from parts, checking every shape.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self, AutoencoderError> {
        validate_architecture(&layer_dims)?;
        let layers = layer_dims.len() - 1;
        let invalid = |reason: String| AutoencoderError::InvalidArchitecture {
            dims: layer_dims.clone(),
            reason,
        };
        if weights.len() != layers || biases.len() != layers {
            return Err(invalid(format!(
                "expected {layers} weight matrices and bias vectors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            let expect = (layer_dims[k + 1], layer_dims[k]);
            if w.shape() != expect {
                return Err(invalid(format!(
                    "layer {k} weight shape {:?}, expected {expect:?}",
                    w.shape()
                )));
            }
            if b.len() != expect.0 {
                return Err(invalid(format!(
                    "layer {k} bias length {}, expected {}",
                    b.len(),
                    expect.0
                )));
            }
        }
        Ok(AutoencoderModel {
            layer_dims,
            weights,
            biases,
        })
    }

    /// All-zero weights and biases.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self, AutoencoderError> {
        validate_architecture(layer_dims)?;
        let weights = layer_dims
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0]))
            .collect();
        let biases = layer_dims[1..].iter().map(|&n| vec![0.0; n]).collect();
        Self::from_parts(layer_dims.to_vec(), weights, biases)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_hidden(&self) -> usize {
        self.layer_dims.len() - 2
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    fn check_input(&self, x: &[f64]) -> Result<(), AutoencoderError> {
        if x.len() != self.input_dim() {
            return Err(AutoencoderError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Activations of every layer: `[x, a¹, …, z]`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, AutoencoderError> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x.to_vec());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let prev = acts.last().expect("at least the input");
            let next = (0..w.rows)
                .map(|r| sigmoid(dot(w.row(r), prev) + b[r]))
                .collect();
            acts.push(next);
        }
        Ok(acts)
    }

    /// Output of the last layer only.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>, AutoencoderError> {
        Ok(self.forward(x)?.pop().expect("nonempty"))
    }

    /// Analytic gradients of `½‖x − z‖²` for a single example.
    pub fn backprop(&self, x: &[f64]) -> Result<Gradients, AutoencoderError> {
        let mut grads = Gradients::zeros_like(self);
        let acts = self.forward(x)?;
        self.accumulate_gradients(&acts, &mut grads);
        Ok(grads)
    }

    /// Adds the gradients for the example whose activations are `acts`.
    fn accumulate_gradients(&self, acts: &[Vec<f64>], grads: &mut Gradients) {
        let x = &acts[0];
        let z = acts.last().expect("nonempty");
        let mut delta: Vec<f64> = z
            .iter()
            .zip(x)
            .map(|(&zi, &xi)| (zi - xi) * zi * (1.0 - zi))
            .collect();

        for k in (0..self.weights.len()).rev() {
            let prev = &acts[k];
            let gw = &mut grads.weights[k];
            for (r, &dr) in delta.iter().enumerate() {
                let row = &mut gw.data[r * gw.cols..(r + 1) * gw.cols];
                for (g, &a) in row.iter_mut().zip(prev) {
                    *g += dr * a;
                }
            }
            for (g, &dr) in grads.biases[k].iter_mut().zip(&delta) {
                *g += dr;
            }
            if k == 0 {
                break;
            }
            let w = &self.weights[k];
            let mut back = vec![0.0; w.cols];
            for (r, &dr) in delta.iter().enumerate() {
                for (acc, &wv) in back.iter_mut().zip(w.row(r)) {
                    *acc += wv * dr;
                }
            }
            delta = back
                .into_iter()
                .zip(prev)
                .map(|(s, &a)| s * a * (1.0 - a))
                .collect();
        }
    }

    fn apply_update(&mut self, grads: &Gradients, step: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (wv, gv) in w.data.iter_mut().zip(&g.data) {
                *wv -= step * gv;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (bv, gv) in b.iter_mut().zip(g) {
                *bv -= step * gv;
            }
        }
    }
}

/// Per-layer gradients, same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &AutoencoderModel) -> Self {
        Gradients {
            weights: model
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows, w.cols))
                .collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.weights
            .iter_mut()
            .for_each(|w| w.data.iter_mut().for_each(|v| *v = 0.0));
        self.biases
            .iter_mut()
            .for_each(|b| b.iter_mut().for_each(|v| *v = 0.0));
    }
}

/// Weights ~ N(0,1)/√fan_in, biases ~ N(0,1), from a seeded generator.
pub fn init_model(layer_dims: &[usize], seed: u64) -> Result<AutoencoderModel, AutoencoderError> {
    validate_architecture(layer_dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for w in layer_dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let scale = (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g / scale
            })
            .collect();
        weights.push(Matrix::from_vec(fan_out, fan_in, data));
        biases.push(
            (0..fan_out)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect(),
        );
    }
    AutoencoderModel::from_parts(layer_dims.to_vec(), weights, biases)
}

/// Squared reconstruction error `‖x − z‖²`.
pub fn loss(x: &[f64], z: &[f64]) -> Result<f64, AutoencoderError> {
    if x.len() != z.len() {
        return Err(AutoencoderError::DimensionMismatch {
            expected: x.len(),
            got: z.len(),
        });
    }
    Ok(x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), AutoencoderError> {
        if self.epochs == 0 {
            return Err(AutoencoderError::InvalidConfig("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(AutoencoderError::InvalidConfig(
                "batch size must be ≥ 1".into(),
            ));
        }
        // zero is accepted as a no-op rate
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(AutoencoderError::InvalidConfig(format!(
                "learning rate {} must be finite and nonnegative",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: AutoencoderModel,
    /// Mean `‖x − z‖²` per epoch, accumulated from the forward passes made
    /// during that epoch (each example is scored just before its batch update).
    pub loss_trace: Vec<f64>,
}

/// Mini-batch SGD: `W ← W − (η/|batch|)·Σ∇W`, likewise for biases.
pub fn train(
    mut model: AutoencoderModel,
    dataset: &[Vec<f64>],
    config: &TrainingConfig,
) -> Result<TrainingOutcome, AutoencoderError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(AutoencoderError::EmptyDataset);
    }
    for x in dataset {
        model.check_input(x)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut grads = Gradients::zeros_like(&model);
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            for &i in batch {
                let acts = model.forward(&dataset[i])?;
                epoch_loss += loss(&dataset[i], acts.last().expect("nonempty"))?;
                model.accumulate_gradients(&acts, &mut grads);
            }
            model.apply_update(&grads, config.learning_rate / batch.len() as f64);
        }
        let mean = epoch_loss / dataset.len() as f64;
        log::debug!("epoch {}: mean loss {mean:.6}", epoch + 1);
        loss_trace.push(mean);
    }
    Ok(TrainingOutcome { model, loss_trace })
}
