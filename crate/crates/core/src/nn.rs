//! Fully connected RELU network with a linear scalar output, trained by
//! full-batch gradient descent on mean squared error.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ColumnFeatures;
use crate::error::{Error, Result};
use crate::preprocess::{select_rows, select_values, train_validation_split, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `gamma` every `period` epochs.
    Step { gamma: f64, period: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl MlpConfig {
    /// Four hidden layers of 200 units, 10 000 epochs, rate 0.05 halved every
    /// 2000 epochs.
    pub fn standard(input_dim: usize, seed: u64) -> Self {
        MlpConfig {
            input_dim,
            hidden_layers: 4,
            hidden_width: 200,
            epochs: 10_000,
            learning_rate: 0.05,
            schedule: LrSchedule::Step { gamma: 0.5, period: 2000 },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || (self.hidden_layers > 0 && self.hidden_width == 0) {
            return Err(Error::InvalidParameter("network dimensions must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidParameter(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if let LrSchedule::Step { gamma, period } = self.schedule {
            if !(gamma > 0.0 && gamma <= 1.0) || period == 0 {
                return Err(Error::InvalidParameter("step schedule needs gamma in (0, 1] and period >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Step { gamma, period } => self.learning_rate * gamma.powi((epoch / period) as i32),
        }
    }

    /// Layer widths from input to the scalar output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        w.push(1);
        w
    }
}

/// Affine layer `x·W + b` with `W` stored `(fan_in, fan_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense { weights: Array2::zeros(self.weights.raw_dim()), bias: Array1::zeros(self.bias.len()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    config: MlpConfig,
}

/// Per-layer loss gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Loss before each update; empty unless tracing was requested.
    pub losses: Vec<f64>,
    pub final_train_mse: f64,
    pub final_validation_mse: Option<f64>,
    pub split_seed: Option<u64>,
}

/// Glorot-uniform weights from a seeded stream; zero biases.
pub fn mlp_init(config: MlpConfig) -> Result<Mlp> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let widths = config.widths();
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit));
            Dense { weights, bias: Array1::zeros(fan_out) }
        })
        .collect();
    Ok(Mlp { layers, config })
}

impl Mlp {
    /// Assembles a network from explicit layers, checking that shapes chain
    /// from `config.input_dim` through the hidden widths to one output.
    pub fn from_layers(config: MlpConfig, layers: Vec<Dense>) -> Result<Self> {
        config.validate()?;
        let widths = config.widths();
        if layers.len() != widths.len() - 1 {
            return Err(Error::ArityMismatch(format!("{} layers, expected {}", layers.len(), widths.len() - 1)));
        }
        for (i, (layer, w)) in layers.iter().zip(widths.windows(2)).enumerate() {
            if layer.weights.dim() != (w[0], w[1]) || layer.bias.len() != w[1] {
                return Err(Error::ArityMismatch(format!(
                    "layer {i} is {:?} with {} biases, expected ({}, {})",
                    layer.weights.dim(),
                    layer.bias.len(),
                    w[0],
                    w[1]
                )));
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::CorruptPayload(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Mlp { layers, config })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch { expected: self.config.input_dim, got: x.len() });
        }
        let row = ArrayView1::from(x).insert_axis(Axis(0));
        Ok(self.forward_batch(row)[0])
    }

    /// Outputs for every row of `x` (`n × input_dim`).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = a.dot(&layer.weights) + &layer.bias;
            if i < last {
                a.mapv_inplace(relu);
            }
        }
        a.column(0).to_owned()
    }

    pub fn mse(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
        let out = self.forward_batch(x);
        (&out - &y).mapv(|e| e * e).mean().unwrap_or(0.0)
    }

    /// Loss and its gradient by backpropagation.
    pub fn gradients(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, Gradients) {
        let n = x.nrows() as f64;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weights) + &layer.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            activations.push(z);
        }
        let out = activations[self.layers.len()].column(0).to_owned();
        let resid = &out - &y;
        let loss = resid.mapv(|e| e * e).sum() / n;

        let mut delta = (resid * (2.0 / n)).insert_axis(Axis(1));
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            let input = &activations[l];
            grads[l].weights = input.t().dot(&delta);
            grads[l].bias = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights.t());
                ndarray::Zip::from(&mut back).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        (loss, Gradients { layers: grads })
    }

    fn apply(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.scaled_add(-lr, &g.weights);
            layer.bias.scaled_add(-lr, &g.bias);
        }
    }

    /// Runs `config.epochs` full-batch steps.
    pub fn train(mut self, x: ArrayView2<f64>, y: ArrayView1<f64>, trace: bool) -> Result<(Mlp, TrainTrace)> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::DimensionMismatch { expected: self.config.input_dim, got: x.ncols() });
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
        }
        if x.nrows() == 0 {
            return Err(Error::InsufficientRows { needed: 1, got: 0 });
        }
        let mut losses = Vec::with_capacity(if trace { self.config.epochs } else { 0 });
        for epoch in 0..self.config.epochs {
            let (loss, grads) = self.gradients(x, y);
            if !loss.is_finite() {
                return Err(Error::DivergenceDetected { step: epoch });
            }
            if trace {
                losses.push(loss);
            }
            self.apply(&grads, self.config.learning_rate_at(epoch));
        }
        let final_train_mse = self.mse(x, y);
        if !final_train_mse.is_finite() {
            return Err(Error::DivergenceDetected { step: self.config.epochs });
        }
        Ok((self, TrainTrace { losses, final_train_mse, final_validation_mse: None, split_seed: None }))
    }
}

pub fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Step used for the central differences in [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Largest `|g_a - g_fd| / max(1, |g_a|, |g_fd|)` between the
/// backpropagated gradient and central finite differences.
pub fn grad_check(net: &Mlp, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let (_, analytic) = net.gradients(x, y);
    grad_check_against(net, x, y, &analytic)
}

/// As [`grad_check`], against a caller-supplied analytic gradient.
pub fn grad_check_against(net: &Mlp, x: ArrayView2<f64>, y: ArrayView1<f64>, analytic: &Gradients) -> f64 {
    let mut probe = net.clone();
    let h = GRAD_CHECK_STEP;
    let mut worst = 0.0f64;
    let mut compare = |ga: f64, plus: f64, minus: f64| {
        let fd = (plus - minus) / (2.0 * h);
        let dev = (ga - fd).abs() / 1f64.max(ga.abs()).max(fd.abs());
        worst = worst.max(dev);
    };
    for l in 0..net.layers.len() {
        let (rows, cols) = net.layers[l].weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = probe.layers[l].weights[[i, j]];
                probe.layers[l].weights[[i, j]] = orig + h;
                let plus = probe.mse(x, y);
                probe.layers[l].weights[[i, j]] = orig - h;
                let minus = probe.mse(x, y);
                probe.layers[l].weights[[i, j]] = orig;
                compare(analytic.layers[l].weights[[i, j]], plus, minus);
            }
        }
        for j in 0..net.layers[l].bias.len() {
            let orig = probe.layers[l].bias[j];
            probe.layers[l].bias[j] = orig + h;
            let plus = probe.mse(x, y);
            probe.layers[l].bias[j] = orig - h;
            let minus = probe.mse(x, y);
            probe.layers[l].bias[j] = orig;
            compare(analytic.layers[l].bias[j], plus, minus);
        }
    }
    worst
}

/// Base features followed by `(a/d)²` and `(V_y/V_o)²`.
pub fn augment_circular(f: &ColumnFeatures) -> [f64; 8] {
    let b = f.to_array();
    [b[0], b[1], b[2], b[3], b[4], b[5], f.span_depth * f.span_depth, f.shear_ratio * f.shear_ratio]
}

/// Network input for a column: six base features, or eight when augmented.
pub fn network_input(f: &ColumnFeatures, augment: bool) -> Vec<f64> {
    if augment {
        augment_circular(f).to_vec()
    } else {
        f.to_array().to_vec()
    }
}

/// Network on standardized inputs; targets stay in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedMlp {
    pub standardizer: Standardizer,
    pub net: Mlp,
    pub augment: bool,
}

impl TrainedMlp {
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.net.forward(&self.standardizer.transform_row(row)?)
    }

    pub fn predict(&self, f: &ColumnFeatures) -> Result<f64> {
        f.validate()?;
        self.predict_row(&network_input(f, self.augment))
    }
}

/// Inputs standardized with the statistics of all rows, a seeded 70/30
/// split, then full-batch training; the trace carries the validation MSE.
pub fn train_mlp_regressor(
    x: ArrayView2<f64>,
    y: &[f64],
    config: MlpConfig,
    split_seed: u64,
    augment: bool,
    trace: bool,
) -> Result<(TrainedMlp, TrainTrace)> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    let split = train_validation_split(x.nrows(), 0.7, split_seed)?;
    let standardizer = Standardizer::fit(x)?;
    let z = standardizer.transform(x)?;
    let xt = select_rows(z.view(), &split.train);
    let xv = select_rows(z.view(), &split.validation);
    let yt = Array1::from(select_values(y, &split.train));
    let yv = Array1::from(select_values(y, &split.validation));

    let (net, mut tr) = mlp_init(config)?.train(xt.view(), yt.view(), trace)?;
    tr.final_validation_mse = Some(net.mse(xv.view(), yv.view()));
    tr.split_seed = Some(split_seed);
    Ok((TrainedMlp { standardizer, net, augment }, tr))
}
