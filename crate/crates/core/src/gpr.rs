//! Gaussian process regression with an isotropic squared-exponential kernel.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, solve_lower};
use crate::preprocess::{select_rows, select_values, train_validation_split, Standardizer};

/// `k(x, x') = σ_f² · exp(-‖x - x'‖² / (2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqExpKernel {
    pub sigma_f: f64,
    pub length_scale: f64,
}

impl SqExpKernel {
    pub fn new(sigma_f: f64, length_scale: f64) -> Result<Self> {
        let k = SqExpKernel { sigma_f, length_scale };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_f", self.sigma_f), ("length_scale", self.length_scale)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.sigma_f * self.sigma_f
    }

    fn eval_unchecked(&self, x: ArrayView1<f64>, x2: ArrayView1<f64>) -> f64 {
        let d2: f64 = x.iter().zip(x2.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        self.variance() * (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

pub fn kernel_eval(x: &[f64], x2: &[f64], params: &SqExpKernel) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: x2.len() });
    }
    if x.iter().chain(x2).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("kernel argument".into()));
    }
    Ok(params.eval_unchecked(ArrayView1::from(x), ArrayView1::from(x2)))
}

/// Symmetric Gram matrix; the upper triangle is mirrored from the lower.
pub fn gram_matrix(x: ArrayView2<f64>, kernel: &SqExpKernel) -> Array2<f64> {
    let n = x.nrows();
    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval_unchecked(x.row(i), x.row(j));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Jitter multipliers of `σ_f²` tried in turn when factorization fails.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-9, 1e-8];

#[derive(Debug, Clone, PartialEq)]
pub struct GprModel {
    inputs: Array2<f64>,
    kernel: SqExpKernel,
    noise_var: f64,
    jitter: f64,
    chol: Array2<f64>,
    alpha: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpPrediction {
    pub mean: f64,
    pub variance: f64,
}

/// Zero-mean GP posterior conditioned on `(x, y)`.
///
/// The diagonal receives `noise_var`; if the Cholesky factorization fails a
/// jitter of `1e-10·σ_f²` is added and escalated ×10 up to three times.
pub fn gpr_fit(x: ArrayView2<f64>, y: &[f64], kernel: SqExpKernel, noise_var: f64) -> Result<GprModel> {
    kernel.validate()?;
    if x.nrows() == 0 {
        return Err(Error::InsufficientRows { needed: 1, got: 0 });
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    if !noise_var.is_finite() || noise_var < 0.0 {
        return Err(Error::InvalidParameter(format!("noise variance {noise_var} must be finite and >= 0")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("training data".into()));
    }
    let gram = gram_matrix(x, &kernel);
    for step in JITTER_LADDER {
        let jitter = step * kernel.variance();
        let mut a = gram.clone();
        for i in 0..a.nrows() {
            a[[i, i]] += noise_var + jitter;
        }
        if let Ok(chol) = cholesky(a.view()) {
            let alpha = cholesky_solve(chol.view(), ArrayView1::from(y));
            return Ok(GprModel { inputs: x.to_owned(), kernel, noise_var, jitter, chol, alpha });
        }
    }
    Err(Error::FactorizationFailed)
}

impl GprModel {
    /// Rebuilds a model from stored inputs and dual weights, refactorizing
    /// for predictive variances.
    pub fn from_parts(inputs: Array2<f64>, alpha: Array1<f64>, kernel: SqExpKernel, noise_var: f64, jitter: f64) -> Result<Self> {
        kernel.validate()?;
        if alpha.len() != inputs.nrows() {
            return Err(Error::ArityMismatch(format!("{} dual weights for {} inputs", alpha.len(), inputs.nrows())));
        }
        let mut a = gram_matrix(inputs.view(), &kernel);
        for i in 0..a.nrows() {
            a[[i, i]] += noise_var + jitter;
        }
        let chol = cholesky(a.view()).map_err(|_| Error::FactorizationFailed)?;
        Ok(GprModel { inputs, kernel, noise_var, jitter, chol, alpha })
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn kernel(&self) -> SqExpKernel {
        self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Diagonal jitter that was needed for the factorization to succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn jittered(&self) -> bool {
        self.jitter > 0.0
    }

    pub fn dual_weights(&self) -> &Array1<f64> {
        &self.alpha
    }

    pub fn predict(&self, x: &[f64]) -> Result<GpPrediction> {
        if x.len() != self.inputs.ncols() {
            return Err(Error::DimensionMismatch { expected: self.inputs.ncols(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("query point".into()));
        }
        let q = ArrayView1::from(x);
        let k_star: Array1<f64> = self.inputs.rows().into_iter().map(|r| self.kernel.eval_unchecked(r, q)).collect();
        let mean = k_star.dot(&self.alpha);
        let v = solve_lower(self.chol.view(), k_star.view());
        let variance = (self.kernel.variance() - v.dot(&v)).max(0.0);
        Ok(GpPrediction { mean, variance })
    }
}

/// Candidate noise levels as multiples of the training target variance.
pub const NOISE_GRID: [f64; 3] = [1e-6, 1e-4, 1e-2];

/// GP on standardized inputs with a centered target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedGpr {
    pub standardizer: Standardizer,
    pub y_mean: f64,
    pub model: GprModel,
}

impl TrainedGpr {
    pub fn predict(&self, row: &[f64]) -> Result<GpPrediction> {
        let z = self.standardizer.transform_row(row)?;
        let p = self.model.predict(&z)?;
        Ok(GpPrediction { mean: p.mean + self.y_mean, variance: p.variance })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprTrainingReport {
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// `(noise variance, held-out MSE)` for each candidate.
    pub noise_search: Vec<(f64, f64)>,
    pub noise_var: f64,
    pub test_mse: f64,
}

/// 90/10 split; σ_f = std of training targets, σ = 1 in standardized input
/// space, noise chosen from [`NOISE_GRID`] by held-out MSE.
pub fn train_gpr(x: ArrayView2<f64>, y: &[f64], split_seed: u64) -> Result<(TrainedGpr, GprTrainingReport)> {
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    if x.nrows() < 3 {
        return Err(Error::InsufficientRows { needed: 3, got: x.nrows() });
    }
    let split = train_validation_split(x.nrows(), 0.9, split_seed)?;
    let xt_raw = select_rows(x, &split.train);
    let standardizer = Standardizer::fit(xt_raw.view())?;
    let xt = standardizer.transform(xt_raw.view())?;
    let xv = standardizer.transform(select_rows(x, &split.validation).view())?;
    let yt = select_values(y, &split.train);
    let yv = select_values(y, &split.validation);

    let y_mean = yt.iter().sum::<f64>() / yt.len() as f64;
    let yc: Vec<f64> = yt.iter().map(|v| v - y_mean).collect();
    let var = yc.iter().map(|v| v * v).sum::<f64>() / yc.len() as f64;
    if var == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let kernel = SqExpKernel::new(var.sqrt(), 1.0)?;

    let mut best: Option<(f64, f64, GprModel)> = None;
    let mut noise_search = Vec::with_capacity(NOISE_GRID.len());
    for mult in NOISE_GRID {
        let noise = mult * var;
        let model = gpr_fit(xt.view(), &yc, kernel, noise)?;
        let mut sse = 0.0;
        for (row, target) in xv.rows().into_iter().zip(&yv) {
            let p = model.predict(&row.to_vec())?;
            sse += (target - (p.mean + y_mean)).powi(2);
        }
        let mse = sse / yv.len() as f64;
        noise_search.push((noise, mse));
        if best.as_ref().is_none_or(|(_, m, _)| mse < *m) {
            best = Some((noise, mse, model));
        }
    }
    let (noise_var, test_mse, model) = best.expect("grid is nonempty");
    let report = GprTrainingReport {
        split_seed,
        n_train: split.train.len(),
        n_test: split.validation.len(),
        noise_search,
        noise_var,
        test_mse,
    };
    Ok((TrainedGpr { standardizer, y_mean, model }, report))
}
