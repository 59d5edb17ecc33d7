//! Least squares, coefficient inference, top-k feature selection, ridge
//! regression with λ tuning, square-term expansion and k-fold validation.

use std::collections::HashSet;

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{ColumnFeatures, ColumnRecord, Feature, Target};
use crate::error::{Error, Result};
use crate::evaluation::fit_metrics;
use crate::linalg::{gram, SpdSolver};
use crate::preprocess::{select_rows, select_values, shuffled_indices, train_validation_split};

pub const INTERCEPT: &str = "intercept";

/// Observation matrix without the intercept column; `intercept` says whether
/// fits add one.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: Array2<f64>,
    feature_names: Vec<String>,
    intercept: bool,
}

impl DesignMatrix {
    pub fn new(values: Array2<f64>, feature_names: Vec<String>, intercept: bool) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::InsufficientRows { needed: 1, got: 0 });
        }
        if values.ncols() != feature_names.len() {
            return Err(Error::DimensionMismatch { expected: feature_names.len(), got: values.ncols() });
        }
        if values.ncols() == 0 && !intercept {
            return Err(Error::InvalidParameter("design matrix has no columns".into()));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name == INTERCEPT || !seen.insert(name.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate or reserved feature name `{name}`")));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("design matrix value {v}")));
        }
        Ok(DesignMatrix { values, feature_names, intercept })
    }

    /// Builds rows from named features (base names or `name^2`).
    pub fn from_features<'a>(
        rows: impl IntoIterator<Item = &'a ColumnFeatures>,
        names: &[String],
        intercept: bool,
    ) -> Result<Self> {
        let terms: Vec<FeatureTerm> = names.iter().map(|n| FeatureTerm::parse(n)).collect::<Result<_>>()?;
        let mut data = Vec::new();
        let mut n = 0;
        for f in rows {
            n += 1;
            data.extend(terms.iter().map(|t| t.value(f)));
        }
        let values = Array2::from_shape_vec((n, terms.len()), data).expect("shape matches data");
        DesignMatrix::new(values, names.to_vec(), intercept)
    }

    /// Design matrix over `features` and the target column for the records
    /// that carry the target.
    pub fn from_records(records: &[&ColumnRecord], names: &[String], target: Target) -> Result<(Self, Vec<f64>)> {
        let labelled: Vec<&ColumnRecord> = records.iter().copied().filter(|r| r.target(target).is_some()).collect();
        let y = labelled.iter().map(|r| r.target(target).expect("filtered")).collect();
        let x = DesignMatrix::from_features(labelled.iter().map(|r| &r.features), names, true)?;
        Ok((x, y))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    /// Number of fitted coefficients, including the intercept.
    pub fn n_params(&self) -> usize {
        self.values.ncols() + usize::from(self.intercept)
    }

    /// Coefficient labels: `intercept` first when present.
    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_params());
        if self.intercept {
            names.push(INTERCEPT.to_string());
        }
        names.extend(self.feature_names.iter().cloned());
        names
    }

    /// Matrix with the leading column of ones when the intercept is on.
    pub fn augmented(&self) -> Array2<f64> {
        if self.intercept {
            let ones = Array2::<f64>::ones((self.n_rows(), 1));
            concatenate(Axis(1), &[ones.view(), self.values.view()]).expect("row counts match")
        } else {
            self.values.clone()
        }
    }

    pub fn rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            values: select_rows(self.values.view(), rows),
            feature_names: self.feature_names.clone(),
            intercept: self.intercept,
        }
    }

    /// Keeps the named columns, in the order given.
    pub fn columns(&self, names: &[String]) -> Result<DesignMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown feature `{n}`")))
            })
            .collect::<Result<_>>()?;
        DesignMatrix::new(self.values.select(Axis(1), &idx), names.to_vec(), self.intercept)
    }
}

/// A base feature or its square, addressed by name (`rho_t`, `rho_t^2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureTerm {
    pub feature: Feature,
    pub squared: bool,
}

impl FeatureTerm {
    pub fn parse(name: &str) -> Result<Self> {
        let (base, squared) = match name.strip_suffix("^2") {
            Some(base) => (base, true),
            None => (name, false),
        };
        let feature =
            Feature::from_name(base).ok_or_else(|| Error::InvalidParameter(format!("unknown feature `{name}`")))?;
        Ok(FeatureTerm { feature, squared })
    }

    pub fn value(&self, f: &ColumnFeatures) -> f64 {
        let v = f.get(self.feature);
        if self.squared {
            v * v
        } else {
            v
        }
    }
}

pub fn feature_names(features: &[Feature]) -> Vec<String> {
    features.iter().map(|f| f.name().to_string()).collect()
}

pub fn all_feature_names() -> Vec<String> {
    feature_names(&Feature::ALL)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

/// Fitted linear predictor; `coefficients` align with
/// [`LinearModel::coefficient_names`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    pub intercept: bool,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub meta: TrainingMeta,
}

impl LinearModel {
    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.intercept {
            names.push(INTERCEPT.to_string());
        }
        names.extend(self.feature_names.iter().cloned());
        names
    }

    /// Coefficients of the non-intercept features.
    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[usize::from(self.intercept)..]
    }

    pub fn intercept_value(&self) -> f64 {
        if self.intercept {
            self.coefficients[0]
        } else {
            0.0
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch { expected: self.feature_names.len(), got: row.len() });
        }
        Ok(self.slopes().iter().zip(row).fold(self.intercept_value(), |acc, (c, x)| acc + c * x))
    }

    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        x.values().rows().into_iter().map(|r| self.predict_row(&r.to_vec())).collect()
    }

    /// Evaluates on column features by resolving the stored feature names.
    pub fn predict_features(&self, f: &ColumnFeatures) -> Result<f64> {
        let row: Vec<f64> = self
            .feature_names
            .iter()
            .map(|n| FeatureTerm::parse(n).map(|t| t.value(f)))
            .collect::<Result<_>>()?;
        self.predict_row(&row)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.feature_names.len() + usize::from(self.intercept);
        if self.coefficients.len() != expected {
            return Err(Error::ArityMismatch(format!(
                "{} coefficients for {} terms",
                self.coefficients.len(),
                expected
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) || !self.lambda.is_finite() {
            return Err(Error::CorruptPayload("non-finite coefficient".into()));
        }
        for n in &self.feature_names {
            FeatureTerm::parse(n)?;
        }
        Ok(())
    }
}

fn check_len(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch { expected: x.n_rows(), got: y.len() });
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("target value {v}")));
    }
    Ok(())
}

fn solve_penalized(x: &DesignMatrix, y: &[f64], lambda: f64) -> Result<(Array2<f64>, SpdSolver, Array1<f64>)> {
    let xa = x.augmented();
    let mut a = gram(xa.view());
    let skip = usize::from(x.intercept());
    for j in skip..a.nrows() {
        a[[j, j]] += lambda;
    }
    let rhs = xa.t().dot(&ArrayView1::from(y));
    let solver = SpdSolver::new(a.view())?;
    let beta = solver.solve(rhs.view());
    Ok((xa, solver, beta))
}

fn model_from(x: &DesignMatrix, beta: Array1<f64>, lambda: f64) -> LinearModel {
    LinearModel {
        feature_names: x.feature_names().to_vec(),
        intercept: x.intercept(),
        coefficients: beta.to_vec(),
        lambda,
        meta: TrainingMeta::default(),
    }
}

/// Ordinary least squares through the normal equations.
pub fn ols_fit(x: &DesignMatrix, y: &[f64]) -> Result<LinearModel> {
    check_len(x, y)?;
    if x.n_rows() < x.n_params() {
        return Err(Error::SingularMatrix);
    }
    let (_, _, beta) = solve_penalized(x, y, 0.0)?;
    Ok(model_from(x, beta, 0.0))
}

/// Minimizes `SSR/(2n) + λ·Σβ_j²/(2n)` over the non-intercept coefficients,
/// i.e. solves `(XᵀX + λ·P)β = Xᵀy` with `P` the identity minus the
/// intercept entry.
pub fn ridge_fit(x: &DesignMatrix, y: &[f64], lambda: f64) -> Result<LinearModel> {
    check_len(x, y)?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be finite and >= 0")));
    }
    let (_, _, beta) = solve_penalized(x, y, lambda)?;
    Ok(model_from(x, beta, lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientStat {
    pub name: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

/// Classical OLS t-tests for every coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueReport {
    pub coefficients: Vec<CoefficientStat>,
    /// Residual degrees of freedom `n - p`.
    pub dof: usize,
    pub intercept: bool,
}

impl PValueReport {
    /// Non-intercept rows, in column order.
    pub fn features(&self) -> &[CoefficientStat] {
        &self.coefficients[usize::from(self.intercept)..]
    }
}

pub fn coefficient_pvalues(x: &DesignMatrix, y: &[f64]) -> Result<PValueReport> {
    check_len(x, y)?;
    let p = x.n_params();
    let n = x.n_rows();
    if n <= p + 1 {
        return Err(Error::InsufficientRows { needed: p + 2, got: n });
    }
    let (xa, solver, beta) = solve_penalized(x, y, 0.0)?;
    let resid = &ArrayView1::from(y) - &xa.dot(&beta);
    let ssr = resid.dot(&resid);
    let sst: f64 = y.iter().map(|v| v * v).sum();
    if ssr <= 1e-24 * sst.max(f64::MIN_POSITIVE) {
        return Err(Error::ZeroResidualVariance);
    }
    let dof = n - p;
    let sigma2 = ssr / dof as f64;
    let inv_diag = solver.inverse_diagonal();
    let dist = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let coefficients = x
        .coefficient_names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let std_error = (sigma2 * inv_diag[j]).sqrt();
            let t_stat = beta[j] / std_error;
            let p_value = (2.0 * dist.sf(t_stat.abs())).clamp(0.0, 1.0);
            CoefficientStat { name, coefficient: beta[j], std_error, t_stat, p_value }
        })
        .collect();
    Ok(PValueReport { coefficients, dof, intercept: x.intercept() })
}

/// The `k` non-intercept features with the smallest p-values, returned in
/// their original column order. Equal p-values favour the earlier column.
pub fn select_significant(report: &PValueReport, k: usize) -> Result<Vec<String>> {
    let feats = report.features();
    if k > feats.len() {
        return Err(Error::KTooLarge { k, available: feats.len() });
    }
    let mut order: Vec<usize> = (0..feats.len()).collect();
    order.sort_by(|&i, &j| feats[i].p_value.total_cmp(&feats[j].p_value).then(i.cmp(&j)));
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| feats[i].name.clone()).collect())
}

/// Appends a squared column for every feature; no cross terms.
pub fn expand_squares(x: &DesignMatrix) -> DesignMatrix {
    let squares = x.values().mapv(|v| v * v);
    let values = concatenate(Axis(1), &[x.values().view(), squares.view()]).expect("row counts match");
    let mut names = x.feature_names().to_vec();
    names.extend(x.feature_names().iter().map(|n| format!("{n}^2")));
    DesignMatrix { values, feature_names: names, intercept: x.intercept() }
}

/// Unpenalized cost `SSR / (2m)` of a model on a subset.
pub fn half_mse(model: &LinearModel, x: &DesignMatrix, y: &[f64]) -> Result<f64> {
    let pred = model.predict(x)?;
    let ssr: f64 = pred.iter().zip(y).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(ssr / (2.0 * y.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCost {
    pub lambda: f64,
    pub train_cost: f64,
    pub validation_cost: f64,
}

impl LambdaCost {
    pub fn total(&self) -> f64 {
        self.train_cost + self.validation_cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTuning {
    pub lambda_star: f64,
    pub curve: Vec<LambdaCost>,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
}

impl LambdaTuning {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,train_cost,validation_cost,total_cost\n");
        for c in &self.curve {
            out.push_str(&format!("{},{},{},{}\n", c.lambda, c.train_cost, c.validation_cost, c.total()));
        }
        out
    }
}

/// `{0}` plus 25 log-spaced points over `[1e-4, 1e2]`.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend((0..25).map(|i| 10f64.powf(-4.0 + 6.0 * i as f64 / 24.0)));
    grid
}

/// Picks λ minimizing training cost plus validation cost on a seeded 70/30
/// split. Ties keep the smaller λ.
pub fn tune_lambda(x: &DesignMatrix, y: &[f64], split_seed: u64, grid: &[f64]) -> Result<LambdaTuning> {
    check_len(x, y)?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(l) = grid.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(Error::InvalidParameter(format!("lambda {l} must be finite and >= 0")));
    }
    if x.n_rows() < 10 {
        return Err(Error::InsufficientRows { needed: 10, got: x.n_rows() });
    }
    let split = train_validation_split(x.n_rows(), 0.7, split_seed)?;
    let (xt, yt) = (x.rows(&split.train), select_values(y, &split.train));
    let (xv, yv) = (x.rows(&split.validation), select_values(y, &split.validation));

    let mut curve = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let model = ridge_fit(&xt, &yt, lambda)?;
        curve.push(LambdaCost {
            lambda,
            train_cost: half_mse(&model, &xt, &yt)?,
            validation_cost: half_mse(&model, &xv, &yv)?,
        });
    }
    let best = curve
        .iter()
        .reduce(|best, c| {
            let (cb, cc) = (best.total(), c.total());
            if cc < cb || (cc == cb && c.lambda < best.lambda) {
                c
            } else {
                best
            }
        })
        .expect("grid is nonempty");
    Ok(LambdaTuning {
        lambda_star: best.lambda,
        split_seed,
        n_train: split.train.len(),
        n_validation: split.validation.len(),
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub rows: Vec<usize>,
    /// `None` when the fold has fewer than two rows or a constant target.
    pub r2: Option<f64>,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldReport {
    pub folds: Vec<FoldMetrics>,
    pub mean_r2: Option<f64>,
    pub mean_mse: f64,
}

/// Partition of `0..n` into `k` seeded folds whose sizes differ by at most one.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let idx = shuffled_indices(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        folds.push(idx[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// Trains on `k - 1` folds and scores the held-out fold, for every fold.
pub fn kfold_cv<F>(x: &DesignMatrix, y: &[f64], k: usize, trainer: F, seed: u64) -> Result<KFoldReport>
where
    F: Fn(&DesignMatrix, &[f64]) -> Result<LinearModel>,
{
    check_len(x, y)?;
    let folds = kfold_partition(x.n_rows(), k, seed)?;
    let mut out = Vec::with_capacity(k);
    for (i, held) in folds.iter().enumerate() {
        let train: Vec<usize> = folds.iter().enumerate().filter(|(j, _)| *j != i).flat_map(|(_, f)| f.iter().copied()).collect();
        let model = trainer(&x.rows(&train), &select_values(y, &train))?;
        let pred = model.predict(&x.rows(held))?;
        let actual = select_values(y, held);
        let mse = pred.iter().zip(&actual).map(|(p, a)| (a - p).powi(2)).sum::<f64>() / actual.len() as f64;
        let r2 = fit_metrics(&pred, &actual).ok().map(|m| m.r2);
        out.push(FoldMetrics { fold: i, rows: held.clone(), r2, mse });
    }
    let r2s: Vec<f64> = out.iter().filter_map(|f| f.r2).collect();
    let mean_r2 = (!r2s.is_empty()).then(|| r2s.iter().sum::<f64>() / r2s.len() as f64);
    let mean_mse = out.iter().map(|f| f.mse).sum::<f64>() / k as f64;
    Ok(KFoldReport { folds: out, mean_r2, mean_mse })
}
