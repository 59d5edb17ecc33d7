//! Goodness-of-fit metrics, error distributions, the separation parameter,
//! box statistics, per-bin significance analysis and misclassification
//! error tables.
//!
//! Errors are always `experiment - estimate`: a negative error means the
//! estimate was unconservative.

use serde::{Deserialize, Serialize};

use crate::data::{ColumnFeatures, ColumnRecord, Dataset, DatasetStats, FailureMode, Feature, SectionShape, Target};
use crate::error::{Error, Result};
use crate::linear::{all_feature_names, coefficient_pvalues, ols_fit, select_significant, DesignMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub r2: f64,
    pub mse: f64,
    /// Population standard deviation of `actual - estimated`.
    pub std_err: f64,
}

pub fn fit_metrics(estimated: &[f64], actual: &[f64]) -> Result<FitMetrics> {
    if estimated.len() != actual.len() {
        return Err(Error::LengthMismatch { left: estimated.len(), right: actual.len() });
    }
    let n = actual.len();
    if n < 2 {
        return Err(Error::InsufficientRows { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = actual.iter().sum::<f64>() / nf;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let errors: Vec<f64> = actual.iter().zip(estimated).map(|(a, e)| a - e).collect();
    let ss_res: f64 = errors.iter().map(|e| e * e).sum();
    let err_mean = errors.iter().sum::<f64>() / nf;
    let var = errors.iter().map(|e| (e - err_mean).powi(2)).sum::<f64>() / nf;
    Ok(FitMetrics { r2: 1.0 - ss_res / ss_tot, mse: ss_res / nf, std_err: var.sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub id: String,
    pub error: f64,
    pub features: ColumnFeatures,
}

/// Pairs each record's measured target with an estimate; records lacking the
/// target are skipped.
pub fn error_samples<'a, F>(records: impl IntoIterator<Item = &'a ColumnRecord>, target: Target, mut estimate: F) -> Result<Vec<ErrorSample>>
where
    F: FnMut(&ColumnRecord) -> Result<f64>,
{
    let mut out = Vec::new();
    for r in records {
        if let Some(actual) = r.target(target) {
            let error = actual - estimate(r)?;
            if !error.is_finite() {
                return Err(Error::NonFiniteInput(format!("error for `{}`", r.id)));
            }
            out.push(ErrorSample { id: r.id.clone(), error, features: r.features });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub error: f64,
    pub fraction: f64,
}

/// Empirical CDF with `F(x_(i)) = i/n`; tied errors collapse onto one point
/// carrying the highest fraction.
pub fn error_cdf(errors: &[f64]) -> Vec<CdfPoint> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out = Vec::new();
    for i in 0..n {
        if i + 1 < n && sorted[i + 1] == sorted[i] {
            continue;
        }
        out.push(CdfPoint { error: sorted[i], fraction: (i + 1) as f64 / n as f64 });
    }
    out
}

pub fn cdf_to_csv(points: &[CdfPoint]) -> String {
    let mut s = String::from("error,fraction\n");
    for p in points {
        s.push_str(&format!("{},{}\n", p.error, p.fraction));
    }
    s
}

/// Share of errors below zero.
pub fn unconservative_share(errors: &[f64]) -> f64 {
    errors.iter().filter(|e| **e < 0.0).count() as f64 / errors.len() as f64
}

/// Normalized distance of a column from the dataset mean:
/// `sqrt(Σ dᵢ²) / (0.5·√6)` with `dᵢ = (xᵢ - meanᵢ) / rangeᵢ`.
pub fn separation_param(f: &ColumnFeatures, stats: &DatasetStats) -> Result<f64> {
    f.validate()?;
    let mut sum = 0.0;
    for feature in Feature::ALL {
        let s = stats.get(feature);
        if s.range == 0.0 {
            return Err(Error::ZeroRange(feature.name().to_string()));
        }
        let d = (f.get(feature) - s.mean) / s.range;
        sum += d * d;
    }
    Ok(sum.sqrt() / (0.5 * 6f64.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Values outside `[q1 - 1.5·IQR, q3 + 1.5·IQR]`, ascending.
    pub outliers: Vec<f64>,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::InsufficientRows { needed: 1, got: 0 });
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("value {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    Ok(BoxStats {
        min: sorted[0],
        q1,
        median: quantile_sorted(&sorted, 0.5),
        q3,
        max: sorted[sorted.len() - 1],
        outliers: sorted.iter().copied().filter(|v| *v < lo || *v > hi).collect(),
    })
}

/// Lower/upper bound used in [`BinPredicate::FeatureRange`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub inclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BinPredicate {
    All,
    FeatureRange { feature_index: usize, lower: Option<Bound>, upper: Option<Bound> },
    Mode(FailureMode),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub name: String,
    pub predicate: BinPredicate,
}

impl BinSpec {
    pub fn range(name: &str, feature: Feature, lower: Option<(f64, bool)>, upper: Option<(f64, bool)>) -> Self {
        let b = |o: Option<(f64, bool)>| o.map(|(value, inclusive)| Bound { value, inclusive });
        BinSpec {
            name: name.to_string(),
            predicate: BinPredicate::FeatureRange { feature_index: feature.index(), lower: b(lower), upper: b(upper) },
        }
    }

    pub fn mode(name: &str, mode: FailureMode) -> Self {
        BinSpec { name: name.to_string(), predicate: BinPredicate::Mode(mode) }
    }

    pub fn all(name: &str) -> Self {
        BinSpec { name: name.to_string(), predicate: BinPredicate::All }
    }

    pub fn contains(&self, r: &ColumnRecord) -> bool {
        match &self.predicate {
            BinPredicate::All => true,
            BinPredicate::Mode(m) => r.mode == Some(*m),
            BinPredicate::FeatureRange { feature_index, lower, upper } => {
                let v = r.features.to_array()[*feature_index];
                let above = lower.is_none_or(|b| if b.inclusive { v >= b.value } else { v > b.value });
                let below = upper.is_none_or(|b| if b.inclusive { v <= b.value } else { v < b.value });
                above && below
            }
        }
    }
}

/// Span-to-depth, axial-load and failure-mode bins used for rectangular
/// columns.
pub fn standard_bins() -> Vec<BinSpec> {
    use Feature::{AxialRatio, SpanDepth};
    vec![
        BinSpec::range("a/d<3", SpanDepth, None, Some((3.0, false))),
        BinSpec::range("3<=a/d<=5", SpanDepth, Some((3.0, true)), Some((5.0, true))),
        BinSpec::range("a/d>5", SpanDepth, Some((5.0, false)), None),
        BinSpec::range("axial<0.1", AxialRatio, None, Some((0.1, false))),
        BinSpec::range("0.1<=axial<=0.3", AxialRatio, Some((0.1, true)), Some((0.3, true))),
        BinSpec::range("axial>0.3", AxialRatio, Some((0.3, false)), None),
        BinSpec::mode("FC", FailureMode::FC),
        BinSpec::mode("FSC", FailureMode::FSC),
        BinSpec::mode("SC", FailureMode::SC),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinResult {
    pub name: String,
    pub n: usize,
    pub selected: Vec<String>,
    /// Model calibrated on the whole set, scored on the bin.
    pub whole_set: FitMetrics,
    /// Model calibrated and scored on the bin only.
    pub bin_fit: FitMetrics,
}

/// For each bin: rank the six features by p-value on the bin rows, keep the
/// top `k`, then score a whole-set fit and a bin-only fit on the bin rows.
pub fn bin_analysis(
    ds: &Dataset,
    shape: SectionShape,
    bins: &[BinSpec],
    target: Target,
    k: usize,
) -> Result<Vec<BinResult>> {
    let all: Vec<&ColumnRecord> = ds.of_shape(shape).filter(|r| r.target(target).is_some()).collect();
    let names = all_feature_names();
    let mut out = Vec::with_capacity(bins.len());
    for bin in bins {
        let rows: Vec<&ColumnRecord> = all.iter().copied().filter(|r| bin.contains(r)).collect();
        if rows.is_empty() {
            return Err(Error::EmptyBin(bin.name.clone()));
        }
        if rows.len() <= k + 2 {
            return Err(Error::InsufficientRows { needed: k + 3, got: rows.len() });
        }
        let (x_bin, y_bin) = DesignMatrix::from_records(&rows, &names, target)?;
        let selected = select_significant(&coefficient_pvalues(&x_bin, &y_bin)?, k)?;

        let (x_all, y_all) = DesignMatrix::from_records(&all, &selected, target)?;
        let whole = ols_fit(&x_all, &y_all)?;
        let x_bin = x_bin.columns(&selected)?;
        let local = ols_fit(&x_bin, &y_bin)?;
        out.push(BinResult {
            name: bin.name.clone(),
            n: rows.len(),
            whole_set: fit_metrics(&whole.predict(&x_bin)?, &y_bin)?,
            bin_fit: fit_metrics(&local.predict(&x_bin)?, &y_bin)?,
            selected,
        });
    }
    Ok(out)
}

pub fn bins_to_csv(results: &[BinResult]) -> String {
    let mut s = String::from("bin,n,features,r2_whole_set,r2_bin,mse_whole_set,mse_bin\n");
    for r in results {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.name,
            r.n,
            r.selected.join(";"),
            r.whole_set.r2,
            r.bin_fit.r2,
            r.whole_set.mse,
            r.bin_fit.mse
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

/// Error summaries indexed `[observed][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisclassTable {
    pub cells: [[Option<CellSummary>; 3]; 3],
}

impl MisclassTable {
    pub fn cell(&self, observed: FailureMode, predicted: FailureMode) -> Option<&CellSummary> {
        self.cells[observed.index()][predicted.index()].as_ref()
    }

    pub fn total(&self) -> usize {
        self.cells.iter().flatten().flatten().map(|c| c.count).sum()
    }

    /// A cell is unconservative when the prediction is more ductile than
    /// the observed mode.
    pub fn is_unconservative(observed: FailureMode, predicted: FailureMode) -> bool {
        predicted.more_ductile_than(observed)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("observed,predicted,count,min,max,mean,median,unconservative\n");
        for o in FailureMode::ALL {
            for p in FailureMode::ALL {
                let flag = Self::is_unconservative(o, p);
                match self.cell(o, p) {
                    Some(c) => s.push_str(&format!("{o},{p},{},{},{},{},{},{flag}\n", c.count, c.min, c.max, c.mean, c.median)),
                    None => s.push_str(&format!("{o},{p},0,,,,,{flag}\n")),
                }
            }
        }
        s
    }
}

/// Groups MP errors by (observed mode, predicted mode).
pub fn misclass_error_table(
    records: &[&ColumnRecord],
    predicted: &[FailureMode],
    errors: &[f64],
) -> Result<MisclassTable> {
    if records.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: records.len(), right: predicted.len() });
    }
    if records.len() != errors.len() {
        return Err(Error::LengthMismatch { left: records.len(), right: errors.len() });
    }
    let mut groups: [[Vec<f64>; 3]; 3] = Default::default();
    for ((r, p), e) in records.iter().zip(predicted).zip(errors) {
        let observed = r.mode.ok_or_else(|| Error::MissingLabel(r.id.clone()))?;
        groups[observed.index()][p.index()].push(*e);
    }
    let cells = groups.map(|row| {
        row.map(|mut v| {
            if v.is_empty() {
                return None;
            }
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
            Some(CellSummary { count: n, min: v[0], max: v[n - 1], mean: v.iter().sum::<f64>() / n as f64, median })
        })
    });
    Ok(MisclassTable { cells })
}
