//! Column test records, CSV ingestion, summary statistics and the seeded
//! synthetic fixture used in place of the experimental database.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators;

/// Exact, ordered CSV header of the dataset format.
pub const CSV_HEADER: [&str; 12] = [
    "id",
    "shape",
    "a_over_d",
    "axial_ratio",
    "rho_l",
    "rho_t",
    "s_over_d",
    "vy_over_vo",
    "mp_a_rad",
    "mp_b_rad",
    "b_source",
    "failure_mode",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SectionShape {
    #[serde(rename = "R")]
    Rectangular,
    #[serde(rename = "C")]
    Circular,
}

impl SectionShape {
    pub const ALL: [SectionShape; 2] = [SectionShape::Rectangular, SectionShape::Circular];

    pub fn code(self) -> &'static str {
        match self {
            SectionShape::Rectangular => "R",
            SectionShape::Circular => "C",
        }
    }
}

impl fmt::Display for SectionShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SectionShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(SectionShape::Rectangular),
            "C" | "c" => Ok(SectionShape::Circular),
            _ => Err(Error::InvalidParameter(format!("unknown shape {s:?} (expected R or C)"))),
        }
    }
}

/// One of the six nondimensional inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    SpanDepth,
    AxialRatio,
    RhoL,
    RhoT,
    SpacingDepth,
    ShearRatio,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::SpanDepth,
        Feature::AxialRatio,
        Feature::RhoL,
        Feature::RhoT,
        Feature::SpacingDepth,
        Feature::ShearRatio,
    ];

    /// Column name, shared by the CSV schema, model artifacts and the HTTP API.
    pub fn name(self) -> &'static str {
        match self {
            Feature::SpanDepth => "a_over_d",
            Feature::AxialRatio => "axial_ratio",
            Feature::RhoL => "rho_l",
            Feature::RhoT => "rho_t",
            Feature::SpacingDepth => "s_over_d",
            Feature::ShearRatio => "vy_over_vo",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }

    fn must_be_positive(self) -> bool {
        matches!(self, Feature::SpanDepth | Feature::SpacingDepth)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The six nondimensional ratios describing a column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnFeatures {
    /// Shear span-to-depth ratio a/d.
    #[serde(rename = "a_over_d")]
    pub span_depth: f64,
    /// Axial load ratio P/(A_g f'_c).
    pub axial_ratio: f64,
    /// Longitudinal reinforcement ratio.
    pub rho_l: f64,
    /// Transverse reinforcement ratio A_v/(b_w s).
    pub rho_t: f64,
    /// Hoop spacing to effective depth s/d.
    #[serde(rename = "s_over_d")]
    pub spacing_depth: f64,
    /// Shear demand at flexural yield over nominal shear strength V_y/V_o.
    #[serde(rename = "vy_over_vo")]
    pub shear_ratio: f64,
}

impl ColumnFeatures {
    pub fn new(
        span_depth: f64,
        axial_ratio: f64,
        rho_l: f64,
        rho_t: f64,
        spacing_depth: f64,
        shear_ratio: f64,
    ) -> Result<Self> {
        let f = ColumnFeatures {
            span_depth,
            axial_ratio,
            rho_l,
            rho_t,
            spacing_depth,
            shear_ratio,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn from_array(v: [f64; 6]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.span_depth,
            self.axial_ratio,
            self.rho_l,
            self.rho_t,
            self.spacing_depth,
            self.shear_ratio,
        ]
    }

    pub fn get(&self, feature: Feature) -> f64 {
        self.to_array()[feature.index()]
    }

    /// Checks finiteness first, then sign constraints.
    pub fn validate(&self) -> Result<()> {
        let values = self.to_array();
        for feature in Feature::ALL {
            if !values[feature.index()].is_finite() {
                return Err(Error::NonFiniteInput(feature.name().to_string()));
            }
        }
        for feature in Feature::ALL {
            let v = values[feature.index()];
            if v < 0.0 {
                return Err(Error::InvalidFeatures(format!("{} must not be negative", feature.name())));
            }
            if feature.must_be_positive() && v <= 0.0 {
                return Err(Error::InvalidFeatures(format!("{} must be strictly positive", feature.name())));
            }
        }
        Ok(())
    }
}

/// Plastic rotations (radians) satisfying `0 <= a <= b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelingParams {
    pub a: f64,
    pub b: f64,
}

impl ModelingParams {
    /// Applies the clamps `a >= 0` then `b >= a`.
    pub fn clamp(raw_a: f64, raw_b: f64) -> Self {
        let a = raw_a.max(0.0);
        ModelingParams { a, b: raw_b.max(a) }
    }
}

/// Observed or predicted failure mode, ordered from most ductile to most brittle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureMode {
    FC,
    FSC,
    SC,
}

impl FailureMode {
    pub const ALL: [FailureMode; 3] = [FailureMode::FC, FailureMode::FSC, FailureMode::SC];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<FailureMode> {
        FailureMode::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            FailureMode::FC => "FC",
            FailureMode::FSC => "FSC",
            FailureMode::SC => "SC",
        }
    }

    /// True if `self` is a more ductile mode than `other`.
    pub fn more_ductile_than(self, other: FailureMode) -> bool {
        self.index() < other.index()
    }
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FailureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "FC" => Ok(FailureMode::FC),
            "FSC" => Ok(FailureMode::FSC),
            "SC" => Ok(FailureMode::SC),
            _ => Err(Error::InvalidParameter(format!("unknown failure mode {s:?}"))),
        }
    }
}

/// Provenance of the `b` rotation: measured at axial failure, or a lower
/// bound generated from a test stopped before axial failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BSource {
    B1Measured,
    B2Generated,
    NotAvailable,
}

impl BSource {
    pub fn code(self) -> &'static str {
        match self {
            BSource::B1Measured => "B1",
            BSource::B2Generated => "B2",
            BSource::NotAvailable => "NA",
        }
    }

    pub fn is_lower_bound(self) -> bool {
        self == BSource::B2Generated
    }
}

/// Which modeling parameter a regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    A,
    B,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::A => "a",
            Target::B => "b",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(Target::A),
            "b" => Ok(Target::B),
            _ => Err(Error::InvalidParameter(format!("unknown target {s:?} (expected a or b)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRecord {
    pub id: String,
    pub shape: SectionShape,
    pub features: ColumnFeatures,
    pub mp_a: Option<f64>,
    pub mp_b: Option<f64>,
    pub b_source: BSource,
    pub mode: Option<FailureMode>,
}

impl ColumnRecord {
    pub fn target(&self, target: Target) -> Option<f64> {
        match target {
            Target::A => self.mp_a,
            Target::B => self.mp_b,
        }
    }
}

/// A validated, immutable collection of records with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    records: Vec<ColumnRecord>,
}

impl Dataset {
    /// Validates every record with the same rules as [`parse_dataset`].
    pub fn from_records(records: Vec<ColumnRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            validate_record(i + 1, r)?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Dataset { records })
    }

    pub fn records(&self) -> &[ColumnRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn of_shape(&self, shape: SectionShape) -> impl Iterator<Item = &ColumnRecord> {
        self.records.iter().filter(move |r| r.shape == shape)
    }

    pub fn stats(&self, shape: SectionShape) -> Result<DatasetStats> {
        dataset_stats(self, shape)
    }

    /// Serializes to the canonical CSV form; `parse_dataset` inverts it exactly.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("write to Vec");
        for r in &self.records {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let f = r.features.to_array();
            let row = [
                r.id.clone(),
                r.shape.code().to_string(),
                f[0].to_string(),
                f[1].to_string(),
                f[2].to_string(),
                f[3].to_string(),
                f[4].to_string(),
                f[5].to_string(),
                opt(r.mp_a),
                opt(r.mp_b),
                r.b_source.code().to_string(),
                r.mode.map(|m| m.code().to_string()).unwrap_or_else(|| "NA".to_string()),
            ];
            w.write_record(&row).expect("write to Vec");
        }
        String::from_utf8(w.into_inner().expect("flush Vec")).expect("csv output is utf-8")
    }
}

fn validate_record(row: usize, r: &ColumnRecord) -> Result<()> {
    let values = r.features.to_array();
    for feature in Feature::ALL {
        let v = values[feature.index()];
        if !v.is_finite() {
            return Err(Error::NonNumericCell {
                row,
                column: feature.name().to_string(),
                value: v.to_string(),
            });
        }
        if v < 0.0 {
            return Err(Error::NegativeRatio { row, column: feature.name().to_string() });
        }
        if feature.must_be_positive() && v == 0.0 {
            return Err(Error::NonPositiveRatio { row, column: feature.name().to_string() });
        }
    }
    for (column, v) in [("mp_a_rad", r.mp_a), ("mp_b_rad", r.mp_b)] {
        if let Some(v) = v {
            if !v.is_finite() {
                return Err(Error::NonNumericCell { row, column: column.to_string(), value: v.to_string() });
            }
            if v < 0.0 {
                return Err(Error::NegativeRatio { row, column: column.to_string() });
            }
        }
    }
    if let (Some(a), Some(b)) = (r.mp_a, r.mp_b) {
        if b < a {
            return Err(Error::BLessThanA { row });
        }
    }
    Ok(())
}

/// Parses and validates a dataset in the CSV schema of [`CSV_HEADER`].
///
/// Columns are located by name; all twelve must be present. Empty cells mean
/// "absent" for the optional columns.
pub fn parse_dataset(csv_text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut index = [0usize; 12];
    for (slot, name) in index.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let cell = |col: usize| row.get(index[col]).unwrap_or("");
        let number = |col: usize| -> Result<f64> {
            let raw = cell(col);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonNumericCell {
                    row: row_no,
                    column: CSV_HEADER[col].to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        let optional = |col: usize| -> Result<Option<f64>> {
            if cell(col).is_empty() {
                Ok(None)
            } else {
                number(col).map(Some)
            }
        };
        let invalid = |col: usize| Error::InvalidCell {
            row: row_no,
            column: CSV_HEADER[col].to_string(),
            value: cell(col).to_string(),
        };

        let id = cell(0).to_string();
        if id.is_empty() {
            return Err(invalid(0));
        }
        let shape = match cell(1) {
            "R" => SectionShape::Rectangular,
            "C" => SectionShape::Circular,
            _ => return Err(invalid(1)),
        };
        let mut values = [0.0; 6];
        for (k, v) in values.iter_mut().enumerate() {
            *v = number(2 + k)?;
        }
        let features = ColumnFeatures {
            span_depth: values[0],
            axial_ratio: values[1],
            rho_l: values[2],
            rho_t: values[3],
            spacing_depth: values[4],
            shear_ratio: values[5],
        };
        let mp_a = optional(8)?;
        let mp_b = optional(9)?;
        let b_source = match cell(10) {
            "B1" => BSource::B1Measured,
            "B2" => BSource::B2Generated,
            "NA" | "" => BSource::NotAvailable,
            _ => return Err(invalid(10)),
        };
        let mode = match cell(11) {
            "FC" => Some(FailureMode::FC),
            "FSC" => Some(FailureMode::FSC),
            "SC" => Some(FailureMode::SC),
            "NA" | "" => None,
            _ => return Err(invalid(11)),
        };
        let record = ColumnRecord { id, shape, features, mp_a, mp_b, b_source, mode };
        validate_record(row_no, &record)?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(Dataset { records })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Per-feature summary over the rows of one section shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub shape: SectionShape,
    pub n: usize,
    pub features: [FeatureStats; 6],
}

impl DatasetStats {
    pub fn get(&self, feature: Feature) -> &FeatureStats {
        &self.features[feature.index()]
    }

    /// Features whose range is zero; the separation parameter is undefined
    /// while any are present.
    pub fn zero_range_features(&self) -> Vec<Feature> {
        Feature::ALL.into_iter().filter(|f| self.get(*f).range == 0.0).collect()
    }

    pub fn means(&self) -> [f64; 6] {
        self.features.map(|s| s.mean)
    }
}

/// Order-independent statistics of a sample: values are sorted before
/// summation so any permutation of the input yields identical bits.
pub(crate) fn summarize(values: &mut [f64]) -> FeatureStats {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let min = values[0];
    let max = values[values.len() - 1];
    let mean = (values.iter().sum::<f64>() / n).clamp(min, max);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    FeatureStats { mean, min, max, range: max - min, std: var.sqrt() }
}

pub fn dataset_stats(ds: &Dataset, shape: SectionShape) -> Result<DatasetStats> {
    let rows: Vec<&ColumnRecord> = ds.of_shape(shape).collect();
    if rows.len() < 2 {
        return Err(Error::InsufficientRows { needed: 2, got: rows.len() });
    }
    let features = Feature::ALL.map(|f| {
        let mut values: Vec<f64> = rows.iter().map(|r| r.features.get(f)).collect();
        summarize(&mut values)
    });
    Ok(DatasetStats { shape, n: rows.len(), features })
}

/// Sampling box for synthetic features, in `Feature::ALL` order.
pub const FIXTURE_RANGES: [(f64, f64); 6] = [
    (1.0, 8.0),
    (0.0, 0.7),
    (0.005, 0.04),
    (0.0005, 0.02),
    (0.1, 1.0),
    (0.2, 1.5),
];

/// Noise added to the generated rotations (radians).
pub const FIXTURE_NOISE_SD: f64 = 0.005;

/// Deterministic synthetic dataset.
///
/// Features are uniform over [`FIXTURE_RANGES`]; rotations follow the fixed
/// three-feature linear estimators plus Gaussian noise, clamped so that
/// `0 <= a <= b`; the mode is the fixed classifier's prediction.
pub fn generate_fixture(seed: u64, n_rect: usize, n_circ: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, FIXTURE_NOISE_SD).expect("valid normal");
    let mut records = Vec::with_capacity(n_rect + n_circ);
    let plan = [(SectionShape::Rectangular, n_rect), (SectionShape::Circular, n_circ)];
    for (shape, count) in plan {
        for i in 0..count {
            let mut v = [0.0; 6];
            for (slot, (lo, hi)) in v.iter_mut().zip(FIXTURE_RANGES) {
                *slot = rng.random_range(lo..hi);
            }
            let features = ColumnFeatures::from_array(v).expect("fixture ranges are valid");
            let base = estimators::estimate_mlr_fixed(&features, shape).expect("valid features");
            let params = ModelingParams::clamp(base.raw_a + noise.sample(&mut rng), base.raw_b + noise.sample(&mut rng));
            let mode = estimators::classify_fixed(&features, shape).expect("valid features").predicted;
            let b_source = if rng.random_bool(0.1) { BSource::B1Measured } else { BSource::B2Generated };
            records.push(ColumnRecord {
                id: format!("{}{:04}", shape.code(), i + 1),
                shape,
                features,
                mp_a: Some(params.a),
                mp_b: Some(params.b),
                b_source,
                mode: Some(mode),
            });
        }
    }
    Dataset { records }
}
