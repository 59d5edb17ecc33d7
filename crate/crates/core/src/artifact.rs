//! Versioned JSON model artifacts.
//!
//! An artifact is a JSON object with a fixed field order; payload keys are
//! sorted. Numbers are written in shortest round-trip form, so loading and
//! saving again reproduces the same bytes.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifier::OvaModel;
use crate::data::{ColumnFeatures, SectionShape};
use crate::error::{Error, Result};
use crate::estimators::{ClassScores, Estimate, EstimatorFamily};
use crate::gpr::{GprModel, SqExpKernel, TrainedGpr};
use crate::linear::LinearModel;
use crate::nn::{Dense, Mlp, MlpConfig, TrainedMlp};
use crate::preprocess::Standardizer;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelType {
    Gm,
    Mlr,
    Prm,
    Rlr,
    LinearTrained,
    Gpr,
    Mlp,
    Ova,
}

impl ModelType {
    pub fn name(self) -> &'static str {
        match self {
            ModelType::Gm => "gm",
            ModelType::Mlr => "mlr",
            ModelType::Prm => "prm",
            ModelType::Rlr => "rlr",
            ModelType::LinearTrained => "linear-trained",
            ModelType::Gpr => "gpr",
            ModelType::Mlp => "mlp",
            ModelType::Ova => "ova",
        }
    }

    fn closed_form(self) -> Option<EstimatorFamily> {
        match self {
            ModelType::Gm => Some(EstimatorFamily::Gm),
            ModelType::Mlr => Some(EstimatorFamily::Mlr),
            ModelType::Prm => Some(EstimatorFamily::Prm),
            ModelType::Rlr => Some(EstimatorFamily::Rlr),
            _ => None,
        }
    }
}

impl fmt::Display for ModelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What an artifact predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactTarget {
    A,
    B,
    Mode,
}

impl ArtifactTarget {
    pub fn name(self) -> &'static str {
        match self {
            ArtifactTarget::A => "a",
            ArtifactTarget::B => "b",
            ArtifactTarget::Mode => "mode",
        }
    }
}

impl From<crate::data::Target> for ArtifactTarget {
    fn from(t: crate::data::Target) -> Self {
        match t {
            crate::data::Target::A => ArtifactTarget::A,
            crate::data::Target::B => ArtifactTarget::B,
        }
    }
}

impl FromStr for ArtifactTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(ArtifactTarget::A),
            "b" => Ok(ArtifactTarget::B),
            "mode" => Ok(ArtifactTarget::Mode),
            _ => Err(Error::InvalidParameter(format!("unknown target `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub format_version: u64,
    pub model_type: ModelType,
    pub shape: SectionShape,
    pub target: ArtifactTarget,
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardizer>,
    #[serde(default)]
    pub training_meta: ArtifactMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearPayload {
    feature_names: Vec<String>,
    intercept: bool,
    coefficients: Vec<f64>,
    lambda: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GprPayload {
    kernel: SqExpKernel,
    noise_var: f64,
    jitter: f64,
    y_mean: f64,
    inputs: Vec<Vec<f64>>,
    dual_weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerPayload {
    /// `fan_in` rows of `fan_out` weights.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpPayload {
    config: MlpConfig,
    augment: bool,
    layers: Vec<LayerPayload>,
}

fn to_payload<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payload types serialize")
}

fn matrix_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_matrix(rows: Vec<Vec<f64>>, what: &str) -> Result<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::ArityMismatch(format!("{what} row {i} has {} values, expected {cols}", r.len())));
    }
    let n = rows.len();
    Ok(Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).expect("rectangular rows"))
}

/// A decoded artifact ready for prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedModel {
    ClosedForm(EstimatorFamily),
    Linear(LinearModel),
    Gpr(TrainedGpr),
    Mlp(TrainedMlp),
    Ova(OvaModel),
}

impl LoadedModel {
    /// Raw regression output for one target; `None` for closed-form and
    /// classifier models.
    pub fn predict_value(&self, f: &ColumnFeatures) -> Result<Option<f64>> {
        f.validate()?;
        match self {
            LoadedModel::Linear(m) => m.predict_features(f).map(Some),
            LoadedModel::Gpr(m) => m.predict(&f.to_array()).map(|p| Some(p.mean)),
            LoadedModel::Mlp(m) => m.predict(f).map(Some),
            LoadedModel::ClosedForm(_) | LoadedModel::Ova(_) => Ok(None),
        }
    }

    pub fn estimate_closed_form(&self, f: &ColumnFeatures, shape: SectionShape) -> Result<Option<Estimate>> {
        match self {
            LoadedModel::ClosedForm(family) => family.estimate(f, shape).map(Some),
            _ => Ok(None),
        }
    }

    pub fn classify(&self, f: &ColumnFeatures) -> Result<Option<ClassScores>> {
        match self {
            LoadedModel::Ova(m) => m.predict_features(f).map(Some),
            _ => Ok(None),
        }
    }
}

impl ModelArtifact {
    fn new(model_type: ModelType, shape: SectionShape, target: ArtifactTarget, payload: Value) -> Self {
        ModelArtifact {
            format_version: FORMAT_VERSION,
            model_type,
            shape,
            target,
            payload,
            standardization: None,
            training_meta: ArtifactMeta::default(),
        }
    }

    /// Closed-form families carry no payload.
    pub fn closed_form(family: EstimatorFamily, shape: SectionShape, target: ArtifactTarget) -> Self {
        let model_type = match family {
            EstimatorFamily::Gm => ModelType::Gm,
            EstimatorFamily::Mlr => ModelType::Mlr,
            EstimatorFamily::Prm => ModelType::Prm,
            EstimatorFamily::Rlr => ModelType::Rlr,
        };
        ModelArtifact::new(model_type, shape, target, Value::Object(Default::default()))
    }

    pub fn linear(model: &LinearModel, shape: SectionShape, target: crate::data::Target) -> Self {
        let payload = to_payload(&LinearPayload {
            feature_names: model.feature_names.clone(),
            intercept: model.intercept,
            coefficients: model.coefficients.clone(),
            lambda: model.lambda,
        });
        let mut art = ModelArtifact::new(ModelType::LinearTrained, shape, target.into(), payload);
        art.training_meta.seed = model.meta.seed;
        art.training_meta.split = model.meta.split.clone();
        art
    }

    pub fn gpr(model: &TrainedGpr, shape: SectionShape, target: crate::data::Target) -> Self {
        let m = &model.model;
        let payload = to_payload(&GprPayload {
            kernel: m.kernel(),
            noise_var: m.noise_var(),
            jitter: m.jitter(),
            y_mean: model.y_mean,
            inputs: matrix_rows(m.inputs()),
            dual_weights: m.dual_weights().to_vec(),
        });
        let mut art = ModelArtifact::new(ModelType::Gpr, shape, target.into(), payload);
        art.standardization = Some(model.standardizer.clone());
        art
    }

    pub fn mlp(model: &TrainedMlp, shape: SectionShape, target: crate::data::Target) -> Self {
        let config = *model.net.config();
        let layers = model
            .net
            .layers()
            .iter()
            .map(|l| LayerPayload { weights: matrix_rows(&l.weights), bias: l.bias.to_vec() })
            .collect();
        let payload = to_payload(&MlpPayload { config, augment: model.augment, layers });
        let mut art = ModelArtifact::new(ModelType::Mlp, shape, target.into(), payload);
        art.standardization = Some(model.standardizer.clone());
        art.training_meta.seed = Some(config.seed);
        art.training_meta.epochs = Some(config.epochs);
        art.training_meta.learning_rate = Some(config.learning_rate);
        art
    }

    pub fn ova(model: &OvaModel, shape: SectionShape) -> Self {
        let mut art = ModelArtifact::new(ModelType::Ova, shape, ArtifactTarget::Mode, to_payload(model));
        if let Some(meta) = model.meta {
            art.training_meta.seed = Some(meta.seed);
            art.training_meta.iterations = Some(meta.iterations);
            art.training_meta.learning_rate = Some(meta.learning_rate);
        }
        art
    }

    fn decode<T: DeserializeOwned>(&self) -> Result<T> {
        T::deserialize(&self.payload)
            .map_err(|e| Error::CorruptPayload(format!("{} payload: {e}", self.model_type)))
    }

    fn standardizer(&self, dim: usize) -> Result<Standardizer> {
        let s = self
            .standardization
            .clone()
            .ok_or_else(|| Error::CorruptPayload(format!("{} artifact lacks standardization", self.model_type)))?;
        s.validate()?;
        if s.dim() != dim {
            return Err(Error::ArityMismatch(format!("standardization has {} columns, model expects {dim}", s.dim())));
        }
        Ok(s)
    }

    /// Decodes and structurally validates the payload.
    pub fn to_model(&self) -> Result<LoadedModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        let mode_target = self.target == ArtifactTarget::Mode;
        if mode_target != (self.model_type == ModelType::Ova) {
            return Err(Error::CorruptPayload(format!(
                "{} artifact cannot have target `{}`",
                self.model_type,
                self.target.name()
            )));
        }
        if let Some(family) = self.model_type.closed_form() {
            return match &self.payload {
                Value::Object(m) if m.is_empty() => Ok(LoadedModel::ClosedForm(family)),
                _ => Err(Error::CorruptPayload("closed-form artifacts carry an empty payload".into())),
            };
        }
        match self.model_type {
            ModelType::LinearTrained => {
                let p: LinearPayload = self.decode()?;
                let model = LinearModel {
                    feature_names: p.feature_names,
                    intercept: p.intercept,
                    coefficients: p.coefficients,
                    lambda: p.lambda,
                    meta: crate::linear::TrainingMeta {
                        seed: self.training_meta.seed,
                        split: self.training_meta.split.clone(),
                    },
                };
                model.validate()?;
                Ok(LoadedModel::Linear(model))
            }
            ModelType::Gpr => {
                let p: GprPayload = self.decode()?;
                let inputs = rows_matrix(p.inputs, "gpr input")?;
                if inputs.ncols() != 6 {
                    return Err(Error::ArityMismatch(format!("gpr inputs have {} columns, expected 6", inputs.ncols())));
                }
                if !p.y_mean.is_finite() || inputs.iter().chain(&p.dual_weights).any(|v| !v.is_finite()) {
                    return Err(Error::CorruptPayload("non-finite gpr value".into()));
                }
                let standardizer = self.standardizer(6)?;
                let model = GprModel::from_parts(inputs, Array1::from(p.dual_weights), p.kernel, p.noise_var, p.jitter)?;
                Ok(LoadedModel::Gpr(TrainedGpr { standardizer, y_mean: p.y_mean, model }))
            }
            ModelType::Mlp => {
                let p: MlpPayload = self.decode()?;
                let expected = if p.augment { 8 } else { 6 };
                if p.config.input_dim != expected {
                    return Err(Error::ArityMismatch(format!(
                        "network input_dim {} but features give {expected}",
                        p.config.input_dim
                    )));
                }
                let layers = p
                    .layers
                    .into_iter()
                    .enumerate()
                    .map(|(i, l)| {
                        Ok(Dense { weights: rows_matrix(l.weights, &format!("layer {i}"))?, bias: Array1::from(l.bias) })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let net = Mlp::from_layers(p.config, layers)?;
                let standardizer = self.standardizer(expected)?;
                Ok(LoadedModel::Mlp(TrainedMlp { standardizer, net, augment: p.augment }))
            }
            ModelType::Ova => {
                let m: OvaModel = self.decode()?;
                m.validate()?;
                Ok(LoadedModel::Ova(m))
            }
            _ => unreachable!("closed-form handled above"),
        }
    }
}

/// Canonical pretty-printed JSON with a trailing newline.
pub fn save_model(artifact: &ModelArtifact) -> Result<Vec<u8>> {
    artifact.to_model()?;
    let mut bytes = serde_json::to_vec_pretty(artifact).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Parses and validates an artifact. The version is checked before the
/// rest of the document is interpreted.
pub fn load_model(bytes: &[u8]) -> Result<ModelArtifact> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| Error::CorruptPayload(format!("invalid JSON: {e}")))?;
    match value.get("format_version").and_then(Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::UnsupportedVersion(v)),
        None => return Err(Error::CorruptPayload("missing or non-integer format_version".into())),
    }
    let artifact: ModelArtifact =
        serde_json::from_value(value).map_err(|e| Error::CorruptPayload(format!("artifact: {e}")))?;
    artifact.to_model()?;
    Ok(artifact)
}
