//! Prediction service: an immutable model registry and the HTTP JSON API.
//!
//! Routes: `GET /api/v1/health`, `POST /api/v1/predict`,
//! `POST /api/v1/classify`, `GET /api/v1/models`. Failures return status 400
//! with `{"error": <kind>, "message": <text>}`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifact::{load_model, ArtifactTarget, LoadedModel, ModelArtifact, ModelType};
use crate::data::{ColumnFeatures, Dataset, DatasetStats, FailureMode, SectionShape};
use crate::error::{Error, Result};
use crate::estimators::{classify_fixed, ClassScores, Estimate, EstimatorFamily};
use crate::evaluation::separation_param;

/// Name of the built-in classifier.
pub const FIXED_CLASSIFIER: &str = "fixed";

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    model_type: ModelType,
    model: LoadedModel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub model_type: ModelType,
    pub shape: SectionShape,
    pub target: ArtifactTarget,
}

/// Models keyed by (group name, shape, target), plus optional dataset
/// statistics for the separation parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    models: BTreeMap<(String, SectionShape, ArtifactTarget), Entry>,
    stats: BTreeMap<SectionShape, DatasetStats>,
}

fn reserved(name: &str) -> bool {
    name == FIXED_CLASSIFIER || EstimatorFamily::from_str(name).is_ok()
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    /// Adds an artifact under `name`; shape and target come from the
    /// artifact itself.
    pub fn insert(&mut self, name: &str, artifact: &ModelArtifact) -> Result<()> {
        if name.is_empty() || reserved(name) {
            return Err(Error::InvalidParameter(format!("model name `{name}` is empty or reserved")));
        }
        let model = artifact.to_model()?;
        let key = (name.to_string(), artifact.shape, artifact.target);
        if self.models.contains_key(&key) {
            return Err(Error::DuplicateId(format!("{name} {} {}", artifact.shape.code(), artifact.target.name())));
        }
        self.models.insert(key, Entry { model_type: artifact.model_type, model });
        Ok(())
    }

    /// Loads every `*.json` file in `dir`. The group name is the file name
    /// up to its first dot, so `nn.R.a.json` and `nn.R.b.json` form `nn`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut reg = Registry::new();
        for path in paths {
            let file = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
            let name = file.split('.').next().unwrap_or_default().to_string();
            let artifact = load_model(&std::fs::read(&path)?)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            reg.insert(&name, &artifact)?;
        }
        Ok(reg)
    }

    /// Keeps statistics for each shape where the separation parameter is
    /// defined (at least two rows, no zero-range feature).
    pub fn with_dataset(mut self, ds: &Dataset) -> Self {
        for shape in SectionShape::ALL {
            if let Ok(stats) = ds.stats(shape) {
                if stats.zero_range_features().is_empty() {
                    self.stats.insert(shape, stats);
                }
            }
        }
        self
    }

    pub fn stats(&self, shape: SectionShape) -> Option<&DatasetStats> {
        self.stats.get(&shape)
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        self.models
            .iter()
            .map(|((name, shape, target), e)| ModelInfo {
                name: name.clone(),
                model_type: e.model_type,
                shape: *shape,
                target: *target,
            })
            .collect()
    }

    fn get(&self, name: &str, shape: SectionShape, target: ArtifactTarget) -> Option<&LoadedModel> {
        self.models.get(&(name.to_string(), shape, target)).map(|e| &e.model)
    }

    fn has_group(&self, name: &str) -> bool {
        self.models.keys().any(|(n, _, _)| n == name)
    }

    /// `a` and `b` from a closed-form family or a registry group.
    pub fn estimate(&self, name: &str, f: &ColumnFeatures, shape: SectionShape) -> Result<Estimate> {
        if let Ok(family) = EstimatorFamily::from_str(name) {
            return family.estimate(f, shape);
        }
        if !self.has_group(name) {
            return Err(Error::UnknownModel(name.to_string()));
        }
        let mut raw = [0.0; 2];
        for (slot, target) in raw.iter_mut().zip([ArtifactTarget::A, ArtifactTarget::B]) {
            let model = self
                .get(name, shape, target)
                .ok_or_else(|| Error::UnknownModel(format!("{name}.{}.{}", shape.code(), target.name())))?;
            *slot = match model {
                LoadedModel::ClosedForm(family) => {
                    let e = family.estimate(f, shape)?;
                    if target == ArtifactTarget::A { e.raw_a } else { e.raw_b }
                }
                other => other.predict_value(f)?.expect("regression model"),
            };
        }
        Ok(Estimate::from_raw(raw[0], raw[1]))
    }

    pub fn classify(&self, name: Option<&str>, f: &ColumnFeatures, shape: SectionShape) -> Result<ClassScores> {
        match name {
            None | Some(FIXED_CLASSIFIER) => classify_fixed(f, shape),
            Some(name) => match self.get(name, shape, ArtifactTarget::Mode) {
                Some(model) => Ok(model.classify(f)?.expect("mode artifacts are classifiers")),
                None => Err(Error::UnknownModel(format!("{name}.{}.mode", shape.code()))),
            },
        }
    }
}

fn default_models() -> Vec<String> {
    vec![EstimatorFamily::Gm.name().to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
    pub shape: SectionShape,
    pub features: ColumnFeatures,
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
    pub shape: SectionShape,
    pub features: ColumnFeatures,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: String,
    pub a: f64,
    pub b: f64,
    pub raw_a: f64,
    pub raw_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub classifier: String,
    pub scores: [f64; 3],
    pub probabilities: [f64; 3],
    pub mode: FailureMode,
}

impl Classification {
    fn new(classifier: Option<&str>, s: ClassScores) -> Self {
        Classification {
            classifier: classifier.unwrap_or(FIXED_CLASSIFIER).to_string(),
            scores: s.scores,
            probabilities: s.probabilities,
            mode: s.predicted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
    pub shape: SectionShape,
    pub results: Vec<ModelResult>,
    pub classification: Classification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
    pub shape: SectionShape,
    pub classification: Classification,
}

fn ensure_finite(values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput("model produced a non-finite value".into()))
    }
}

pub fn handle_predict(req: &PredictRequest, registry: &Registry) -> Result<PredictResponse> {
    req.features.validate()?;
    let mut results = Vec::with_capacity(req.models.len());
    for name in &req.models {
        let e = registry.estimate(name, &req.features, req.shape)?;
        ensure_finite([e.a, e.b, e.raw_a, e.raw_b])?;
        results.push(ModelResult { model: name.clone(), a: e.a, b: e.b, raw_a: e.raw_a, raw_b: e.raw_b });
    }
    let scores = registry.classify(req.classifier.as_deref(), &req.features, req.shape)?;
    ensure_finite(scores.scores)?;
    let x_test = registry.stats(req.shape).map(|s| separation_param(&req.features, s)).transpose()?;
    Ok(PredictResponse {
        id: req.id.clone(),
        shape: req.shape,
        results,
        classification: Classification::new(req.classifier.as_deref(), scores),
        x_test,
    })
}

pub fn handle_classify(req: &ClassifyRequest, registry: &Registry) -> Result<ClassifyResponse> {
    req.features.validate()?;
    let scores = registry.classify(req.classifier.as_deref(), &req.features, req.shape)?;
    ensure_finite(scores.scores)?;
    Ok(ClassifyResponse {
        id: req.id.clone(),
        shape: req.shape,
        classification: Classification::new(req.classifier.as_deref(), scores),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

struct ApiError(ErrorBody);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(ErrorBody { error: e.kind().to_string(), message: e.to_string() })
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError(ErrorBody { error: "InvalidRequest".into(), message: r.body_text() })
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (StatusCode::BAD_REQUEST, Json(self.0)).into_response()
    }
}

type Shared = Arc<Registry>;

async fn health() -> Json<Value> {
    Json(serde_json::json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn predict(
    State(reg): State<Shared>,
    body: std::result::Result<Json<PredictRequest>, JsonRejection>,
) -> std::result::Result<Json<PredictResponse>, ApiError> {
    let Json(req) = body?;
    Ok(Json(handle_predict(&req, &reg)?))
}

async fn classify(
    State(reg): State<Shared>,
    body: std::result::Result<Json<ClassifyRequest>, JsonRejection>,
) -> std::result::Result<Json<ClassifyResponse>, ApiError> {
    let Json(req) = body?;
    Ok(Json(handle_classify(&req, &reg)?))
}

async fn models(State(reg): State<Shared>) -> Json<Value> {
    let closed: Vec<&str> = [EstimatorFamily::Gm, EstimatorFamily::Mlr, EstimatorFamily::Prm, EstimatorFamily::Rlr]
        .iter()
        .map(|f| f.name())
        .collect();
    let stats: Vec<&str> = reg.stats.keys().map(|s| s.code()).collect();
    Json(serde_json::json!({
        "closed_form": closed,
        "classifiers": [FIXED_CLASSIFIER],
        "artifacts": reg.list(),
        "stats_shapes": stats,
    }))
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/predict", post(predict))
        .route("/api/v1/classify", post(classify))
        .route("/api/v1/models", get(models))
        .with_state(registry)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, registry: Arc<Registry>) -> std::io::Result<()> {
    axum::serve(listener, router(registry)).await
}
