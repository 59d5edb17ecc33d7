//! C ABI over the `colmp` estimators, classifiers and model artifacts.
//!
//! Every fallible function returns a [`ColmpStatus`]; on failure a message
//! is available from [`colmp_last_error_message`] on the same thread.
//! Models and datasets are opaque handles released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use colmp::artifact::{load_model, LoadedModel, ModelArtifact};
use colmp::estimators::{classify_fixed, ClassScores, EstimatorFamily};
use colmp::evaluation::separation_param;
use colmp::{parse_dataset, ColumnFeatures, Dataset, Error, SectionShape};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColmpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidFeatures = 2,
    InvalidArgument = 3,
    ParseError = 4,
    IoError = 5,
    UnknownModel = 6,
    ArtifactError = 7,
    NumericError = 8,
    WrongModelKind = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColmpShape {
    Rectangular = 0,
    Circular = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColmpFamily {
    Gm = 0,
    Mlr = 1,
    Prm = 2,
    Rlr = 3,
}

/// Failure mode in ductility order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColmpMode {
    Fc = 0,
    Fsc = 1,
    Sc = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ColmpFeatures {
    pub span_depth: f64,
    pub axial_ratio: f64,
    pub rho_l: f64,
    pub rho_t: f64,
    pub spacing_depth: f64,
    pub shear_ratio: f64,
}

/// Clamped rotations `a`, `b` (radians) and the unclamped equation values.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ColmpParams {
    pub a: f64,
    pub b: f64,
    pub raw_a: f64,
    pub raw_b: f64,
}

/// Scores and sigmoid probabilities in FC, FSC, SC order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColmpClassScores {
    pub scores: [f64; 3],
    pub probabilities: [f64; 3],
    pub mode: ColmpMode,
}

/// Opaque loaded model artifact.
pub struct ColmpModel {
    artifact: ModelArtifact,
    model: LoadedModel,
}

/// Opaque parsed dataset.
pub struct ColmpDataset {
    data: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ColmpStatus {
    match e {
        Error::NonFiniteInput(_) | Error::InvalidFeatures(_) => ColmpStatus::InvalidFeatures,
        Error::MissingColumn(_)
        | Error::NonNumericCell { .. }
        | Error::NegativeRatio { .. }
        | Error::NonPositiveRatio { .. }
        | Error::InvalidCell { .. }
        | Error::DuplicateId(_)
        | Error::BLessThanA { .. }
        | Error::Csv(_) => ColmpStatus::ParseError,
        Error::Io(_) => ColmpStatus::IoError,
        Error::UnknownModel(_) => ColmpStatus::UnknownModel,
        Error::UnsupportedVersion(_) | Error::CorruptPayload(_) | Error::ArityMismatch(_) => ColmpStatus::ArtifactError,
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } | Error::LengthMismatch { .. } => {
            ColmpStatus::InvalidArgument
        }
        _ => ColmpStatus::NumericError,
    }
}

/// Runs `f`, recording any error or panic for [`colmp_last_error_message`].
fn guard(f: impl FnOnce() -> Result<(), (ColmpStatus, String)>) -> ColmpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ColmpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ColmpStatus::Panic
        }
    }
}

fn lib(e: Error) -> (ColmpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ColmpStatus, String) {
    (ColmpStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (ColmpStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

impl From<ColmpShape> for SectionShape {
    fn from(s: ColmpShape) -> Self {
        match s {
            ColmpShape::Rectangular => SectionShape::Rectangular,
            ColmpShape::Circular => SectionShape::Circular,
        }
    }
}

impl From<ColmpFamily> for EstimatorFamily {
    fn from(f: ColmpFamily) -> Self {
        match f {
            ColmpFamily::Gm => EstimatorFamily::Gm,
            ColmpFamily::Mlr => EstimatorFamily::Mlr,
            ColmpFamily::Prm => EstimatorFamily::Prm,
            ColmpFamily::Rlr => EstimatorFamily::Rlr,
        }
    }
}

impl From<&ColmpFeatures> for ColumnFeatures {
    fn from(f: &ColmpFeatures) -> Self {
        ColumnFeatures {
            span_depth: f.span_depth,
            axial_ratio: f.axial_ratio,
            rho_l: f.rho_l,
            rho_t: f.rho_t,
            spacing_depth: f.spacing_depth,
            shear_ratio: f.shear_ratio,
        }
    }
}

impl From<ClassScores> for ColmpClassScores {
    fn from(s: ClassScores) -> Self {
        let mode = match s.predicted.index() {
            0 => ColmpMode::Fc,
            1 => ColmpMode::Fsc,
            _ => ColmpMode::Sc,
        };
        ColmpClassScores { scores: s.scores, probabilities: s.probabilities, mode }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn colmp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn colmp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Closed-form estimate of `a` and `b`.
///
/// # Safety
///
/// `features` must point to a valid `ColmpFeatures` and `out` to writable
/// memory for one `ColmpParams`.
#[no_mangle]
pub unsafe extern "C" fn colmp_estimate(
    family: ColmpFamily,
    shape: ColmpShape,
    features: *const ColmpFeatures,
    out: *mut ColmpParams,
) -> ColmpStatus {
    guard(|| {
        let f = ColumnFeatures::from(deref(features, "features")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let e = EstimatorFamily::from(family).estimate(&f, shape.into()).map_err(lib)?;
        *out = ColmpParams { a: e.a, b: e.b, raw_a: e.raw_a, raw_b: e.raw_b };
        Ok(())
    })
}

/// Failure mode from the fixed three-variable classifier.
///
/// # Safety
///
/// `features` must point to a valid `ColmpFeatures` and `out` to writable
/// memory for one `ColmpClassScores`.
#[no_mangle]
pub unsafe extern "C" fn colmp_classify_fixed(
    shape: ColmpShape,
    features: *const ColmpFeatures,
    out: *mut ColmpClassScores,
) -> ColmpStatus {
    guard(|| {
        let f = ColumnFeatures::from(deref(features, "features")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = classify_fixed(&f, shape.into()).map_err(lib)?.into();
        Ok(())
    })
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ColmpStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (ColmpStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

fn model_from_bytes(bytes: &[u8]) -> Result<Box<ColmpModel>, (ColmpStatus, String)> {
    let artifact = load_model(bytes).map_err(lib)?;
    let model = artifact.to_model().map_err(lib)?;
    Ok(Box::new(ColmpModel { artifact, model }))
}

/// Loads a model artifact from a JSON file.
///
/// # Safety
///
/// `path` must be a NUL-terminated string and `out` a valid pointer. On
/// success `*out` owns a handle to release with [`colmp_model_free`].
#[no_mangle]
pub unsafe extern "C" fn colmp_model_load(path: *const c_char, out: *mut *mut ColmpModel) -> ColmpStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let slot = out.as_mut().ok_or_else(|| null("out"))?;
        let bytes = std::fs::read(path).map_err(|e| (ColmpStatus::IoError, format!("{path}: {e}")))?;
        *slot = Box::into_raw(model_from_bytes(&bytes)?);
        Ok(())
    })
}

/// Loads a model artifact from `len` bytes of JSON.
///
/// # Safety
///
/// `json` must be readable for `len` bytes and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn colmp_model_load_json(json: *const u8, len: usize, out: *mut *mut ColmpModel) -> ColmpStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let slot = out.as_mut().ok_or_else(|| null("out"))?;
        *slot = Box::into_raw(model_from_bytes(std::slice::from_raw_parts(json, len))?);
        Ok(())
    })
}

/// Section shape the model was trained for.
///
/// # Safety
///
/// `model` must be a live handle from `colmp_model_load*` and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn colmp_model_shape(model: *const ColmpModel, out: *mut ColmpShape) -> ColmpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = match m.artifact.shape {
            SectionShape::Rectangular => ColmpShape::Rectangular,
            SectionShape::Circular => ColmpShape::Circular,
        };
        Ok(())
    })
}

/// Raw prediction of the model's target (`a` or `b`, radians). Closed-form
/// artifacts report their equation value for that target.
///
/// # Safety
///
/// `model` must be a live handle, `features` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn colmp_model_predict(
    model: *const ColmpModel,
    features: *const ColmpFeatures,
    out: *mut f64,
) -> ColmpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let f = ColumnFeatures::from(deref(features, "features")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let shape = m.artifact.shape;
        let value = match &m.model {
            LoadedModel::ClosedForm(family) => {
                let e = family.estimate(&f, shape).map_err(lib)?;
                match m.artifact.target {
                    colmp::artifact::ArtifactTarget::B => e.raw_b,
                    _ => e.raw_a,
                }
            }
            other => other
                .predict_value(&f)
                .map_err(lib)?
                .ok_or_else(|| (ColmpStatus::WrongModelKind, "model is a classifier".to_string()))?,
        };
        *out = value;
        Ok(())
    })
}

/// Failure-mode prediction from a classifier artifact.
///
/// # Safety
///
/// `model` must be a live handle, `features` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn colmp_model_classify(
    model: *const ColmpModel,
    features: *const ColmpFeatures,
    out: *mut ColmpClassScores,
) -> ColmpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let f = ColumnFeatures::from(deref(features, "features")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = m
            .model
            .classify(&f)
            .map_err(lib)?
            .ok_or_else(|| (ColmpStatus::WrongModelKind, "model is not a classifier".to_string()))?;
        *out = s.into();
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
///
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn colmp_model_free(model: *mut ColmpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parses a dataset from NUL-terminated CSV text.
///
/// # Safety
///
/// `csv` must be a NUL-terminated string and `out` a valid pointer. On
/// success `*out` owns a handle to release with [`colmp_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn colmp_dataset_parse(csv: *const c_char, out: *mut *mut ColmpDataset) -> ColmpStatus {
    guard(|| {
        let text = c_str(csv, "csv")?;
        let slot = out.as_mut().ok_or_else(|| null("out"))?;
        let data = parse_dataset(text).map_err(lib)?;
        *slot = Box::into_raw(Box::new(ColmpDataset { data }));
        Ok(())
    })
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
///
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn colmp_dataset_len(ds: *const ColmpDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.data.len())
}

/// Separation parameter of `features` relative to the dataset rows of
/// `shape`: 0 at the feature means.
///
/// # Safety
///
/// `ds` must be a live handle, `features` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn colmp_dataset_separation(
    ds: *const ColmpDataset,
    shape: ColmpShape,
    features: *const ColmpFeatures,
    out: *mut f64,
) -> ColmpStatus {
    guard(|| {
        let d = deref(ds, "ds")?;
        let f = ColumnFeatures::from(deref(features, "features")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let stats = d.data.stats(shape.into()).map_err(lib)?;
        *out = separation_param(&f, &stats).map_err(lib)?;
        Ok(())
    })
}

/// Releases a dataset handle. Null is ignored.
///
/// # Safety
///
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn colmp_dataset_free(ds: *mut ColmpDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}
