use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Row numbers in dataset errors are 1-based data rows (the header is not
/// counted).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: column `{column}` is not a finite number: {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: column `{column}` must not be negative")]
    NegativeRatio { row: usize, column: String },
    #[error("row {row}: column `{column}` must be strictly positive")]
    NonPositiveRatio { row: usize, column: String },
    #[error("row {row}: column `{column}` has unrecognized value {value:?}")]
    InvalidCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("row {row}: mp_b_rad is smaller than mp_a_rad")]
    BLessThanA { row: usize },
    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("input `{0}` is not finite")]
    NonFiniteInput(String),
    #[error("invalid features: {0}")]
    InvalidFeatures(String),

    #[error("insufficient rows: need at least {needed}, got {got}")]
    InsufficientRows { needed: usize, got: usize },
    #[error("feature `{0}` has zero range")]
    ZeroRange(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("matrix is singular or not positive definite")]
    SingularMatrix,
    #[error("residual variance is zero; p-values are undefined")]
    ZeroResidualVariance,
    #[error("observed values have zero variance; R² is undefined")]
    ZeroVariance,
    #[error("k = {k} exceeds the {available} available features")]
    KTooLarge { k: usize, available: usize },
    #[error("k = {k} is outside [2, {n}]")]
    KOutOfRange { k: usize, n: usize },
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Cholesky factorization failed after jitter escalation")]
    FactorizationFailed,
    #[error("training diverged at step {step}: loss is not finite")]
    DivergenceDetected { step: usize },
    #[error("training labels contain fewer than two classes")]
    SingleClassData,

    #[error("bin `{0}` selects no rows")]
    EmptyBin(String),
    #[error("record `{0}` has no value for the requested target")]
    MissingLabel(String),

    #[error("unsupported artifact format_version {0}")]
    UnsupportedVersion(u64),
    #[error("corrupt artifact payload: {0}")]
    CorruptPayload(String),
    #[error("artifact arity mismatch: {0}")]
    ArityMismatch(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name used by the service and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonNumericCell { .. } => "NonNumericCell",
            Error::NegativeRatio { .. } => "NegativeRatio",
            Error::NonPositiveRatio { .. } => "NonPositiveRatio",
            Error::InvalidCell { .. } => "InvalidCell",
            Error::DuplicateId(_) => "DuplicateId",
            Error::BLessThanA { .. } => "BLessThanA",
            Error::Csv(_) => "Csv",
            Error::NonFiniteInput(_) => "NonFiniteInput",
            Error::InvalidFeatures(_) => "InvalidFeatures",
            Error::InsufficientRows { .. } => "InsufficientRows",
            Error::ZeroRange(_) => "ZeroRange",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::SingularMatrix => "SingularMatrix",
            Error::ZeroResidualVariance => "ZeroResidualVariance",
            Error::ZeroVariance => "ZeroVariance",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::KOutOfRange { .. } => "KOutOfRange",
            Error::EmptyGrid => "EmptyGrid",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::FactorizationFailed => "FactorizationFailed",
            Error::DivergenceDetected { .. } => "DivergenceDetected",
            Error::SingleClassData => "SingleClassData",
            Error::EmptyBin(_) => "EmptyBin",
            Error::MissingLabel(_) => "MissingLabel",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::CorruptPayload(_) => "CorruptPayload",
            Error::ArityMismatch(_) => "ArityMismatch",
            Error::UnknownModel(_) => "UnknownModel",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
