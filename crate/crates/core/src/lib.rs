//! Nonlinear modeling parameters `a` and `b` and failure-mode classification
//! for reinforced concrete columns.
//!
//! - [`estimators`]: fixed-coefficient equations and the fixed classifier
//! - [`linear`]: least squares, p-values, ridge, λ tuning, k-fold validation
//! - [`gpr`]: squared-exponential Gaussian process regression
//! - [`nn`]: feedforward RELU network trained by full-batch gradient descent
//! - [`classifier`]: trainable one-vs-all logistic regression
//! - [`evaluation`]: metrics, error CDFs, separation parameter, bin analysis
//! - [`artifact`]: versioned JSON model artifacts
//! - [`service`]: prediction service over a model registry
//! - [`cli`]: the `colmp` command line

pub mod artifact;
pub mod classifier;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod gpr;
pub mod evaluation;
pub mod linear;
pub mod nn;
mod linalg;
pub mod preprocess;
pub mod service;

pub use data::{
    dataset_stats, generate_fixture, parse_dataset, BSource, ColumnFeatures, ColumnRecord, Dataset, DatasetStats,
    FailureMode, Feature, ModelingParams, SectionShape, Target,
};
pub use error::{Error, Result};
pub use estimators::{ClassScores, Estimate, EstimatorFamily};
