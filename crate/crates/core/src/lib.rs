//! Case-control risk modeling over longitudinal EMR extracts.
//!
//! The crate covers the full pipeline: ingesting line-delimited patient and
//! encounter records, building an age/gender-matched case-control cohort,
//! turning truncated histories into a named design matrix, fitting logistic
//! regression by IRLS with forward/backward stepwise AIC selection, and
//! evaluating with stratified cross-validation, ROC/AUC, threshold sweeps,
//! and coefficient-stability tables. A synthetic population generator with a
//! planted logistic ground truth backs the end-to-end tests.
//!
//! The numeric core ([`glm`], [`stepwise`], [`metrics`]) is generic over the
//! [`Scalar`] floating-point type; the aliases below fix the pipeline types
//! to `f64`.

pub mod cohort;
pub mod emr;
pub mod features;
pub mod glm;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod stepwise;
pub mod synth;

pub use scalar::Scalar;

/// Default-precision design matrix.
pub type DesignMatrix = features::DesignMatrix<f64>;
/// Default-precision fit options.
pub type FitOptions = glm::FitOptions<f64>;
/// Default-precision fitted model.
pub type LogisticModel = glm::LogisticModel<f64>;
/// Default-precision selection trace.
pub type SelectionTrace = stepwise::SelectionTrace<f64>;
/// Default-precision ROC curve.
pub type RocCurve = metrics::RocCurve<f64>;
/// Default-precision threshold sweep.
pub type ThresholdSweep = metrics::ThresholdSweep<f64>;
/// Default-precision cross-validation report.
pub type CvReport = metrics::CvReport<f64>;
/// Default-precision coefficient-stability table.
pub type CoefficientStability = metrics::CoefficientStability<f64>;
