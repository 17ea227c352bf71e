//! Evaluation: cross-validation, ROC/AUC, threshold sweeps, contingency
//! statistics, coefficient stability, and figure-data computation.

pub mod contingency;
pub mod cv;
pub mod figures;
pub mod kde;
pub mod roc;
pub mod stability;
pub mod sweep;

pub use contingency::{case_control_ratio, chi_square_yates, ContingencyError, ContingencyTable};
pub use cv::{cross_validate, kfold_split, CvError, CvReport, FoldResult, PooledScore, Selector};
pub use figures::{emit_figure_data, FeatureSetReports, FigureData, FigureError};
pub use kde::{kde_2d, KdeGrid};
pub use roc::{roc_auc, RocCurve, RocError};
pub use stability::{coefficient_stability, CoefficientStability, StabilityRow};
pub use sweep::{default_grid, sens_spec_intersection, threshold_sweep, SweepError, ThresholdSweep};
