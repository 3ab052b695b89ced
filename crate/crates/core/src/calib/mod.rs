//! Regression, the noise detector, and predictor comparison.

pub mod compare;
pub mod detector;
pub mod regression;

pub use compare::{
    aggregate, best_layer_frobenius, best_layer_from_norms, calibration_points, compare_predictors,
    BestLayer, ComparisonRow, ComparisonTable, Grouping, LevelSummary, Measure, RunRecord,
};
pub use detector::{
    calibrate_detector, detect_noise, CalibrationModel, CalibrationNode, CalibrationPoint,
    DetectionResult, Target, NON_MONOTONE_WARNING,
};
pub use regression::{correlation, fit_linear, loo_r2, LinearFit, RSquared};
