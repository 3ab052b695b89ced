use std::fs;
use std::path::Path;

use rmtdiag::bottleneck::BottleneckVerdict;
use rmtdiag::calib::{CalibrationModel, ComparisonTable, DetectionResult};
use rmtdiag::observables::{HillSweep, NormBaselines};
use rmtdiag::pipeline::{LayerReport, SampleAnalysis};
use rmtdiag::Error;
use serde::Serialize;

/// Everything a command measured. Field order is fixed by this struct, so the
/// same inputs always serialize to the same bytes.
#[derive(Debug, Serialize)]
pub struct ReportDocument {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub bundle_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bottleneck: Option<BottleneckVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hill_sweep: Option<HillSweep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norms: Option<NormBaselines>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleAnalysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mp_fit: Option<MpFitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct MpFitReport {
    pub layer: Option<String>,
    pub sigma_sq: f64,
    pub gamma: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub ks: f64,
    pub positive_count: usize,
}

impl ReportDocument {
    pub fn new(command: &'static str) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            bundle_ids: Vec::new(),
            layers: None,
            bottleneck: None,
            hill_sweep: None,
            norms: None,
            sample: None,
            mp_fit: None,
            calibration: None,
            comparison: None,
            detection: None,
            output_path: None,
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), Error> {
        fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }
}

/// Fixed-precision cell, `-` when absent.
pub fn cell(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(x) => format!("{x:.precision$}"),
        None => "-".to_owned(),
    }
}
