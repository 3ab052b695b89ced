//! Commands driven by a run manifest or a calibration model.

use std::fmt::Write;
use std::fs;
use std::path::Path;

use rmtdiag::calib::{
    calibrate_detector, calibration_points, compare_predictors, detect_noise, CalibrationModel,
    Grouping, Target,
};
use rmtdiag::pipeline::{analyze_bundle, analyze_sample, load_runs, AnalyzeOptions};
use rmtdiag::runs::read_run_manifest;
use rmtdiag::{Error, Result};

use super::{load_input, Input};
use crate::report::ReportDocument;
use crate::Output;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn calibrate(runs: &Path, out: &Path, target: Target, opts: &AnalyzeOptions) -> Result<Output> {
    let records = load_runs(&read_run_manifest(runs)?, opts)?;
    let points = calibration_points(&records)?;
    let model = calibrate_detector(&points, target)?;
    let mut json = model.to_json();
    if !json.ends_with('\n') {
        json.push('\n');
    }
    fs::write(out, json).map_err(io(out))?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "calibrated on {} runs at {} noise levels (layer {})",
        records.len(),
        points.len(),
        records[0].bottleneck_layer
    );
    let _ = writeln!(text, "{:>6}  {:>8}  {:>8}  {:>8}", "eta", "alpha", "stderr", "accuracy");
    for p in &points {
        let _ = writeln!(
            text,
            "{:>6.3}  {:>8.4}  {:>8.4}  {:>8.4}",
            p.noise_fraction, p.observable, p.observable_stderr, p.test_accuracy
        );
    }
    let _ = writeln!(
        text,
        "{} = {:.4}·alpha + {:.4}  (fit R² {:.4}, LOO R² {:.4})",
        model.target.as_str(),
        model.slope,
        model.intercept,
        model.fit_r2,
        model.loo_r2
    );
    for w in &model.warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    let _ = writeln!(text, "model written to {}", out.display());

    let mut report = ReportDocument::new("calibrate");
    report.bundle_ids = records.iter().map(|r| r.bundle_id.clone()).collect();
    report.warnings = records
        .iter()
        .flat_map(|r| r.observables.warnings.iter().map(move |w| format!("{}: {w}", r.bundle_id)))
        .chain(model.warnings.iter().cloned())
        .collect();
    report.calibration = Some(model);
    report.output_path = Some(out.display().to_string());
    Ok(Output { report, text })
}

pub fn detect(model_path: &Path, path: &Path, opts: &AnalyzeOptions) -> Result<Output> {
    let bytes = fs::read(model_path).map_err(io(model_path))?;
    let model = CalibrationModel::from_json(&bytes)?;
    let mut report = ReportDocument::new("detect");
    let alpha = match load_input(path)? {
        Input::Bundle(bundle) => {
            let a = analyze_bundle(&bundle, opts)?;
            let alpha = a.bottleneck_observables().tail_alpha;
            report.bundle_ids.push(a.bundle_id.clone());
            report.warnings = a.warnings();
            report.bottleneck = Some(a.bottleneck);
            alpha
        }
        Input::Sample(sample) => {
            let a = analyze_sample(&sample, &opts.observables.hill)?;
            a.tail.map(|h| h.alpha)
        }
    };
    let alpha = alpha.ok_or(Error::InsufficientData {
        what: "tail eigenvalues for the Hill estimate",
        needed: opts.observables.hill.min_tail_count,
        found: 0,
    })?;
    let result = detect_noise(&model, alpha);
    let text = format!("{}\n", serde_json::to_string(&result).expect("result serializes"));
    report.detection = Some(result);
    Ok(Output { report, text })
}

pub fn compare(runs: &Path, per_run: bool, opts: &AnalyzeOptions) -> Result<Output> {
    let records = load_runs(&read_run_manifest(runs)?, opts)?;
    let grouping = if per_run {
        Grouping::Run
    } else {
        Grouping::NoiseLevel
    };
    let table = compare_predictors(&records, grouping)?;
    let text = format!(
        "{} runs, layer {}, {}\n{table}",
        records.len(),
        records[0].bottleneck_layer,
        if per_run {
            "one point per run"
        } else {
            "seeds averaged per noise level"
        }
    );
    let mut report = ReportDocument::new("compare");
    report.bundle_ids = records.iter().map(|r| r.bundle_id.clone()).collect();
    report.warnings = table
        .rows
        .iter()
        .filter(|r| r.degenerate)
        .map(|r| format!("{}: predictor or target is constant; LOO R² reported as 0", r.measure.as_str()))
        .collect();
    report.comparison = Some(table);
    Ok(Output { report, text })
}
