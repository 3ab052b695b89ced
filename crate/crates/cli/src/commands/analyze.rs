use std::fmt::Write;
use std::path::Path;

use rmtdiag::pipeline::{analyze_bundle, analyze_sample, AnalyzeOptions, BundleAnalysis, SampleAnalysis};
use rmtdiag::Result;

use super::{load_input, Input};
use crate::report::{cell, ReportDocument};
use crate::Output;

pub fn run(path: &Path, opts: &AnalyzeOptions) -> Result<Output> {
    let mut report = ReportDocument::new("analyze");
    let text = match load_input(path)? {
        Input::Bundle(bundle) => {
            let a = analyze_bundle(&bundle, opts)?;
            let text = render_bundle(&a);
            report.bundle_ids.push(a.bundle_id.clone());
            report.warnings = a.warnings();
            report.layers = Some(a.layers);
            report.bottleneck = Some(a.bottleneck);
            report.hill_sweep = Some(a.hill_sweep);
            report.norms = Some(a.norms);
            text
        }
        Input::Sample(sample) => {
            let a = analyze_sample(&sample, &opts.observables.hill)?;
            let text = render_sample(&a);
            report.warnings = a.warnings.clone();
            report.sample = Some(a);
            text
        }
    };
    Ok(Output { report, text })
}

fn render_bundle(a: &BundleAnalysis) -> String {
    let mut s = String::new();
    let width = a.layers.iter().map(|l| l.name.len()).max().unwrap_or(5).max(5);
    let _ = writeln!(s, "bundle {} ({} layers)", a.bundle_id, a.layers.len());
    let _ = writeln!(
        s,
        "{:<width$}  {:>11}  {:>7}  {:>6}  {:>8}  {:>6}  {:>6}  {:>6}",
        "layer", "shape", "alpha", "erank", "outliers", "mp_ks", "<r>", "sigma"
    );
    for l in &a.layers {
        let o = &l.observables;
        let sigma = match o.sigma_source {
            Some(src) => format!("{src:?}").to_lowercase(),
            None => "-".to_owned(),
        };
        let _ = writeln!(
            s,
            "{:<width$}  {:>11}  {:>7}  {:>6.4}  {:>8}  {:>6}  {:>6}  {:>6}",
            l.name,
            format!("{}x{}", o.rows, o.cols),
            cell(o.tail_alpha, 3),
            o.effective_rank_norm,
            cell(o.outlier_fraction, 4),
            cell(o.mp_ks, 4),
            cell(o.spacing_ratio, 4),
            sigma,
        );
    }
    let v = &a.bottleneck;
    let _ = writeln!(
        s,
        "bottleneck: {} (ratio {:.2}, min dim {}): {}",
        v.layer_name, v.compression_ratio, v.resolution, v.reason
    );
    render_sweep(&mut s, &v.layer_name, &a.hill_sweep);
    for w in a.warnings() {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

fn render_sweep(s: &mut String, label: &str, sweep: &rmtdiag::observables::HillSweep) {
    let points: Vec<String> = sweep
        .points
        .iter()
        .map(|p| format!("q={:.2}:{}", p.q, cell(p.alpha, 3)))
        .collect();
    let _ = writeln!(
        s,
        "hill sweep ({label}): {}  spread {}",
        points.join(" "),
        match sweep.relative_spread {
            Some(r) => format!("{:.1}%", 100.0 * r),
            None => "-".to_owned(),
        }
    );
}

fn render_sample(a: &SampleAnalysis) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "sample ({:?}, {} values)", a.kind, a.count);
    match &a.tail {
        Some(h) => {
            let _ = writeln!(
                s,
                "tail alpha {:.4} (tail count {}, threshold {:.4})",
                h.alpha, h.tail_count, h.threshold
            );
        }
        None => {
            let _ = writeln!(s, "tail alpha -");
        }
    }
    let _ = writeln!(s, "spacing ratio {}", cell(a.spacing_ratio, 4));
    render_sweep(&mut s, "sample", &a.hill_sweep);
    for w in &a.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}
