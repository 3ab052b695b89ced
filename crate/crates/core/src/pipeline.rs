//! End-to-end analysis of bundles, sample files and run manifests.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bottleneck::{override_bottleneck, select_bottleneck, BottleneckVerdict, DEFAULT_MIN_RESOLUTION};
use crate::calib::RunRecord;
use crate::eigen::{gram_spectrum, EigenSpectrum};
use crate::error::{Error, Result};
use crate::observables::{
    hill_alpha, hill_stability_sweep, observables_for, spacing_ratio, spectral_norm, HillConfig,
    HillEstimate, HillSweep, LayerNorms, NormBaselines, ObservableOptions, ObservableSet,
    STABILITY_Q_GRID,
};
use crate::runs::RunEntry;
use crate::weight_io::{read_bundle, WeightBundle};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub layer: Option<String>,
    pub observables: ObservableOptions,
    pub min_resolution: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            layer: None,
            observables: ObservableOptions::default(),
            min_resolution: DEFAULT_MIN_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub name: String,
    pub depth_index: usize,
    pub observables: ObservableSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleAnalysis {
    pub bundle_id: String,
    pub layers: Vec<LayerReport>,
    pub bottleneck: BottleneckVerdict,
    pub hill_sweep: HillSweep,
    pub norms: NormBaselines,
}

impl BundleAnalysis {
    pub fn bottleneck_observables(&self) -> &ObservableSet {
        &self
            .layers
            .iter()
            .find(|l| l.name == self.bottleneck.layer_name)
            .expect("verdict names a bundle layer")
            .observables
    }

    /// Warnings from every layer, prefixed with the layer name.
    pub fn warnings(&self) -> Vec<String> {
        self.layers
            .iter()
            .flat_map(|l| l.observables.warnings.iter().map(move |w| format!("{}: {w}", l.name)))
            .collect()
    }
}

fn verdict_for(bundle: &WeightBundle, opts: &AnalyzeOptions) -> Result<BottleneckVerdict> {
    match &opts.layer {
        Some(name) => override_bottleneck(bundle, name, opts.min_resolution),
        None => select_bottleneck(bundle, opts.min_resolution),
    }
}

/// Observables on every layer, the bottleneck verdict, and a Hill threshold
/// sweep on the bottleneck layer.
pub fn analyze_bundle(bundle: &WeightBundle, opts: &AnalyzeOptions) -> Result<BundleAnalysis> {
    let bottleneck = verdict_for(bundle, opts)?;
    let mut layers = Vec::with_capacity(bundle.layers().len());
    let mut norms = Vec::with_capacity(bundle.layers().len());
    let mut sweep = None;
    for layer in bundle.layers() {
        let spectrum = gram_spectrum(layer, false)?;
        let observables = observables_for(layer, &spectrum, &opts.observables)?;
        if layer.name() == bottleneck.layer_name {
            sweep = Some(hill_stability_sweep(&spectrum, &STABILITY_Q_GRID)?);
        }
        norms.push(LayerNorms {
            name: layer.name().to_owned(),
            frobenius: observables.frobenius_norm,
            spectral: observables.spectral_norm,
        });
        layers.push(LayerReport {
            name: layer.name().to_owned(),
            depth_index: layer.depth_index(),
            observables,
        });
    }
    Ok(BundleAnalysis {
        bundle_id: bundle.model_id().to_owned(),
        layers,
        bottleneck,
        hill_sweep: sweep.expect("bottleneck layer is analyzed"),
        norms: NormBaselines::from_layers(norms)?,
    })
}

/// Observables of one layer plus whole-model norms: the per-run payload for
/// calibration and comparison. Only `layer` gets the full observable set.
pub fn run_record(
    entry: &RunEntry,
    bundle: &WeightBundle,
    layer: &str,
    opts: &ObservableOptions,
) -> Result<RunRecord> {
    let mut norms = Vec::with_capacity(bundle.layers().len());
    let mut observables = None;
    for l in bundle.layers() {
        let spectrum = gram_spectrum(l, false)?;
        if l.name() == layer {
            observables = Some(observables_for(l, &spectrum, opts)?);
        }
        norms.push(LayerNorms {
            name: l.name().to_owned(),
            frobenius: l.frobenius_norm(),
            spectral: spectral_norm(&spectrum),
        });
    }
    let observables = observables.ok_or_else(|| {
        Error::invalid(format!(
            "bundle `{}` has no layer named `{layer}`",
            entry.bundle_path.display()
        ))
    })?;
    Ok(RunRecord {
        bundle_id: bundle.model_id().to_owned(),
        noise_fraction: entry.noise_fraction,
        test_accuracy: entry.test_accuracy,
        seed: entry.seed,
        bottleneck_layer: layer.to_owned(),
        observables,
        norms: NormBaselines::from_layers(norms)?,
    })
}

/// Loads every run. The measured layer is `opts.layer` if set, otherwise the
/// bottleneck of the first bundle, so all runs are measured on the same layer.
pub fn load_runs(entries: &[RunEntry], opts: &AnalyzeOptions) -> Result<Vec<RunRecord>> {
    let mut layer: Option<String> = opts.layer.clone();
    let mut out = Vec::with_capacity(entries.len());
    for entry in entries {
        let bundle = read_bundle(&entry.bundle_path)?;
        let name = match &layer {
            Some(n) => n.clone(),
            None => {
                let n = select_bottleneck(&bundle, opts.min_resolution)?.layer_name;
                layer = Some(n.clone());
                n
            }
        };
        out.push(run_record(entry, &bundle, &name, &opts.observables)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleKind {
    Pareto,
    PoissonGaps,
}

/// A bare list of eigenvalue-like levels, as written by `synth pareto` and
/// `synth poisson-gaps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleFile {
    pub kind: SampleKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub values: Vec<f64>,
}

impl SampleFile {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let s: SampleFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            what: "sample file",
            message: e.to_string(),
        })?;
        if let Some(i) = s.values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "sample value {i} is negative or not finite"
            )));
        }
        if s.values.is_empty() {
            return Err(Error::invalid("sample file has no values"));
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("sample serializes");
        s.push('\n');
        s
    }

    pub fn spectrum(&self) -> Result<EigenSpectrum> {
        EigenSpectrum::from_sample(self.values.clone())
    }
}

/// True when `path` holds a sample file rather than a bundle directory.
pub fn is_sample_path(path: &Path) -> bool {
    path.is_file()
}

pub fn read_sample(path: &Path) -> Result<SampleFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    SampleFile::from_json(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleAnalysis {
    pub kind: SampleKind,
    pub count: usize,
    pub tail: Option<HillEstimate>,
    pub hill_sweep: HillSweep,
    pub spacing_ratio: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn analyze_sample(sample: &SampleFile, hill: &HillConfig) -> Result<SampleAnalysis> {
    let spectrum = sample.spectrum()?;
    let mut warnings = Vec::new();
    let tail = match hill_alpha(&spectrum, hill) {
        Ok(h) => Some(h),
        Err(e) => {
            warnings.push(format!("tail index unavailable: {e}"));
            None
        }
    };
    let spacing = match spacing_ratio(&spectrum) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("spacing ratio unavailable: {e}"));
            None
        }
    };
    Ok(SampleAnalysis {
        kind: sample.kind,
        count: spectrum.len(),
        tail,
        hill_sweep: hill_stability_sweep(&spectrum, &STABILITY_Q_GRID)?,
        spacing_ratio: spacing,
        warnings,
    })
}
