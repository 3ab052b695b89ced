//! Predictor comparison by leave-one-out R² against test accuracy.

use std::fmt;

use serde::Serialize;

use super::detector::CalibrationPoint;
use super::regression::{correlation, loo_r2};
use crate::error::{Error, Result};
use crate::observables::{norm_baselines, LayerNorms, NormBaselines, ObservableSet};
use crate::weight_io::WeightBundle;

/// Observables of one trained model, measured on its bottleneck layer, plus its
/// whole-model norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub bundle_id: String,
    pub noise_fraction: f64,
    pub test_accuracy: f64,
    pub seed: Option<u64>,
    pub bottleneck_layer: String,
    pub observables: ObservableSet,
    pub norms: NormBaselines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Grouping {
    /// Average seeds sharing a noise fraction; one LOO fold per level.
    #[default]
    NoiseLevel,
    /// Every run is its own point (e.g. a hyperparameter sweep at fixed η).
    Run,
}

/// Seed-averaged view of a group of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub noise_fraction: f64,
    pub runs: usize,
    pub test_accuracy: f64,
    pub tail_alpha: Option<f64>,
    pub tail_alpha_stderr: Option<f64>,
    pub effective_rank: f64,
    pub layer_frobenius: Vec<LayerNorms>,
    pub global_l2: f64,
    pub sum_frobenius: f64,
    pub max_spectral: f64,
    pub product_spectral: f64,
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn summarize(group: &[&RunRecord]) -> Result<LevelSummary> {
    let first = group[0];
    let avg = |f: &dyn Fn(&RunRecord) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / group.len() as f64;

    let alphas: Option<Vec<f64>> = group.iter().map(|r| r.observables.tail_alpha).collect();
    let (tail_alpha, tail_alpha_stderr) = match alphas {
        Some(a) => {
            let (m, s) = mean_stderr(&a);
            (Some(m), Some(s))
        }
        None => (None, None),
    };

    let names: Vec<&str> = first.norms.layers.iter().map(|l| l.name.as_str()).collect();
    for r in group {
        let other: Vec<&str> = r.norms.layers.iter().map(|l| l.name.as_str()).collect();
        if other != names {
            return Err(Error::invalid(format!(
                "run `{}` has layers {:?}, expected {:?}",
                r.bundle_id, other, names
            )));
        }
    }
    let layer_frobenius = first
        .norms
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| LayerNorms {
            name: l.name.clone(),
            frobenius: avg(&|r| r.norms.layers[i].frobenius),
            spectral: avg(&|r| r.norms.layers[i].spectral),
        })
        .collect();

    Ok(LevelSummary {
        noise_fraction: first.noise_fraction,
        runs: group.len(),
        test_accuracy: avg(&|r| r.test_accuracy),
        tail_alpha,
        tail_alpha_stderr,
        effective_rank: avg(&|r| r.observables.effective_rank_norm),
        layer_frobenius,
        global_l2: avg(&|r| r.norms.global_l2),
        sum_frobenius: avg(&|r| r.norms.sum_frobenius),
        max_spectral: avg(&|r| r.norms.max_spectral),
        product_spectral: avg(&|r| r.norms.product_spectral),
    })
}

/// Groups runs and averages every measure within a group. Levels come out in
/// ascending noise order; with `Grouping::Run` input order is kept.
pub fn aggregate(records: &[RunRecord], grouping: Grouping) -> Result<Vec<LevelSummary>> {
    if records.is_empty() {
        return Err(Error::invalid("no runs to aggregate"));
    }
    match grouping {
        Grouping::Run => records.iter().map(|r| summarize(&[r])).collect(),
        Grouping::NoiseLevel => {
            let mut order: Vec<&RunRecord> = records.iter().collect();
            order.sort_by(|a, b| a.noise_fraction.total_cmp(&b.noise_fraction));
            order
                .chunk_by(|a, b| a.noise_fraction == b.noise_fraction)
                .map(summarize)
                .collect()
        }
    }
}

/// Seed-averaged (η, α, accuracy) nodes for the detector.
pub fn calibration_points(records: &[RunRecord]) -> Result<Vec<CalibrationPoint>> {
    aggregate(records, Grouping::NoiseLevel)?
        .into_iter()
        .map(|l| {
            let alpha = l.tail_alpha.ok_or_else(|| {
                Error::invalid(format!(
                    "tail index unavailable for some run at noise fraction {}",
                    l.noise_fraction
                ))
            })?;
            Ok(CalibrationPoint {
                noise_fraction: l.noise_fraction,
                observable: alpha,
                test_accuracy: l.test_accuracy,
                seed_count: l.runs,
                observable_stderr: l.tail_alpha_stderr.unwrap_or(0.0),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestLayer {
    pub layer_name: String,
    pub correlation: f64,
    pub loo_r2: f64,
    #[serde(skip)]
    pub degenerate: bool,
}

/// LOO R², with undefined cases (constant predictor, degenerate fold) mapped
/// to 0 and flagged.
fn loo_or_degenerate(points: &[(f64, f64)]) -> Result<(f64, bool)> {
    match loo_r2(points) {
        Ok(r) => Ok((r.value, r.constant_target)),
        Err(Error::InvalidInput(_)) => Ok((0.0, true)),
        Err(e) => Err(e),
    }
}

/// The layer whose Frobenius norm correlates most strongly (in absolute
/// value) with accuracy; ties go to the shallower layer.
pub fn best_layer_from_norms(per_run: &[(Vec<LayerNorms>, f64)]) -> Result<BestLayer> {
    if per_run.len() < 3 {
        return Err(Error::InsufficientData {
            what: "runs for best-layer selection",
            needed: 3,
            found: per_run.len(),
        });
    }
    let names: Vec<&str> = per_run[0].0.iter().map(|l| l.name.as_str()).collect();
    if names.is_empty() {
        return Err(Error::invalid("runs have no layers"));
    }
    for (layers, _) in per_run {
        if layers.iter().map(|l| l.name.as_str()).ne(names.iter().copied()) {
            return Err(Error::invalid("runs do not share the same layer set"));
        }
    }
    let acc: Vec<f64> = per_run.iter().map(|r| r.1).collect();
    let mut best = (0usize, -1.0f64, 0.0f64);
    for i in 0..names.len() {
        let f: Vec<f64> = per_run.iter().map(|r| r.0[i].frobenius).collect();
        let c = correlation(&f, &acc);
        if c.abs() > best.1 {
            best = (i, c.abs(), c);
        }
    }
    let points: Vec<(f64, f64)> = per_run.iter().map(|r| (r.0[best.0].frobenius, r.1)).collect();
    let (loo, degenerate) = loo_or_degenerate(&points)?;
    Ok(BestLayer {
        layer_name: names[best.0].to_owned(),
        correlation: best.2,
        loo_r2: loo,
        degenerate,
    })
}

/// Best-layer Frobenius baseline over bundles carrying `test_accuracy`
/// metadata.
pub fn best_layer_frobenius(bundles: &[WeightBundle]) -> Result<BestLayer> {
    let rows = bundles
        .iter()
        .map(|b| {
            let acc = b.metadata_f64("test_accuracy")?.ok_or_else(|| {
                Error::invalid(format!("bundle `{}` lacks test_accuracy metadata", b.model_id()))
            })?;
            Ok((norm_baselines(b)?.layers, acc))
        })
        .collect::<Result<Vec<_>>>()?;
    best_layer_from_norms(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    TailAlpha,
    EffectiveRank,
    BestLayerFrobenius,
    GlobalL2,
    SumFrobenius,
    MaxSpectral,
    ProductSpectral,
}

impl Measure {
    pub const ALL: [Measure; 7] = [
        Measure::TailAlpha,
        Measure::EffectiveRank,
        Measure::BestLayerFrobenius,
        Measure::GlobalL2,
        Measure::SumFrobenius,
        Measure::MaxSpectral,
        Measure::ProductSpectral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::TailAlpha => "tail_alpha",
            Measure::EffectiveRank => "effective_rank",
            Measure::BestLayerFrobenius => "best_layer_frobenius",
            Measure::GlobalL2 => "global_l2",
            Measure::SumFrobenius => "sum_frobenius",
            Measure::MaxSpectral => "max_spectral",
            Measure::ProductSpectral => "product_spectral",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub measure: Measure,
    pub loo_r2: f64,
    #[serde(skip)]
    pub degenerate: bool,
    #[serde(skip)]
    pub detail: Option<String>,
}

/// LOO R² per measure, best first. Serializes as `[{"measure", "loo_r2"}]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn get(&self, m: Measure) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.measure == m)
    }

    pub fn ranking(&self) -> Vec<Measure> {
        self.rows.iter().map(|r| r.measure).collect()
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.measure.as_str().len())
            .max()
            .unwrap_or(7)
            .max("measure".len());
        writeln!(f, "{:<width$}  {:>9}", "measure", "loo_r2")?;
        writeln!(f, "{}  {}", "-".repeat(width), "-".repeat(9))?;
        for r in &self.rows {
            write!(f, "{:<width$}  {:>9.4}", r.measure.as_str(), r.loo_r2)?;
            if r.degenerate {
                write!(f, "  (degenerate)")?;
            }
            if let Some(d) = &r.detail {
                write!(f, "  {d}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Ranks every measure by how well a line through it predicts accuracy out of
/// sample.
pub fn compare_predictors(records: &[RunRecord], grouping: Grouping) -> Result<ComparisonTable> {
    let levels = aggregate(records, grouping)?;
    if levels.len() < 3 {
        return Err(Error::InsufficientData {
            what: "groups for predictor comparison",
            needed: 3,
            found: levels.len(),
        });
    }
    let acc: Vec<f64> = levels.iter().map(|l| l.test_accuracy).collect();
    let mut rows = Vec::with_capacity(Measure::ALL.len());
    for m in Measure::ALL {
        let (xs, detail): (Vec<f64>, Option<String>) = match m {
            Measure::TailAlpha => {
                let xs = levels
                    .iter()
                    .map(|l| {
                        l.tail_alpha.ok_or_else(|| {
                            Error::invalid(format!(
                                "tail index unavailable at noise fraction {}",
                                l.noise_fraction
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (xs, None)
            }
            Measure::EffectiveRank => (levels.iter().map(|l| l.effective_rank).collect(), None),
            Measure::BestLayerFrobenius => {
                let per: Vec<(Vec<LayerNorms>, f64)> = levels
                    .iter()
                    .map(|l| (l.layer_frobenius.clone(), l.test_accuracy))
                    .collect();
                let best = best_layer_from_norms(&per)?;
                rows.push(ComparisonRow {
                    measure: m,
                    loo_r2: best.loo_r2,
                    degenerate: best.degenerate,
                    detail: Some(format!("layer {}", best.layer_name)),
                });
                continue;
            }
            Measure::GlobalL2 => (levels.iter().map(|l| l.global_l2).collect(), None),
            Measure::SumFrobenius => (levels.iter().map(|l| l.sum_frobenius).collect(), None),
            Measure::MaxSpectral => (levels.iter().map(|l| l.max_spectral).collect(), None),
            Measure::ProductSpectral => (levels.iter().map(|l| l.product_spectral).collect(), None),
        };
        let points: Vec<(f64, f64)> = xs.into_iter().zip(acc.iter().copied()).collect();
        let (loo, degenerate) = loo_or_degenerate(&points)?;
        rows.push(ComparisonRow {
            measure: m,
            loo_r2: loo,
            degenerate,
            detail,
        });
    }
    rows.sort_by(|a, b| b.loo_r2.total_cmp(&a.loo_r2));
    Ok(ComparisonTable { rows })
}
