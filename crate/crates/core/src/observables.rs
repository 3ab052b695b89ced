//! Per-layer spectral observables and norm-based baselines.

use serde::{Deserialize, Serialize};

use crate::eigen::{gram_spectrum, EigenSpectrum};
use crate::error::{Error, Result};
use crate::rmt::mp::{estimate_sigma_sq_from_init, fit_mp_sigma, MpParams};
use crate::weight_io::{LayerMatrix, WeightBundle};

/// Threshold quantiles used for the Hill stability report.
pub const STABILITY_Q_GRID: [f64; 6] = [0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Below this many positive eigenvalues the tail estimate is flagged as
/// unreliable.
pub const STABLE_POSITIVE_COUNT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillConfig {
    pub threshold_quantile: f64,
    pub min_tail_count: usize,
}

impl Default for HillConfig {
    fn default() -> Self {
        Self {
            threshold_quantile: 0.90,
            min_tail_count: 5,
        }
    }
}

impl HillConfig {
    pub fn with_quantile(q: f64) -> Result<Self> {
        let cfg = Self {
            threshold_quantile: q,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.threshold_quantile > 0.0 && self.threshold_quantile < 1.0) {
            return Err(Error::invalid(format!(
                "threshold quantile must lie in (0, 1), got {}",
                self.threshold_quantile
            )));
        }
        if self.min_tail_count == 0 {
            return Err(Error::invalid("min_tail_count must be positive"));
        }
        Ok(())
    }

    /// k = ⌈(1 − q)·P⌉. The small offset keeps exact products such as
    /// 0.1 × 5000 from rounding up to 501.
    pub fn tail_count(&self, positive: usize) -> usize {
        ((1.0 - self.threshold_quantile) * positive as f64 - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HillEstimate {
    /// Density-exponent convention, raw + 1.
    pub alpha: f64,
    /// Raw Hill statistic (survival-function exponent).
    pub raw: f64,
    pub tail_count: usize,
    pub threshold: f64,
}

/// Hill estimate on the top ⌈(1 − q)·P⌉ positive eigenvalues, relative to the
/// next order statistic below them.
///
/// Returns α = ĥ + 1 where ĥ = [mean ln(λᵢ/u)]⁻¹, so that a density
/// ∝ λ^(−α) is recovered. Zero eigenvalues are ignored.
pub fn hill_alpha(spectrum: &EigenSpectrum, cfg: &HillConfig) -> Result<HillEstimate> {
    cfg.validate()?;
    let pos = spectrum.positive();
    let p = pos.len();
    let k = cfg.tail_count(p);
    if k < cfg.min_tail_count || k >= p {
        return Err(Error::InsufficientData {
            what: "eigenvalues in the Hill tail",
            needed: cfg.min_tail_count.max(1),
            found: if k >= p { p.saturating_sub(1) } else { k },
        });
    }
    let u = pos[p - k - 1];
    if !(u > 0.0) {
        return Err(Error::invalid("Hill threshold eigenvalue is zero"));
    }
    let mean_log = pos[p - k..].iter().map(|&x| (x / u).ln()).sum::<f64>() / k as f64;
    if !(mean_log > 0.0) {
        return Err(Error::Numerical(
            "Hill tail is flat (every tail eigenvalue equals the threshold)".into(),
        ));
    }
    let raw = 1.0 / mean_log;
    Ok(HillEstimate {
        alpha: raw + 1.0,
        raw,
        tail_count: k,
        threshold: u,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub q: f64,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HillSweep {
    pub points: Vec<SweepPoint>,
    /// (max − min)/min over the points that produced an estimate.
    pub relative_spread: Option<f64>,
}

pub fn relative_spread(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (lo, hi, n) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY, 0usize), |(lo, hi, n), v| {
            (lo.min(v), hi.max(v), n + 1)
        });
    (n > 0 && lo > 0.0).then(|| (hi - lo) / lo)
}

pub fn hill_stability_sweep(spectrum: &EigenSpectrum, q_grid: &[f64]) -> Result<HillSweep> {
    let mut points = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        let cfg = HillConfig::with_quantile(q)?;
        points.push(SweepPoint {
            q,
            alpha: hill_alpha(spectrum, &cfg).ok().map(|h| h.alpha),
        });
    }
    let relative_spread = relative_spread(points.iter().filter_map(|p| p.alpha));
    Ok(HillSweep {
        points,
        relative_spread,
    })
}

/// exp(H(p))/n with pᵢ = λᵢ/Σλ over all n eigenvalues.
pub fn effective_rank(spectrum: &EigenSpectrum) -> Result<f64> {
    let total = spectrum.trace();
    if !(total > 0.0) {
        return Err(Error::invalid("effective rank of an all-zero spectrum"));
    }
    let entropy: f64 = spectrum
        .eigenvalues()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| {
            let p = v / total;
            -p * p.ln()
        })
        .sum();
    Ok((entropy.exp() / spectrum.len() as f64).min(1.0))
}

/// Number of eigenvalues strictly above λ₊.
pub fn outlier_count(spectrum: &EigenSpectrum, params: &MpParams) -> Result<usize> {
    if (params.gamma() - spectrum.aspect_ratio()).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "MP γ = {} does not match the spectrum's aspect ratio {}",
            params.gamma(),
            spectrum.aspect_ratio()
        )));
    }
    let lp = params.lambda_plus();
    Ok(spectrum.eigenvalues().len() - spectrum.eigenvalues().partition_point(|&v| v <= lp))
}

/// Fraction of all n eigenvalues strictly above λ₊.
pub fn outlier_fraction(spectrum: &EigenSpectrum, params: &MpParams) -> Result<f64> {
    Ok(outlier_count(spectrum, params)? as f64 / spectrum.len() as f64)
}

/// Mean consecutive-gap ratio min(sᵢ, sᵢ₊₁)/max(sᵢ, sᵢ₊₁) over the distinct
/// positive eigenvalues. No unfolding is applied.
pub fn spacing_ratio(spectrum: &EigenSpectrum) -> Result<f64> {
    let mut levels = spectrum.positive().to_vec();
    levels.dedup();
    if levels.len() < 3 {
        return Err(Error::InsufficientData {
            what: "distinct positive eigenvalues for the spacing ratio",
            needed: 3,
            found: levels.len(),
        });
    }
    Ok(spacing_ratio_of_levels(&levels))
}

/// Mean gap ratio over an ascending sequence of distinct levels.
pub(crate) fn spacing_ratio_of_levels(levels: &[f64]) -> f64 {
    let gaps: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let sum: f64 = gaps
        .windows(2)
        .map(|g| g[0].min(g[1]) / g[0].max(g[1]))
        .sum();
    sum / (gaps.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaSource {
    Init,
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableOptions {
    pub hill: HillConfig,
    /// Take σ² for the MP edge from the init snapshot when one exists.
    pub sigma_from_init: bool,
}

impl Default for ObservableOptions {
    fn default() -> Self {
        Self {
            hill: HillConfig::default(),
            sigma_from_init: true,
        }
    }
}

/// Everything measured on one layer.
///
/// Fields that need a minimum number of eigenvalues are `None` when the layer
/// is too small; `warnings` says why.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSet {
    pub rows: usize,
    pub cols: usize,
    pub tail_alpha: Option<f64>,
    pub hill_raw: Option<f64>,
    pub effective_rank_norm: f64,
    pub outlier_fraction: Option<f64>,
    pub outlier_count: Option<usize>,
    pub lambda_plus: Option<f64>,
    pub sigma_sq: Option<f64>,
    pub sigma_source: Option<SigmaSource>,
    pub mp_ks: Option<f64>,
    pub mp_fit_sigma_sq: Option<f64>,
    pub spacing_ratio: Option<f64>,
    pub frobenius_norm: f64,
    pub spectral_norm: f64,
    pub positive_count: usize,
    pub warnings: Vec<String>,
}

/// Spectral norm σ₁ = √(m·λ_max).
pub fn spectral_norm(spectrum: &EigenSpectrum) -> f64 {
    (spectrum.source_rows() as f64 * spectrum.max()).sqrt()
}

pub fn layer_observables(
    layer: &LayerMatrix,
    opts: &ObservableOptions,
) -> Result<(EigenSpectrum, ObservableSet)> {
    let spectrum = gram_spectrum(layer, false)?;
    let set = observables_for(layer, &spectrum, opts)?;
    Ok((spectrum, set))
}

/// Observables for a layer whose spectrum is already known.
pub fn observables_for(
    layer: &LayerMatrix,
    spectrum: &EigenSpectrum,
    opts: &ObservableOptions,
) -> Result<ObservableSet> {
    let mut warnings = Vec::new();
    let positive_count = spectrum.positive_count();
    if positive_count < STABLE_POSITIVE_COUNT {
        warnings.push(format!(
            "only {positive_count} positive eigenvalues; tail estimates need about {STABLE_POSITIVE_COUNT}"
        ));
    }

    let hill = match hill_alpha(spectrum, &opts.hill) {
        Ok(h) => Some(h),
        Err(e) => {
            warnings.push(format!("tail index unavailable: {e}"));
            None
        }
    };

    let fit = match fit_mp_sigma(spectrum) {
        Ok(f) => Some(f),
        Err(e) => {
            warnings.push(format!("MP fit unavailable: {e}"));
            None
        }
    };

    let (sigma_sq, sigma_source) = if opts.sigma_from_init && layer.init_values().is_some() {
        (Some(estimate_sigma_sq_from_init(layer)?), Some(SigmaSource::Init))
    } else {
        if opts.sigma_from_init {
            warnings.push("no initialization snapshot; MP edge uses the fitted σ²".into());
        }
        match &fit {
            Some(f) => (Some(f.params.sigma_sq()), Some(SigmaSource::Fitted)),
            None => (None, None),
        }
    };
    let params = sigma_sq
        .map(|s| MpParams::new(s, spectrum.aspect_ratio()))
        .transpose()?;
    let outliers = params
        .as_ref()
        .map(|p| outlier_count(spectrum, p))
        .transpose()?;

    let spacing = match spacing_ratio(spectrum) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("spacing ratio unavailable: {e}"));
            None
        }
    };

    Ok(ObservableSet {
        rows: layer.rows(),
        cols: layer.cols(),
        tail_alpha: hill.map(|h| h.alpha),
        hill_raw: hill.map(|h| h.raw),
        effective_rank_norm: effective_rank(spectrum)?,
        outlier_fraction: outliers.map(|c| c as f64 / spectrum.len() as f64),
        outlier_count: outliers,
        lambda_plus: params.map(|p| p.lambda_plus()),
        sigma_sq,
        sigma_source,
        mp_ks: fit.map(|f| f.ks),
        mp_fit_sigma_sq: fit.map(|f| f.params.sigma_sq()),
        spacing_ratio: spacing,
        frobenius_norm: layer.frobenius_norm(),
        spectral_norm: spectral_norm(spectrum),
        positive_count,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerNorms {
    pub name: String,
    pub frobenius: f64,
    pub spectral: f64,
}

/// Whole-model norm measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormBaselines {
    pub layers: Vec<LayerNorms>,
    /// √(Σ ‖W‖_F²)
    pub global_l2: f64,
    pub sum_frobenius: f64,
    pub max_spectral: f64,
    /// Π σ₁, accumulated in the log domain.
    pub product_spectral: f64,
}

impl NormBaselines {
    pub fn from_layers(layers: Vec<LayerNorms>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("norm baselines need at least one layer"));
        }
        let global_l2 = layers.iter().map(|l| l.frobenius * l.frobenius).sum::<f64>().sqrt();
        let sum_frobenius = layers.iter().map(|l| l.frobenius).sum();
        let max_spectral = layers.iter().map(|l| l.spectral).fold(0.0, f64::max);
        let product_spectral = if layers.iter().any(|l| l.spectral == 0.0) {
            0.0
        } else {
            layers.iter().map(|l| l.spectral.ln()).sum::<f64>().exp()
        };
        Ok(Self {
            layers,
            global_l2,
            sum_frobenius,
            max_spectral,
            product_spectral,
        })
    }

    pub fn frobenius_of(&self, name: &str) -> Option<f64> {
        self.layers.iter().find(|l| l.name == name).map(|l| l.frobenius)
    }
}

pub fn norm_baselines(bundle: &WeightBundle) -> Result<NormBaselines> {
    let layers = bundle
        .layers()
        .iter()
        .map(|l| {
            let s = gram_spectrum(l, false)?;
            Ok(LayerNorms {
                name: l.name().to_owned(),
                frobenius: l.frobenius_norm(),
                spectral: spectral_norm(&s),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NormBaselines::from_layers(layers)
}
