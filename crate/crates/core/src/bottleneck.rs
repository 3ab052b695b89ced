//! Bottleneck-layer selection: the most compressive layer that still has
//! enough eigenvalues for stable spectral estimates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::weight_io::{LayerMatrix, WeightBundle};

pub const DEFAULT_MIN_RESOLUTION: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EligibleLayer {
    pub name: String,
    pub ratio: f64,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BottleneckVerdict {
    pub layer_name: String,
    pub compression_ratio: f64,
    pub resolution: usize,
    pub eligible_layers: Vec<EligibleLayer>,
    pub reason: String,
}

fn describe(l: &LayerMatrix) -> EligibleLayer {
    EligibleLayer {
        name: l.name().to_owned(),
        ratio: l.compression_ratio(),
        resolution: l.resolution(),
    }
}

/// Among layers with min(m,n) ≥ `min_resolution`, picks the largest
/// max(m,n)/min(m,n); ties go to the deeper layer. With no eligible layer the
/// one with the largest min(m,n) is returned instead.
pub fn select_bottleneck(bundle: &WeightBundle, min_resolution: usize) -> Result<BottleneckVerdict> {
    let layers = bundle.layers();
    if layers.is_empty() {
        return Err(Error::invalid("cannot select a bottleneck in an empty bundle"));
    }
    let eligible: Vec<&LayerMatrix> = layers
        .iter()
        .filter(|l| l.resolution() >= min_resolution)
        .collect();
    let eligible_layers: Vec<EligibleLayer> = eligible.iter().map(|l| describe(l)).collect();

    let by_ratio_then_depth = |a: &&LayerMatrix, b: &&LayerMatrix| {
        a.compression_ratio()
            .total_cmp(&b.compression_ratio())
            .then(a.depth_index().cmp(&b.depth_index()))
    };
    let (chosen, reason) = match eligible.iter().copied().max_by(by_ratio_then_depth) {
        Some(l) => (
            l,
            format!(
                "highest compression ratio among {} layer(s) with min dimension >= {min_resolution}",
                eligible.len()
            ),
        ),
        None => {
            let l = layers
                .iter()
                .max_by(|a, b| {
                    a.resolution()
                        .cmp(&b.resolution())
                        .then(a.depth_index().cmp(&b.depth_index()))
                })
                .expect("non-empty");
            (
                l,
                format!(
                    "fallback: no layer has min dimension >= {min_resolution}; chose the largest min dimension"
                ),
            )
        }
    };
    Ok(BottleneckVerdict {
        layer_name: chosen.name().to_owned(),
        compression_ratio: chosen.compression_ratio(),
        resolution: chosen.resolution(),
        eligible_layers,
        reason,
    })
}

/// Verdict pinned to a user-chosen layer. The eligibility list is still
/// computed so reports show what the heuristic would have seen.
pub fn override_bottleneck(
    bundle: &WeightBundle,
    layer_name: &str,
    min_resolution: usize,
) -> Result<BottleneckVerdict> {
    let layer = bundle
        .layer(layer_name)
        .ok_or_else(|| Error::invalid(format!("no layer named `{layer_name}`")))?;
    let mut verdict = select_bottleneck(bundle, min_resolution)?;
    let eligible = verdict.eligible_layers.iter().any(|e| e.name == layer_name);
    verdict.reason = format!(
        "override: layer `{layer_name}` pinned by the user{} (heuristic choice was `{}`)",
        if eligible { "" } else { "; it is below the resolution floor" },
        verdict.layer_name
    );
    verdict.layer_name = layer.name().to_owned();
    verdict.compression_ratio = layer.compression_ratio();
    verdict.resolution = layer.resolution();
    Ok(verdict)
}
