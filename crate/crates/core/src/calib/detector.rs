//! Label-noise detector: a piecewise-linear α → η map through seed-averaged
//! calibration nodes, plus the OLS line kept for reporting.

use serde::{Deserialize, Serialize};

use super::regression::{fit_linear, loo_r2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    NoiseFraction,
    TestAccuracy,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::NoiseFraction => "noise_fraction",
            Target::TestAccuracy => "test_accuracy",
        }
    }
}

/// One noise level after seed averaging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationPoint {
    pub noise_fraction: f64,
    pub observable: f64,
    pub test_accuracy: f64,
    pub seed_count: usize,
    pub observable_stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationNode {
    pub eta: f64,
    pub alpha: f64,
    pub stderr: f64,
}

/// Serialized as the calibration model file. Nodes are sorted by η.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub target: Target,
    pub slope: f64,
    pub intercept: f64,
    pub nodes: Vec<CalibrationNode>,
    pub loo_r2: f64,
    pub fit_r2: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub const NON_MONOTONE_WARNING: &str =
    "calibration alpha is not strictly increasing in noise fraction";

pub fn calibrate_detector(points: &[CalibrationPoint], target: Target) -> Result<CalibrationModel> {
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            what: "calibration noise levels",
            needed: 3,
            found: points.len(),
        });
    }
    for p in points {
        if !(0.0..=1.0).contains(&p.noise_fraction) {
            return Err(Error::invalid(format!(
                "noise fraction {} outside [0, 1]",
                p.noise_fraction
            )));
        }
        if !p.observable.is_finite() || !p.observable_stderr.is_finite() || !p.test_accuracy.is_finite() {
            return Err(Error::invalid("calibration point has non-finite values"));
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.noise_fraction.total_cmp(&b.noise_fraction));
    if let Some(w) = sorted.windows(2).find(|w| w[0].noise_fraction == w[1].noise_fraction) {
        return Err(Error::invalid(format!(
            "noise fraction {} appears twice; average seeds first",
            w[0].noise_fraction
        )));
    }

    let mut warnings = Vec::new();
    if !sorted.windows(2).all(|w| w[0].observable < w[1].observable) {
        warnings.push(NON_MONOTONE_WARNING.to_owned());
    }

    let xy: Vec<(f64, f64)> = sorted
        .iter()
        .map(|p| {
            let y = match target {
                Target::NoiseFraction => p.noise_fraction,
                Target::TestAccuracy => p.test_accuracy,
            };
            (p.observable, y)
        })
        .collect();
    let fit = fit_linear(&xy)?;
    if fit.r2.constant_target {
        warnings.push(format!("{} is constant across nodes", target.as_str()));
    }
    let loo = match loo_r2(&xy) {
        Ok(r) => r.value,
        Err(e) => {
            warnings.push(format!("leave-one-out R² undefined ({e}); reported as 0"));
            0.0
        }
    };

    Ok(CalibrationModel {
        target,
        slope: fit.slope,
        intercept: fit.intercept,
        nodes: sorted
            .iter()
            .map(|p| CalibrationNode {
                eta: p.noise_fraction,
                alpha: p.observable,
                stderr: p.observable_stderr,
            })
            .collect(),
        loo_r2: loo,
        fit_r2: fit.r2.value,
        warnings,
    })
}

impl CalibrationModel {
    /// Checks the invariants a model file must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 3 {
            return Err(Error::InsufficientData {
                what: "calibration nodes",
                needed: 3,
                found: self.nodes.len(),
            });
        }
        let finite = |v: f64| v.is_finite();
        if !finite(self.slope) || !finite(self.intercept) || !finite(self.loo_r2) || !finite(self.fit_r2) {
            return Err(Error::invalid("calibration model has non-finite coefficients"));
        }
        for n in &self.nodes {
            if !(0.0..=1.0).contains(&n.eta) || !finite(n.alpha) || !finite(n.stderr) || n.stderr < 0.0 {
                return Err(Error::invalid(format!("invalid calibration node {n:?}")));
            }
        }
        if !self.nodes.windows(2).all(|w| w[0].eta < w[1].eta) {
            return Err(Error::invalid(
                "calibration nodes must have strictly increasing noise fractions",
            ));
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let model: Self = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            what: "calibration model",
            message: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn alpha_range(&self) -> (f64, f64) {
        self.nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), n| {
            (lo.min(n.alpha), hi.max(n.alpha))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionResult {
    pub estimated_noise: f64,
    /// η of the two nodes of the segment used.
    pub bracket: (f64, f64),
    pub extrapolated: bool,
    pub observable: String,
    pub query: f64,
}

fn interpolate(a: &CalibrationNode, b: &CalibrationNode, alpha: f64) -> f64 {
    if a.alpha == b.alpha {
        return a.eta;
    }
    let t = (alpha - a.alpha) / (b.alpha - a.alpha);
    a.eta + t * (b.eta - a.eta)
}

/// Inverse piecewise-linear interpolation of η at `alpha`.
///
/// Inside the calibrated α range the first segment (in η order) containing
/// `alpha` is used. Outside it, the segment adjacent to the extreme node is
/// extended linearly. The estimate is clamped to [0, 1].
pub fn detect_noise(model: &CalibrationModel, alpha: f64) -> DetectionResult {
    let nodes = &model.nodes;
    let observable = "tail_alpha".to_owned();
    let done = |eta: f64, bracket, extrapolated| DetectionResult {
        estimated_noise: eta.clamp(0.0, 1.0),
        bracket,
        extrapolated,
        observable: observable.clone(),
        query: alpha,
    };

    if let Some(n) = nodes.iter().find(|n| n.alpha == alpha) {
        return done(n.eta, (n.eta, n.eta), false);
    }
    let (lo, hi) = model.alpha_range();
    if alpha > lo && alpha < hi {
        for w in nodes.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if alpha >= a.alpha.min(b.alpha) && alpha <= a.alpha.max(b.alpha) {
                return done(interpolate(a, b, alpha), (a.eta, b.eta), false);
            }
        }
    }

    // Outside the calibrated range.
    let pick = |better: &dyn Fn(f64, f64) -> bool| {
        let mut j = 0;
        for (i, n) in nodes.iter().enumerate() {
            if better(n.alpha, nodes[j].alpha) {
                j = i;
            }
        }
        j
    };
    let j = if alpha >= hi {
        pick(&|x, y| x > y)
    } else {
        pick(&|x, y| x < y)
    };
    let (a, b) = if j > 0 {
        (&nodes[j - 1], &nodes[j])
    } else {
        (&nodes[0], &nodes[1])
    };
    done(interpolate(a, b, alpha), (a.eta, b.eta), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn point(eta: f64, alpha: f64) -> CalibrationPoint {
        CalibrationPoint {
            noise_fraction: eta,
            observable: alpha,
            test_accuracy: 1.0 - 0.9 * eta,
            seed_count: 3,
            observable_stderr: 0.01,
        }
    }

    fn three_node() -> CalibrationModel {
        calibrate_detector(
            &[point(0.0, 2.1), point(0.5, 2.8), point(1.0, 3.5)],
            Target::NoiseFraction,
        )
        .unwrap()
    }

    #[test]
    fn nodes_stored_exactly() {
        let m = three_node();
        let got: Vec<(f64, f64)> = m.nodes.iter().map(|n| (n.eta, n.alpha)).collect();
        assert_eq!(got, vec![(0.0, 2.1), (0.5, 2.8), (1.0, 3.5)]);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn node_midpoint_and_clamp() {
        let m = three_node();
        let r = detect_noise(&m, 2.8);
        assert_eq!(r.estimated_noise, 0.5);
        assert!(!r.extrapolated);
        let r = detect_noise(&m, 2.45);
        assert_abs_diff_eq!(r.estimated_noise, 0.25, epsilon = 1e-12);
        assert_eq!(r.bracket, (0.0, 0.5));
        let r = detect_noise(&m, 5.0);
        assert_eq!(r.estimated_noise, 1.0);
        assert!(r.extrapolated);
        let r = detect_noise(&m, 1.0);
        assert_eq!(r.estimated_noise, 0.0);
        assert!(r.extrapolated);
    }

    #[test]
    fn two_points_rejected() {
        assert!(calibrate_detector(&[point(0.0, 2.0), point(1.0, 3.0)], Target::NoiseFraction).is_err());
    }

    #[test]
    fn repeated_eta_rejected() {
        assert!(calibrate_detector(
            &[point(0.0, 2.0), point(0.5, 2.5), point(0.5, 2.6)],
            Target::NoiseFraction
        )
        .is_err());
    }

    #[test]
    fn non_monotone_sequence_is_accepted_with_warning() {
        let m = calibrate_detector(
            &[point(0.0, 2.0), point(0.5, 3.0), point(1.0, 2.5)],
            Target::NoiseFraction,
        )
        .unwrap();
        assert_eq!(m.warnings, vec![NON_MONOTONE_WARNING.to_owned()]);
        // first segment in η order wins
        assert_abs_diff_eq!(detect_noise(&m, 2.5).estimated_noise, 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(detect_noise(&m, 2.75).estimated_noise, 0.375, epsilon = 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let m = three_node();
        let back = CalibrationModel::from_json(m.to_json().as_bytes()).unwrap();
        assert_eq!(back, m);
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["target"], "noise_fraction");
        assert!(v["nodes"][0]["eta"].is_number());
    }

    #[test]
    fn malformed_model_files_are_rejected() {
        assert!(CalibrationModel::from_json(b"{}").is_err());
        let mut m = three_node();
        m.nodes.swap(0, 2);
        assert!(CalibrationModel::from_json(m.to_json().as_bytes()).is_err());
    }

    #[test]
    fn accuracy_target_fits_eq_line() {
        let m = calibrate_detector(
            &[point(0.0, 2.0), point(0.5, 3.0), point(1.0, 4.0)],
            Target::TestAccuracy,
        )
        .unwrap();
        // acc = 1 − 0.9η and α = 2 + 2η ⇒ acc = −0.45·α + 1.9
        assert_abs_diff_eq!(m.slope, -0.45, epsilon = 1e-12);
        assert_abs_diff_eq!(m.intercept, 1.9, epsilon = 1e-12);
        assert_abs_diff_eq!(m.fit_r2, 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn exact_at_every_node(raw in proptest::collection::vec((0.0f64..1.0, 0.5f64..8.0), 3..12)) {
            let mut pts: Vec<CalibrationPoint> = raw.iter().map(|&(e, a)| point(e, a)).collect();
            pts.sort_by(|a, b| a.noise_fraction.total_cmp(&b.noise_fraction));
            pts.dedup_by(|a, b| a.noise_fraction == b.noise_fraction);
            // strictly increasing α so that node lookup is unambiguous
            let mut alphas: Vec<f64> = pts.iter().map(|p| p.observable).collect();
            alphas.sort_by(f64::total_cmp);
            alphas.dedup();
            prop_assume!(pts.len() >= 3 && alphas.len() == pts.len());
            for (p, a) in pts.iter_mut().zip(&alphas) { p.observable = *a; }
            let m = calibrate_detector(&pts, Target::NoiseFraction).unwrap();
            for p in &pts {
                let r = detect_noise(&m, p.observable);
                prop_assert_eq!(r.estimated_noise, p.noise_fraction);
                prop_assert!(!r.extrapolated);
            }
        }

        #[test]
        fn estimate_always_in_unit_interval(q in -100.0f64..100.0) {
            let r = detect_noise(&three_node(), q);
            prop_assert!((0.0..=1.0).contains(&r.estimated_noise));
            let (lo, hi) = three_node().alpha_range();
            prop_assert_eq!(r.extrapolated, q < lo || q > hi);
        }
    }
}
