//! Marchenko–Pastur bulk model for S = (1/m)·WᵀW with iid entries of
//! variance σ² and aspect ratio γ = n/m.
//!
//! The continuous part has density
//!
//! ```text
//! f(x) = √((λ₊ − x)(x − a)) / (2π σ² γ x),   a = σ²(1 − √γ)²,  λ₊ = σ²(1 + √γ)²
//! ```
//!
//! on [a, λ₊] with total mass min(1, 1/γ); for γ > 1 the remaining 1 − 1/γ
//! sits at zero. The CDF is integrated numerically after the substitution
//! x = c − h·cos φ, which removes both square-root endpoint singularities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::quad::integrate;
use crate::eigen::EigenSpectrum;
use crate::error::{Error, Result};
use crate::weight_io::LayerMatrix;

const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpParams {
    sigma_sq: f64,
    gamma: f64,
    lambda_minus: f64,
    lambda_plus: f64,
}

impl MpParams {
    pub fn new(sigma_sq: f64, gamma: f64) -> Result<Self> {
        let (lambda_minus, lambda_plus) = mp_edges(sigma_sq, gamma)?;
        Ok(Self {
            sigma_sq,
            gamma,
            lambda_minus,
            lambda_plus,
        })
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    /// Lower edge of the full support; zero whenever γ ≥ 1.
    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }
    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }

    /// Lower edge of the continuous part, σ²(1 − √γ)², which stays positive
    /// for γ > 1.
    pub fn bulk_lower_edge(&self) -> f64 {
        let r = 1.0 - self.gamma.sqrt();
        self.sigma_sq * r * r
    }

    /// Mass of the continuous part, min(1, 1/γ).
    pub fn bulk_mass(&self) -> f64 {
        (1.0 / self.gamma).min(1.0)
    }

    /// Mass of the atom at zero, max(0, 1 − 1/γ).
    pub fn zero_mass(&self) -> f64 {
        1.0 - self.bulk_mass()
    }

    /// Density of the continuous part (the atom is excluded).
    pub fn pdf(&self, x: f64) -> f64 {
        let a = self.bulk_lower_edge();
        let b = self.lambda_plus;
        if x <= a || x >= b || x <= 0.0 {
            return 0.0;
        }
        ((b - x) * (x - a)).sqrt() / (2.0 * PI * self.sigma_sq * self.gamma * x)
    }

    fn phi_of(&self, x: f64) -> f64 {
        let a = self.bulk_lower_edge();
        let h = 0.5 * (self.lambda_plus - a);
        // inverse of x = a + 2h·sin²(φ/2)
        2.0 * ((x - a) / (2.0 * h)).clamp(0.0, 1.0).sqrt().asin()
    }

    /// Continuous-part mass between the bulk angles φ₀ ≤ φ₁.
    fn bulk_mass_between(&self, phi0: f64, phi1: f64) -> f64 {
        let a = self.bulk_lower_edge();
        let h = 0.5 * (self.lambda_plus - a);
        let scale = h * h / (2.0 * PI * self.sigma_sq * self.gamma);
        // x = c − h·cos φ = a + 2h·sin²(φ/2), written to avoid cancellation
        // near the lower edge; sin²φ = 4·sin²(φ/2)·cos²(φ/2).
        integrate(
            |phi: f64| {
                let (s, c) = (0.5 * phi).sin_cos();
                let s2 = s * s;
                let x = a + 2.0 * h * s2;
                if x <= 0.0 {
                    // γ = 1 at φ = 0
                    return scale * 2.0 * c * c / h;
                }
                scale * 4.0 * s2 * c * c / x
            },
            phi0,
            phi1,
            QUAD_TOL,
        )
    }

    /// P(λ ≤ x), including the atom at zero when γ > 1.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let a = self.bulk_lower_edge();
        let base = self.zero_mass();
        if x <= a {
            return base;
        }
        if x >= self.lambda_plus {
            return 1.0;
        }
        (base + self.bulk_mass_between(0.0, self.phi_of(x))).clamp(0.0, 1.0)
    }

    /// CDF of the continuous part alone, renormalized to 1. This is the model
    /// for the strictly positive eigenvalues.
    pub fn bulk_cdf(&self, x: f64) -> f64 {
        let a = self.bulk_lower_edge();
        if x <= a {
            return 0.0;
        }
        if x >= self.lambda_plus {
            return 1.0;
        }
        (self.bulk_mass_between(0.0, self.phi_of(x)) / self.bulk_mass()).clamp(0.0, 1.0)
    }

    /// `bulk_cdf` at every point of an ascending slice, integrating only the
    /// increments between neighbours.
    pub fn bulk_cdf_sorted(&self, xs: &[f64]) -> Vec<f64> {
        let norm = self.bulk_mass();
        let mut out = Vec::with_capacity(xs.len());
        let mut phi_prev = 0.0;
        let mut acc = 0.0;
        for &x in xs {
            let phi = self.phi_of(x);
            if phi > phi_prev {
                acc += self.bulk_mass_between(phi_prev, phi);
                phi_prev = phi;
            }
            let v = if x >= self.lambda_plus { 1.0 } else { acc / norm };
            out.push(v.clamp(0.0, 1.0));
        }
        out
    }
}

/// (λ₋, λ₊) = σ²(1 ∓ √γ)², with λ₋ reported as 0 for γ > 1.
pub fn mp_edges(sigma_sq: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) || !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "MP parameters must be positive and finite (σ² = {sigma_sq}, γ = {gamma})"
        )));
    }
    let r = gamma.sqrt();
    let lower = if gamma >= 1.0 {
        0.0
    } else {
        sigma_sq * (1.0 - r) * (1.0 - r)
    };
    Ok((lower, sigma_sq * (1.0 + r) * (1.0 + r)))
}

pub fn mp_cdf(x: f64, params: &MpParams) -> f64 {
    params.cdf(x)
}

/// Critical spike strength σ²·√γ.
pub fn bbp_threshold(sigma_sq: f64, gamma: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) || !(gamma > 0.0) {
        return Err(Error::invalid("BBP threshold needs σ² > 0 and γ > 0"));
    }
    Ok(sigma_sq * gamma.sqrt())
}

/// Entry-variance estimate Σ init² / (m·n) from the untrained snapshot.
pub fn estimate_sigma_sq_from_init(layer: &LayerMatrix) -> Result<f64> {
    let init = layer.init_values().ok_or_else(|| {
        Error::invalid(format!(
            "layer `{}` has no initialization snapshot",
            layer.name()
        ))
    })?;
    let s = init.iter().map(|v| v * v).sum::<f64>() / init.len() as f64;
    if !(s > 0.0) {
        return Err(Error::invalid(format!(
            "layer `{}`: initialization is identically zero",
            layer.name()
        )));
    }
    Ok(s)
}

/// One-sample KS distance between ascending `sorted` and model CDF values
/// `cdf` evaluated at the same points.
pub fn ks_from_cdf(cdf: &[f64]) -> f64 {
    let n = cdf.len() as f64;
    cdf.iter()
        .enumerate()
        .map(|(i, &f)| {
            let hi = (i + 1) as f64 / n - f;
            let lo = f - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0, f64::max)
}

/// KS distance between the positive eigenvalues and the MP bulk with
/// `params`.
pub fn mp_ks(spectrum: &EigenSpectrum, params: &MpParams) -> f64 {
    ks_from_cdf(&params.bulk_cdf_sorted(spectrum.positive()))
}

pub const MIN_FIT_EIGENVALUES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MpFit {
    pub params: MpParams,
    pub ks: f64,
}

/// σ² minimizing the KS distance between the positive eigenvalues and the MP
/// bulk, with γ fixed by the spectrum's shape.
///
/// A log-spaced scan over [0.01, 100] × (median / max(1, γ)) locates the basin,
/// then golden-section search refines it.
pub fn fit_mp_sigma(spectrum: &EigenSpectrum) -> Result<MpFit> {
    let pos = spectrum.positive();
    if pos.len() < MIN_FIT_EIGENVALUES {
        return Err(Error::InsufficientData {
            what: "positive eigenvalues for an MP fit",
            needed: MIN_FIT_EIGENVALUES,
            found: pos.len(),
        });
    }
    let gamma = spectrum.aspect_ratio();
    let median = pos[pos.len() / 2];
    let center = median / gamma.max(1.0);
    let ks_at = |log_s: f64| -> f64 {
        let p = MpParams::new(log_s.exp(), gamma).expect("positive σ²");
        ks_from_cdf(&p.bulk_cdf_sorted(pos))
    };

    const GRID: usize = 161;
    let lo = (0.01 * center).ln();
    let hi = (100.0 * center).ln();
    let step = (hi - lo) / (GRID - 1) as f64;
    let (best_i, _) = (0..GRID)
        .map(|i| (i, ks_at(lo + step * i as f64)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });

    let mut a = lo + step * best_i.saturating_sub(1) as f64;
    let mut b = lo + step * (best_i + 1).min(GRID - 1) as f64;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (ks_at(c), ks_at(d));
    while b - a > 1e-7 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = ks_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = ks_at(d);
        }
    }
    let grid_best = lo + step * best_i as f64;
    let candidates = [(c, fc), (d, fd), (grid_best, ks_at(grid_best))];
    let (log_s, ks) = candidates
        .into_iter()
        .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    Ok(MpFit {
        params: MpParams::new(log_s.exp(), gamma)?,
        ks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::gram_spectrum;
    use crate::rmt::synth::gen_iid_gaussian;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn edges_examples() {
        assert_eq!(mp_edges(1.0, 0.25).unwrap(), (0.25, 2.25));
        assert_eq!(mp_edges(1.0, 1.0).unwrap(), (0.0, 4.0));
        assert_eq!(mp_edges(2.0, 0.25).unwrap(), (0.5, 4.5));
        assert!(mp_edges(0.0, 1.0).is_err());
        assert!(mp_edges(1.0, -1.0).is_err());
    }

    #[test]
    fn edges_for_wide_matrices_report_zero_lower() {
        let p = MpParams::new(1.0, 4.0).unwrap();
        assert_eq!(p.lambda_minus(), 0.0);
        assert_eq!(p.lambda_plus(), 9.0);
        assert_eq!(p.bulk_lower_edge(), 1.0);
    }

    #[test]
    fn bbp_examples() {
        assert_eq!(bbp_threshold(1.0, 0.25).unwrap(), 0.5);
        assert_eq!(bbp_threshold(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(bbp_threshold(2.0, 0.25).unwrap(), 1.0);
    }

    #[test]
    fn cdf_support_edges() {
        let p = MpParams::new(1.0, 0.25).unwrap();
        assert_eq!(p.cdf(p.lambda_minus()), 0.0);
        assert_eq!(p.cdf(p.lambda_plus()), 1.0);
        // the integral over the full bulk must reach 1 on its own
        assert_abs_diff_eq!(p.bulk_mass_between(0.0, PI), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn wide_cdf_has_atom_at_zero() {
        let p = MpParams::new(1.5, 4.0).unwrap();
        assert_eq!(p.cdf(-1e-9), 0.0);
        assert_abs_diff_eq!(p.cdf(0.0), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(p.bulk_mass_between(0.0, PI), 0.25, epsilon = 1e-10);
    }

    #[test]
    fn cdf_matches_brute_force_riemann_sum() {
        // Midpoint rule in x on a fine grid, independent of the φ substitution.
        for &(s2, g) in &[(1.0, 0.25), (0.7, 0.9), (1.0, 1.0), (2.0, 3.0)] {
            let p = MpParams::new(s2, g).unwrap();
            let a = p.bulk_lower_edge();
            let b = p.lambda_plus();
            let x = a + 0.37 * (b - a);
            let n = 400_000;
            let h = (x - a) / n as f64;
            let riemann: f64 = (0..n).map(|i| p.pdf(a + (i as f64 + 0.5) * h)).sum::<f64>() * h;
            let tol = if g == 1.0 { 5e-3 } else { 1e-5 };
            assert_abs_diff_eq!(p.cdf(x), p.zero_mass() + riemann, epsilon = tol);
        }
    }

    #[test]
    fn cdf_at_mean_matches_monte_carlo() {
        // 2000 × 8000 would be slow in a unit test; the acceptance suite runs
        // the full size. γ = 0.25 here as well.
        let l = gen_iid_gaussian(2000, 500, 1.0, 5).unwrap();
        let s = gram_spectrum(&l, false).unwrap();
        let p = MpParams::new(1.0, 0.25).unwrap();
        let x = 1.0 * (1.0 + 0.25);
        let empirical = s.eigenvalues().iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let model = p.cdf(x);
        assert!(model > 0.0 && model < 1.0);
        assert!((model - empirical).abs() < 0.01, "{model} vs {empirical}");
    }

    #[test]
    fn sorted_cdf_agrees_with_pointwise() {
        let p = MpParams::new(1.3, 0.6).unwrap();
        let xs: Vec<f64> = (0..50).map(|i| 0.05 + i as f64 * 0.09).collect();
        let batch = p.bulk_cdf_sorted(&xs);
        for (x, f) in xs.iter().zip(&batch) {
            assert_abs_diff_eq!(*f, p.bulk_cdf(*x), epsilon = 1e-10);
        }
    }

    #[test]
    fn sigma_from_constant_init() {
        let l = LayerMatrix::new("c", 3, 4, vec![0.0; 12], 0)
            .unwrap()
            .with_init(vec![-0.3; 12])
            .unwrap();
        assert_abs_diff_eq!(estimate_sigma_sq_from_init(&l).unwrap(), 0.09, epsilon = 1e-15);
    }

    #[test]
    fn sigma_from_zero_init_is_error() {
        let l = LayerMatrix::new("z", 2, 2, vec![1.0; 4], 0)
            .unwrap()
            .with_init(vec![0.0; 4])
            .unwrap();
        assert!(estimate_sigma_sq_from_init(&l).is_err());
        let bare = LayerMatrix::new("z", 2, 2, vec![1.0; 4], 0).unwrap();
        assert!(estimate_sigma_sq_from_init(&bare).is_err());
    }

    #[test]
    fn sigma_from_gaussian_init() {
        let g = gen_iid_gaussian(512, 784, 1.0, 17).unwrap();
        let l = LayerMatrix::new("w", 512, 784, vec![0.0; 512 * 784], 0)
            .unwrap()
            .with_init(g.values().to_vec())
            .unwrap();
        let direct = g.values().iter().map(|v| v * v).sum::<f64>() / (512.0 * 784.0);
        let s = estimate_sigma_sq_from_init(&l).unwrap();
        assert_abs_diff_eq!(s, direct, epsilon = 1e-14);
        assert!((s - 1.0).abs() < 3.0 * (2.0 / (512.0 * 784.0f64)).sqrt());
    }

    #[test]
    fn fit_recovers_generator_variance() {
        let l = gen_iid_gaussian(300, 600, 2.5, 9).unwrap();
        let fit = fit_mp_sigma(&gram_spectrum(&l, false).unwrap()).unwrap();
        assert!((fit.params.sigma_sq() / 2.5 - 1.0).abs() < 0.05, "{fit:?}");
        assert!(fit.ks < 0.05);
    }

    #[test]
    fn fit_on_repeated_value_is_poor_but_returns() {
        let s = EigenSpectrum::from_eigenvalues(vec![1.0; 64], 64, 64).unwrap();
        let fit = fit_mp_sigma(&s).unwrap();
        assert!(fit.ks > 0.3, "{fit:?}");
        assert!(fit.ks <= 1.0);
    }

    #[test]
    fn fit_needs_ten_positive_eigenvalues() {
        let s = EigenSpectrum::from_eigenvalues(
            (1..=9).map(f64::from).collect(),
            9,
            9,
        )
        .unwrap();
        assert!(matches!(fit_mp_sigma(&s), Err(Error::InsufficientData { .. })));
    }

    proptest! {
        #[test]
        fn edges_scale_linearly(s2 in 1e-3f64..1e3, g in 1e-3f64..10.0, c in 1e-3f64..1e3) {
            let (a, b) = mp_edges(s2, g).unwrap();
            let (ca, cb) = mp_edges(c * s2, g).unwrap();
            prop_assert!((ca - c * a).abs() <= 1e-12 * (c * a).abs().max(1e-300));
            prop_assert!((cb - c * b).abs() <= 1e-12 * c * b);
            prop_assert!(a <= b);
        }

        #[test]
        fn cdf_is_monotone_with_unit_endpoints(s2 in 0.05f64..5.0, g in 0.02f64..1.0,
                                               ts in proptest::collection::vec(0.0f64..1.0, 8)) {
            let p = MpParams::new(s2, g).unwrap();
            let mut xs: Vec<f64> = ts.iter().map(|t| p.lambda_minus() + t * (p.lambda_plus() - p.lambda_minus())).collect();
            xs.sort_by(f64::total_cmp);
            let f: Vec<f64> = xs.iter().map(|&x| p.cdf(x)).collect();
            prop_assert!(f.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            prop_assert_eq!(p.cdf(p.lambda_minus()), 0.0);
            prop_assert_eq!(p.cdf(p.lambda_plus()), 1.0);
        }
    }
}
