//! Seeded synthetic ensembles used as ground truth.
//!
//! Every generator draws from `ChaCha8Rng::seed_from_u64(seed)` (rand_chacha),
//! which is portable across platforms and word sizes. Gaussian variates come
//! from `rand_distr::StandardNormal`, exponential ones from `rand_distr::Exp1`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weight_io::LayerMatrix;

pub type SynthRng = ChaCha8Rng;

pub fn rng_for(seed: u64) -> SynthRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A planted low-rank signal: `multiplicity` orthogonal directions of strength θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeSpec {
    pub strength: f64,
    pub multiplicity: usize,
}

fn gaussian_values(rng: &mut SynthRng, len: usize, sigma: f64) -> Vec<f64> {
    (0..len)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn check_dims(m: usize, n: usize, sigma_sq: f64) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("generator dimensions must be positive"));
    }
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(Error::invalid(format!("σ² must be positive, got {sigma_sq}")));
    }
    Ok(())
}

/// m×n matrix of iid N(0, σ²) entries.
pub fn gen_iid_gaussian(m: usize, n: usize, sigma_sq: f64, seed: u64) -> Result<LayerMatrix> {
    check_dims(m, n, sigma_sq)?;
    let mut rng = rng_for(seed);
    let values = gaussian_values(&mut rng, m * n, sigma_sq.sqrt());
    LayerMatrix::new("gaussian", m, n, values, 0)
}

/// `k` orthonormal columns in ℝᵈ, returned column-major (d × k).
fn orthonormal_columns(rng: &mut SynthRng, d: usize, k: usize) -> DMatrix<f64> {
    let g = DMatrix::from_column_slice(d, k, &gaussian_values(rng, d * k, 1.0));
    g.qr().q()
}

/// W = W₀ + Σₖ √(θₖ·m)·uₖvₖᵀ with W₀ iid N(0, σ²) and orthonormal random
/// factors. The returned layer carries W₀ as its initialization snapshot.
pub fn gen_spiked(
    m: usize,
    n: usize,
    sigma_sq: f64,
    spikes: &[SpikeSpec],
    seed: u64,
) -> Result<LayerMatrix> {
    check_dims(m, n, sigma_sq)?;
    let mut strengths = Vec::new();
    for s in spikes {
        if !(s.strength > 0.0 && s.strength.is_finite()) || s.multiplicity == 0 {
            return Err(Error::invalid(format!("invalid spike {s:?}")));
        }
        strengths.extend(std::iter::repeat_n(s.strength, s.multiplicity));
    }
    let k = strengths.len();
    if k > m.min(n) {
        return Err(Error::invalid(format!(
            "{k} spike directions do not fit in a {m}x{n} matrix"
        )));
    }
    let mut rng = rng_for(seed);
    let noise = gaussian_values(&mut rng, m * n, sigma_sq.sqrt());
    let mut values = noise.clone();
    if k > 0 {
        let u = orthonormal_columns(&mut rng, m, k);
        let v = orthonormal_columns(&mut rng, n, k);
        for (j, theta) in strengths.iter().enumerate() {
            let amp = (theta * m as f64).sqrt();
            for r in 0..m {
                let ur = amp * u[(r, j)];
                let row = &mut values[r * n..(r + 1) * n];
                for (c, w) in row.iter_mut().enumerate() {
                    *w += ur * v[(c, j)];
                }
            }
        }
    }
    LayerMatrix::new("spiked", m, n, values, 0)?.with_init(noise)
}

/// Inverse-CDF draws from the density ∝ x^(−α) on [x_min, ∞), α > 1.
pub fn gen_pareto_sample(
    count: usize,
    alpha_density: f64,
    x_min: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(alpha_density > 1.0 && alpha_density.is_finite()) {
        return Err(Error::invalid(format!(
            "density exponent must exceed 1, got {alpha_density}"
        )));
    }
    if !(x_min > 0.0 && x_min.is_finite()) {
        return Err(Error::invalid(format!("x_min must be positive, got {x_min}")));
    }
    let tail = alpha_density - 1.0;
    let mut rng = rng_for(seed);
    Ok((0..count)
        .map(|_| {
            let u: f64 = rng.random();
            x_min * (1.0 - u).powf(-1.0 / tail)
        })
        .collect())
}

/// Cumulative sums of iid Exp(1) gaps: an uncorrelated (Poisson) level sequence.
pub fn gen_poisson_levels(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed);
    let mut level = 0.0;
    (0..count)
        .map(|_| {
            level += rng.sample::<f64, _>(Exp1);
            level
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::gram_spectrum;
    use crate::rmt::mp::{bbp_threshold, mp_edges};

    #[test]
    fn gaussian_entry_variance() {
        let l = gen_iid_gaussian(200, 100, 1.0, 42).unwrap();
        let var = l.values().iter().map(|v| v * v).sum::<f64>() / 20_000.0;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn generators_are_seed_deterministic() {
        assert_eq!(
            gen_iid_gaussian(5, 7, 1.0, 3).unwrap(),
            gen_iid_gaussian(5, 7, 1.0, 3).unwrap()
        );
        assert_ne!(
            gen_iid_gaussian(5, 7, 1.0, 3).unwrap(),
            gen_iid_gaussian(5, 7, 1.0, 4).unwrap()
        );
        assert_eq!(
            gen_pareto_sample(100, 2.0, 1.0, 9).unwrap(),
            gen_pareto_sample(100, 2.0, 1.0, 9).unwrap()
        );
        assert_eq!(gen_poisson_levels(10, 1), gen_poisson_levels(10, 1));
    }

    #[test]
    fn pareto_support_and_median() {
        // density exponent 2 ⇒ survival 1/x ⇒ median 2
        let s = gen_pareto_sample(20_001, 2.0, 1.0, 1).unwrap();
        assert!(s.iter().all(|&x| x >= 1.0));
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[10_000];
        // sd of the sample median ≈ 1/(2 f(2) √N) with f(2) = 1/4
        let se = 1.0 / (2.0 * 0.25 * (20_001f64).sqrt());
        assert!((median - 2.0).abs() < 4.0 * se, "{median}");
    }

    #[test]
    fn pareto_rejects_non_integrable_exponent() {
        assert!(gen_pareto_sample(10, 1.0, 1.0, 0).is_err());
        assert!(gen_pareto_sample(10, 2.0, 0.0, 0).is_err());
    }

    #[test]
    fn spike_factors_are_orthonormal_and_init_is_noise() {
        let spikes = [SpikeSpec { strength: 3.0, multiplicity: 3 }];
        let l = gen_spiked(40, 30, 1.0, &spikes, 5).unwrap();
        let diff: Vec<f64> = l
            .values()
            .iter()
            .zip(l.init_values().unwrap())
            .map(|(a, b)| a - b)
            .collect();
        // the planted part has exactly 3 singular values √(θ m)
        let s = crate::eigen::singular_values(40, 30, &diff).unwrap();
        let expect = (3.0f64 * 40.0).sqrt();
        for v in &s[..3] {
            approx::assert_relative_eq!(*v, expect, max_relative = 1e-10);
        }
        assert!(s[3] < 1e-9);
    }

    #[test]
    fn too_many_spikes_is_error() {
        let spikes = [SpikeSpec { strength: 1.0, multiplicity: 11 }];
        assert!(gen_spiked(10, 20, 1.0, &spikes, 0).is_err());
    }

    #[test]
    fn supercritical_spike_leaves_the_bulk() {
        let (m, n) = (200, 400);
        let gamma = n as f64 / m as f64;
        let theta = 4.0 * bbp_threshold(1.0, gamma).unwrap();
        let l = gen_spiked(m, n, 1.0, &[SpikeSpec { strength: theta, multiplicity: 1 }], 2).unwrap();
        let s = gram_spectrum(&l, false).unwrap();
        let (_, lp) = mp_edges(1.0, gamma).unwrap();
        let above = s.eigenvalues().iter().filter(|&&v| v > 1.05 * lp).count();
        assert_eq!(above, 1);
    }
}
