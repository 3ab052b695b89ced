//! Spectrum of the normalized Gram matrix S = (1/m)·WᵀW.
//!
//! Eigenvalues are obtained as squared singular values of W divided by m,
//! which avoids forming WᵀW. When n > m the n − m structural zeros are padded
//! in explicitly so the spectrum always has length n.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::weight_io::LayerMatrix;

/// Relative tolerance below zero tolerated before a spectrum is declared broken.
pub const SYM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSpectrum {
    eigenvalues: Vec<f64>,
    rows: usize,
    cols: usize,
    zero_count: usize,
}

impl EigenSpectrum {
    /// Wraps externally produced eigenvalues as the spectrum of an `rows x cols`
    /// source. Values within `-SYM_TOLERANCE * max` of zero are clamped; anything
    /// more negative is rejected.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("spectrum source has a zero dimension"));
        }
        if eigenvalues.len() != cols {
            return Err(Error::invalid(format!(
                "{} eigenvalues for a source with {cols} columns",
                eigenvalues.len()
            )));
        }
        if let Some(i) = eigenvalues.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("eigenvalue {i} is not finite")));
        }
        clamp_near_zero(&mut eigenvalues)?;
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Self {
            eigenvalues,
            rows,
            cols,
            zero_count: cols.saturating_sub(rows),
        })
    }

    /// A bare sample treated as a square (γ = 1) spectrum; used for synthetic
    /// tail and spacing fixtures.
    pub fn from_sample(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::from_eigenvalues(values, n.max(1), n)
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }
    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
    pub fn source_rows(&self) -> usize {
        self.rows
    }
    pub fn source_cols(&self) -> usize {
        self.cols
    }
    /// γ = n/m.
    pub fn aspect_ratio(&self) -> f64 {
        self.cols as f64 / self.rows as f64
    }
    /// Structural zeros max(0, n − m).
    pub fn zero_count(&self) -> usize {
        self.zero_count
    }

    /// Strictly positive eigenvalues, ascending.
    pub fn positive(&self) -> &[f64] {
        let start = self.eigenvalues.partition_point(|&v| v <= 0.0);
        &self.eigenvalues[start..]
    }

    pub fn positive_count(&self) -> usize {
        self.positive().len()
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Every eigenvalue multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_eigenvalues(
            self.eigenvalues.iter().map(|v| v * c).collect(),
            self.rows,
            self.cols,
        )
    }
}

fn clamp_near_zero(values: &mut [f64]) -> Result<()> {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    let eps = SYM_TOLERANCE * max;
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -eps {
                return Err(Error::Numerical(format!(
                    "eigenvalue {v} is below -{eps:e}; the decomposition is not PSD"
                )));
            }
            *v = 0.0;
        }
    }
    Ok(())
}

/// Singular values of a row-major `rows x cols` matrix, descending.
pub fn singular_values(rows: usize, cols: usize, values: &[f64]) -> Option<Vec<f64>> {
    // Keep the matrix tall; row-major W read column-major is Wᵀ.
    let tall = if rows >= cols {
        DMatrix::from_row_slice(rows, cols, values)
    } else {
        DMatrix::from_column_slice(cols, rows, values)
    };
    let k = rows.min(cols);
    let svd = tall.try_svd(false, false, f64::EPSILON, 1000 * k.max(10))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Some(s)
}

/// Sorted eigenvalues of (1/m)·WᵀW for the layer's trained (or, with
/// `use_init`, initial) weights.
pub fn gram_spectrum(layer: &LayerMatrix, use_init: bool) -> Result<EigenSpectrum> {
    let values = if use_init {
        layer.init_values().ok_or_else(|| {
            Error::invalid(format!(
                "layer `{}` has no initialization snapshot",
                layer.name()
            ))
        })?
    } else {
        layer.values()
    };
    let (m, n) = layer.shape();
    let s = singular_values(m, n, values).ok_or_else(|| {
        Error::Numerical(format!("SVD did not converge for layer `{}`", layer.name()))
    })?;
    let mut eig: Vec<f64> = vec![0.0; n.saturating_sub(m)];
    eig.extend(s.iter().map(|s| s * s / m as f64));
    let spectrum = EigenSpectrum::from_eigenvalues(eig, m, n)?;

    #[cfg(debug_assertions)]
    {
        let direct = values.iter().map(|v| v * v).sum::<f64>() / m as f64;
        let tr = spectrum.trace();
        debug_assert!(
            (tr - direct).abs() <= 1e-10 * direct.abs().max(f64::MIN_POSITIVE),
            "trace identity violated for `{}`: {tr} vs {direct}",
            layer.name()
        );
    }
    Ok(spectrum)
}
