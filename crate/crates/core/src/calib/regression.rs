//! Ordinary least squares on one predictor and leave-one-out R².

use serde::Serialize;

use crate::error::{Error, Result};

/// Coefficient of determination. A constant target has SS_tot = 0; R² is then
/// reported as 0 with `constant_target` set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RSquared {
    pub value: f64,
    pub constant_target: bool,
}

impl RSquared {
    fn from_sums(ss_res: f64, ss_tot: f64) -> Self {
        if ss_tot == 0.0 {
            Self {
                value: 0.0,
                constant_target: true,
            }
        } else {
            Self {
                value: 1.0 - ss_res / ss_tot,
                constant_target: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: RSquared,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

fn check_finite(points: &[(f64, f64)]) -> Result<()> {
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("regression data contains non-finite values"));
    }
    Ok(())
}

/// OLS line y = a·x + b.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            what: "points for a linear fit",
            needed: 2,
            found: points.len(),
        });
    }
    check_finite(points)?;
    if points.iter().all(|p| p.0 == points[0].0) {
        return Err(Error::invalid("predictor is constant; slope is undefined"));
    }
    let xm = mean(points.iter().map(|p| p.0));
    let ym = mean(points.iter().map(|p| p.1));
    let (sxx, sxy) = points.iter().fold((0.0, 0.0), |(sxx, sxy), &(x, y)| {
        let dx = x - xm;
        (sxx + dx * dx, sxy + dx * (y - ym))
    });
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let (ss_res, ss_tot) = points.iter().fold((0.0, 0.0), |(r, t), &(x, y)| {
        let e = y - (slope * x + intercept);
        (r + e * e, t + (y - ym) * (y - ym))
    });
    Ok(LinearFit {
        slope,
        intercept,
        r2: RSquared::from_sums(ss_res, ss_tot),
    })
}

/// Leave-one-out R²: 1 − Σ(yᵢ − ŷ₋ᵢ)² / Σ(yᵢ − ȳ)², where ŷ₋ᵢ comes from the
/// line fitted without point i and ȳ is the full-sample mean. May be negative.
///
/// Uses the hat-matrix identity yᵢ − ŷ₋ᵢ = eᵢ / (1 − hᵢᵢ) rather than n refits.
pub fn loo_r2(points: &[(f64, f64)]) -> Result<RSquared> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            what: "points for leave-one-out R²",
            needed: 3,
            found: n,
        });
    }
    check_finite(points)?;
    // A fold is degenerate when every remaining x is equal.
    let first = points[0].0;
    let others: Vec<f64> = points.iter().map(|p| p.0).filter(|&x| x != first).collect();
    let degenerate = others.is_empty()
        || (others.iter().all(|&x| x == others[0])
            && (others.len() == 1 || others.len() == n - 1));
    if degenerate {
        return Err(Error::invalid(
            "a leave-one-out fold has a constant predictor",
        ));
    }
    let fit = fit_linear(points)?;
    let xm = mean(points.iter().map(|p| p.0));
    let ym = mean(points.iter().map(|p| p.1));
    let sxx: f64 = points.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    let nf = n as f64;
    let (ss_res, ss_tot) = points.iter().fold((0.0, 0.0), |(r, t), &(x, y)| {
        let h = 1.0 / nf + (x - xm) * (x - xm) / sxx;
        let e = (y - fit.predict(x)) / (1.0 - h);
        (r + e * e, t + (y - ym) * (y - ym))
    });
    Ok(RSquared::from_sums(ss_res, ss_tot))
}

/// Pearson correlation; 0 when either side is constant.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let xm = xs[..n].iter().sum::<f64>() / n as f64;
    let ym = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - xm) * (y - ym);
        sxx += (x - xm) * (x - xm);
        syy += (y - ym) * (y - ym);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}
