//! Log–log least-squares exponent fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// `(λ, |value|)` pairs used in the fit.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual in log space.
    pub residual: f64,
    pub window: (f64, f64),
    /// Inputs discarded because `|value|` was zero or not finite.
    pub dropped: Vec<(f64, f64)>,
}

impl ScalingFit {
    /// `c` in `|value| ≈ c λ^slope`.
    pub fn prefactor(&self) -> f64 {
        self.intercept.exp()
    }
}

/// Fit `log|value| = intercept + slope · log λ` over points with λ inside
/// `window` (all points when `None`).
pub fn fit_exponent(points: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<ScalingFit> {
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let mut used = Vec::new();
    let mut dropped = Vec::new();
    for &(l, v) in points {
        if !(l >= lo && l <= hi) {
            continue;
        }
        let a = v.abs();
        if l > 0.0 && l.is_finite() && a > 0.0 && a.is_finite() {
            used.push((l, a));
        } else {
            dropped.push((l, v));
        }
    }
    if used.len() < MIN_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_POINTS,
            got: used.len(),
        });
    }
    let m = used.len() as f64;
    let xs: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "all λ values coincide"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / m).sqrt();
    let window = (
        used.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        used.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(ScalingFit {
        points: used,
        slope,
        intercept,
        residual,
        window,
        dropped,
    })
}

/// Exported fit summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub eta: f64,
    pub n: usize,
    pub lambda_window: (f64, f64),
    pub slope: f64,
    pub residual: f64,
    pub expected_exponent: f64,
}

impl FitReport {
    pub fn new(fit: &ScalingFit, n: usize, eta: f64, expected_exponent: f64) -> Self {
        Self {
            eta,
            n,
            lambda_window: fit.window,
            slope: fit.slope,
            residual: fit.residual,
            expected_exponent,
        }
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
