//! Power-law fits in log-log coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fit of `y = prefactor · x^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    pub prefactor: f64,
    /// (min x, max x) of the points used.
    pub window: (f64, f64),
    /// Euclidean norm of the log-space residuals.
    pub residual_norm: f64,
    pub points: usize,
}

pub const MIN_POINTS: usize = 5;

/// Fits the points with `x` inside `window` (inclusive); `None` uses all.
pub fn fit_power_law(x: &[f64], y: &[f64], window: Option<(f64, f64)>) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "{} abscissae but {} ordinates",
            x.len(),
            y.len()
        )));
    }
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a, b))
        .filter(|&(a, _)| window.is_none_or(|(lo, hi)| a >= lo && a <= hi))
        .collect();
    if pts.len() < MIN_POINTS {
        return Err(Error::invalid(format!(
            "need at least {MIN_POINTS} points in the fit window, got {}",
            pts.len()
        )));
    }
    if let Some(&(a, b)) = pts.iter().find(|&&(a, b)| !(a > 0.0 && b > 0.0)) {
        return Err(Error::invalid(format!("non-positive point ({a}, {b}) in log-log fit")));
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(a, b)| (a.ln(), b.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all abscissae coincide"));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual_norm = logs
        .iter()
        .map(|p| (p.1 - intercept - exponent * p.0).powi(2))
        .sum::<f64>()
        .sqrt();
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult {
        exponent,
        prefactor: intercept.exp(),
        window: (lo, hi),
        residual_norm,
        points: pts.len(),
    })
}
