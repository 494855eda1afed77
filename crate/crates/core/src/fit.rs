//! Least-squares line fits used for log-log exponent estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

/// Ordinary least squares `y = slope * x + intercept`; needs three or more points.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::Contract("fit_line: length mismatch".into()));
    }
    if x.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} points, need at least 3", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) || !sxy.is_finite() {
        return Err(Error::DegenerateFit("abscissae are not distinct or data not finite".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = x.iter().zip(y).map(|(a, b)| b - (slope * a + intercept)).collect();
    Ok(LineFit { slope, intercept, residuals })
}

/// Fit `log y = slope * log x + log C`; returns the fit and `C`.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<(LineFit, f64)> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateFit("power-law fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let fit = fit_line(&lx, &ly)?;
    let c = fit.intercept.exp();
    Ok((fit, c))
}
