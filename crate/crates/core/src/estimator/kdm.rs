//! Kinetic differential measurement between two interrogation frequencies.

use crate::error::{Error, Result};

/// Fraction of the series used as the normalization baseline by default.
pub const DEFAULT_BASELINE_FRACTION: f64 = 0.1;

fn baseline_len(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).ceil() as usize).clamp(1, n)
}

/// Normalizes each series to the mean of its leading baseline window and
/// returns the difference `x_hi − x_lo`.
///
/// A multiplicative drift common to both inputs divides out of each
/// normalized series, so it cannot reach the output.
pub fn kdm(series_hi: &[f64], series_lo: &[f64], baseline_fraction: f64) -> Result<Vec<f64>> {
    if series_hi.len() != series_lo.len() {
        return Err(Error::Domain(format!(
            "kdm inputs must be aligned: {} vs {} points",
            series_hi.len(),
            series_lo.len()
        )));
    }
    if series_hi.is_empty() {
        return Err(Error::InsufficientData(
            "kdm needs at least one point".into(),
        ));
    }
    if !(baseline_fraction > 0.0 && baseline_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "baseline fraction must be in (0, 1], got {baseline_fraction}"
        )));
    }
    let nb = baseline_len(series_hi.len(), baseline_fraction);
    let norm = |s: &[f64], name: &str| -> Result<Vec<f64>> {
        let base = s[..nb].iter().sum::<f64>() / nb as f64;
        if base == 0.0 || !base.is_finite() {
            return Err(Error::Domain(format!("kdm {name} baseline mean is zero")));
        }
        Ok(s.iter().map(|v| (v - base) / base).collect())
    };
    let hi = norm(series_hi, "high-frequency")?;
    let lo = norm(series_lo, "low-frequency")?;
    Ok(hi.iter().zip(&lo).map(|(a, b)| a - b).collect())
}
