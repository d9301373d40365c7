//! Small statistics helpers: averaging, detrending and the SNR = 1 limit of
//! detection.

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1 denominator). Zero for fewer than two
/// points.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() - 1) as f64).sqrt()
}

/// Trailing mean over `n` points; the output has `len − n + 1` entries.
pub fn boxcar(series: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("boxcar length must be >= 1".into()));
    }
    if n > series.len() {
        return Err(Error::InsufficientData(format!(
            "boxcar length {n} exceeds series length {}",
            series.len()
        )));
    }
    Ok(series.windows(n).map(mean).collect())
}

/// Removes the least-squares straight line through `(index, value)`.
pub fn linear_detrend(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    if n < 2 {
        return series.iter().map(|_| 0.0).collect();
    }
    let xm = (n - 1) as f64 / 2.0;
    let ym = mean(series);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in series.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    series
        .iter()
        .enumerate()
        .map(|(i, y)| y - ym - slope * (i as f64 - xm))
        .collect()
}

/// Concentration at which the response equals the blank noise.
///
/// Returns `f64::INFINITY` when the slope is zero (no sensitivity).
pub fn lod(blank_std: f64, slope_at_blank: f64) -> Result<f64> {
    if !(blank_std >= 0.0) || !blank_std.is_finite() {
        return Err(Error::Domain(format!(
            "blank_std must be finite and >= 0, got {blank_std}"
        )));
    }
    if !slope_at_blank.is_finite() {
        return Err(Error::Domain("slope must be finite".into()));
    }
    if slope_at_blank == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(blank_std / slope_at_blank.abs())
}
