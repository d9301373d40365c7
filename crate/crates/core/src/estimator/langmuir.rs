//! Langmuir calibration fit, `s = s_max·c/(c + k_d)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangmuirFit {
    /// Signal at saturation; negative for signals that fall with binding.
    pub s_max: f64,
    /// mol/L.
    pub k_d: f64,
    pub residual_rms: f64,
    /// False for flat data or when the optimum sits on the search bound.
    pub identifiable: bool,
}

impl LangmuirFit {
    /// Analytic slope at zero concentration, signal per mol/L.
    pub fn slope_at_blank(&self) -> f64 {
        if self.identifiable {
            self.s_max / self.k_d
        } else {
            0.0
        }
    }
}

/// Reduced problem in `u = ln k_d`: `s_max` is solved linearly.
struct Reduced<'a> {
    c: &'a [f64],
    s: &'a [f64],
}

impl Reduced<'_> {
    fn basis(&self, u: f64) -> Vec<f64> {
        let k = u.exp();
        self.c.iter().map(|c| c / (c + k)).collect()
    }

    fn amplitude(&self, phi: &[f64]) -> f64 {
        let num: f64 = phi.iter().zip(self.s).map(|(p, s)| p * s).sum();
        let den: f64 = phi.iter().map(|p| p * p).sum();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    fn cost(&self, u: f64) -> f64 {
        let phi = self.basis(u);
        let a = self.amplitude(&phi);
        phi.iter()
            .zip(self.s)
            .map(|(p, s)| (s - a * p).powi(2))
            .sum::<f64>()
            * 0.5
    }

    /// Exact derivative of the reduced cost. The residual is orthogonal to
    /// the basis, so only the explicit dependence survives.
    fn gradient(&self, u: f64) -> f64 {
        let k = u.exp();
        let phi = self.basis(u);
        let a = self.amplitude(&phi);
        self.c
            .iter()
            .zip(&phi)
            .zip(self.s)
            .map(|((c, p), s)| {
                let r = s - a * p;
                let dphi = -c * k / (c + k).powi(2);
                -r * a * dphi
            })
            .sum()
    }
}

/// Least-squares Langmuir fit over `(concentration, signal)` points.
pub fn fit_langmuir(points: &[(f64, f64)]) -> Result<LangmuirFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "Langmuir fit needs >= 3 distinct concentrations, got {}",
            distinct.len()
        )));
    }
    if points
        .iter()
        .any(|(c, s)| !(*c >= 0.0) || !c.is_finite() || !s.is_finite())
    {
        return Err(Error::Domain(
            "Langmuir points must be finite with c >= 0".into(),
        ));
    }
    let c: Vec<f64> = points.iter().map(|p| p.0).collect();
    let s: Vec<f64> = points.iter().map(|p| p.1).collect();
    let first = s[0];
    if s.iter().all(|v| *v == first) {
        return Ok(LangmuirFit {
            s_max: first,
            k_d: f64::NAN,
            residual_rms: 0.0,
            identifiable: false,
        });
    }
    let positive: Vec<f64> = distinct.iter().copied().filter(|v| *v > 0.0).collect();
    let lo = (positive[0] * 1e-4).ln();
    let hi = (positive[positive.len() - 1] * 1e4).ln();
    let problem = Reduced { c: &c, s: &s };

    // coarse scan, then bisect the gradient inside the best bracket
    const N: usize = 400;
    let grid: Vec<f64> = (0..=N)
        .map(|i| lo + (hi - lo) * i as f64 / N as f64)
        .collect();
    let costs: Vec<f64> = grid.iter().map(|u| problem.cost(*u)).collect();
    let best = (0..=N)
        .min_by(|a, b| costs[*a].total_cmp(&costs[*b]))
        .unwrap();
    let n = points.len() as f64;
    if best == 0 || best == N {
        let u = grid[best];
        let phi = problem.basis(u);
        return Ok(LangmuirFit {
            s_max: problem.amplitude(&phi),
            k_d: u.exp(),
            residual_rms: (2.0 * costs[best] / n).sqrt(),
            identifiable: false,
        });
    }
    let (mut a, mut b) = (grid[best - 1], grid[best + 1]);
    let mut u = grid[best];
    if problem.gradient(a) < 0.0 && problem.gradient(b) > 0.0 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if problem.gradient(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-15 {
                break;
            }
        }
        u = 0.5 * (a + b);
    }
    let phi = problem.basis(u);
    Ok(LangmuirFit {
        s_max: problem.amplitude(&phi),
        k_d: u.exp(),
        residual_rms: (2.0 * problem.cost(u) / n).sqrt(),
        identifiable: true,
    })
}
