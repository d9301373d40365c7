//! Electrode and aptamer-reporter model: cell impedance, Langmuir binding,
//! concentration-dependent electron-transfer kinetics and ideal redox
//! transients.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::trace::Trace;
use crate::units::ELEMENTARY_CHARGE;

/// Series resistance, double-layer capacitance and the constant background
/// leakage of the working electrode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectrochemicalCell {
    /// Ω
    pub r_s: f64,
    /// F
    pub c_dl: f64,
    /// A
    pub i_leak: f64,
}

impl Default for ElectrochemicalCell {
    fn default() -> Self {
        Self {
            r_s: 100.0,
            c_dl: 100e-9,
            i_leak: 2e-9,
        }
    }
}

impl ElectrochemicalCell {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_s >= 0.0 && self.r_s.is_finite()) {
            return Err(domain(format!("r_s must be >= 0, got {}", self.r_s)));
        }
        if !(self.c_dl > 0.0 && self.c_dl.is_finite()) {
            return Err(domain(format!("c_dl must be > 0, got {}", self.c_dl)));
        }
        if !self.i_leak.is_finite() {
            return Err(domain("i_leak must be finite"));
        }
        Ok(())
    }
}

/// Structure-switching aptamer population with a methylene-blue reporter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AptamerAssay {
    /// Dissociation constant, mol/L.
    pub k_d: f64,
    /// Electron-transfer time constant of the unbound (target-free) state, s.
    pub tau_unbound: f64,
    /// Electron-transfer time constant of the fully bound state, s.
    pub tau_bound: f64,
    /// Fraction of reporters that take part in electron transfer.
    pub alpha: f64,
    /// Electrode area, m².
    pub area: f64,
    /// Probes per cm².
    pub probe_density: f64,
    pub electrons_per_probe: u32,
    /// Redox midpoint potential vs. RE, V.
    pub e_redox: f64,
}

impl Default for AptamerAssay {
    fn default() -> Self {
        Self {
            k_d: 0.5e-3,
            tau_unbound: 3.0e-3,
            tau_bound: 1.2e-3,
            alpha: 1.0,
            area: 0.25e-6,
            probe_density: 1e12,
            electrons_per_probe: 2,
            e_redox: -0.35,
        }
    }
}

impl AptamerAssay {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_d > 0.0) {
            return Err(domain(format!("k_d must be > 0, got {}", self.k_d)));
        }
        if !(self.tau_bound > 0.0 && self.tau_bound < self.tau_unbound) {
            return Err(domain(format!(
                "need 0 < tau_bound < tau_unbound, got {} and {}",
                self.tau_bound, self.tau_unbound
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(domain(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.area >= 0.0 && self.probe_density >= 0.0) {
            return Err(domain("area and probe_density must be nonnegative"));
        }
        if total_charge(self) <= 0.0 {
            return Err(domain("total reporter charge must be positive"));
        }
        Ok(())
    }

    /// Charge carried by the participating reporters, `alpha·Q_T`.
    pub fn active_charge(&self) -> f64 {
        self.alpha * total_charge(self)
    }

    /// Slope of τ(c) at c = 0, s per mol/L (negative).
    pub fn initial_tau_slope(&self) -> f64 {
        -(self.tau_unbound - self.tau_bound) / self.k_d
    }
}

/// Fraction of occupied aptamers, `c/(c + k_d)`.
pub fn langmuir_occupancy(c: f64, k_d: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(domain(format!("concentration must be >= 0, got {c}")));
    }
    if !(k_d > 0.0) {
        return Err(domain(format!("k_d must be > 0, got {k_d}")));
    }
    if c.is_infinite() {
        return Ok(1.0);
    }
    Ok(c / (c + k_d))
}

/// Electron-transfer time constant at concentration `c`: linear in
/// occupancy between the unbound and bound limits.
pub fn tau_of_concentration(c: f64, assay: &AptamerAssay) -> Result<f64> {
    let theta = langmuir_occupancy(c, assay.k_d)?;
    Ok(assay.tau_unbound - (assay.tau_unbound - assay.tau_bound) * theta)
}

/// Total reporter charge `Q_T = area·density·n·e`, C.
pub fn total_charge(assay: &AptamerAssay) -> f64 {
    let area_cm2 = assay.area * 1e4;
    area_cm2 * assay.probe_density * f64::from(assay.electrons_per_probe) * ELEMENTARY_CHARGE
}

/// `Z = r_s + 1/(j·2πf·c_dl)`.
pub fn cell_impedance(f: f64, cell: &ElectrochemicalCell) -> Result<Complex64> {
    if !(f > 0.0) {
        return Err(domain(format!("frequency must be > 0, got {f}")));
    }
    let omega = 2.0 * std::f64::consts::PI * f;
    Ok(Complex64::new(cell.r_s, -1.0 / (omega * cell.c_dl)))
}

/// Single-exponential redox current `(alpha·q_t/tau0)·exp(−t/tau0)` on a
/// uniform grid starting at `t0` with spacing `dt`.
pub fn redox_transient(
    t0: f64,
    dt: f64,
    n: usize,
    q_t: f64,
    alpha: f64,
    tau0: f64,
) -> Result<Trace> {
    if !(tau0 > 0.0) {
        return Err(domain(format!("tau0 must be > 0, got {tau0}")));
    }
    if !(t0 >= 0.0) {
        return Err(domain("time grid must be nonnegative"));
    }
    let amp = alpha * q_t / tau0;
    let samples = (0..n)
        .map(|i| amp * (-(t0 + i as f64 * dt) / tau0).exp())
        .collect();
    Trace::new(t0, dt, samples)
}

/// Evaluates the redox current on an arbitrary strictly increasing grid.
pub fn redox_current_at(t_grid: &[f64], q_t: f64, alpha: f64, tau0: f64) -> Result<Vec<f64>> {
    if !(tau0 > 0.0) {
        return Err(domain(format!("tau0 must be > 0, got {tau0}")));
    }
    if t_grid.iter().any(|&t| !(t >= 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain(
            "time grid must be nonnegative and strictly increasing",
        ));
    }
    let amp = alpha * q_t / tau0;
    Ok(t_grid.iter().map(|t| amp * (-t / tau0).exp()).collect())
}
