//! Excitation waveforms (chronoamperometry steps, square-wave staircase)
//! and the ideal, noise-free current responses of the electrode.

use serde::{Deserialize, Serialize};

use crate::cell::{tau_of_concentration, AptamerAssay, ElectrochemicalCell};
use crate::error::{domain, Error, Result};
use crate::trace::Trace;
use crate::units::{thermal_voltage, ROOM_TEMPERATURE};

/// Chronoamperometric step protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaProtocol {
    /// V
    pub v1: f64,
    /// V
    pub v2: f64,
    /// Time between potential edges, s.
    pub half_period: f64,
    /// Analysis window after each edge, s.
    pub roi: f64,
    /// Hz
    pub sample_rate: f64,
    pub n_cycles: usize,
    /// Resistance of the charging path seen by the double layer while the
    /// current is recorded, Ω. Zero means the double layer charges
    /// instantaneously and contributes nothing after the edge.
    pub r_eff: f64,
}

impl Default for CaProtocol {
    fn default() -> Self {
        Self {
            v1: -0.2,
            v2: -0.4,
            half_period: 50e-3,
            roi: 10e-3,
            sample_rate: 20e3,
            n_cycles: 1,
            r_eff: 500.0,
        }
    }
}

impl CaProtocol {
    pub fn validate(&self) -> Result<()> {
        if !((self.v1 - self.v2).abs() > 0.0) {
            return Err(Error::Config(
                "CA step amplitude |v1 - v2| must be > 0".into(),
            ));
        }
        if !(self.half_period > 0.0 && self.roi > 0.0 && self.roi <= self.half_period) {
            return Err(Error::Config("need 0 < roi <= half_period".into()));
        }
        if !(self.sample_rate * self.roi >= 8.0) {
            return Err(Error::Config(
                "sample_rate * roi must be >= 8 samples for fitting".into(),
            ));
        }
        if !(self.r_eff >= 0.0) {
            return Err(Error::Config("r_eff must be >= 0".into()));
        }
        Ok(())
    }

    pub fn step_amplitude(&self) -> f64 {
        (self.v1 - self.v2).abs()
    }

    pub fn period(&self) -> f64 {
        2.0 * self.half_period
    }

    /// Number of samples in the analysis window.
    pub fn roi_samples(&self) -> usize {
        (self.roi * self.sample_rate).round() as usize
    }
}

/// Piecewise-constant potential: each entry is `(edge time, level)`, the
/// level holding until the next edge or `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialWaveform {
    pub edges: Vec<(f64, f64)>,
    pub end: f64,
}

impl PotentialWaveform {
    pub fn value_at(&self, t: f64) -> Option<f64> {
        if t < 0.0 || t >= self.end {
            return None;
        }
        self.edges
            .iter()
            .take_while(|(te, _)| *te <= t)
            .last()
            .map(|&(_, v)| v)
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Alternates `v1`/`v2` every half period, first edge (to `v1`) at t = 0.
pub fn generate_ca_potential(p: &CaProtocol) -> PotentialWaveform {
    let edges = (0..2 * p.n_cycles)
        .map(|k| {
            let v = if k % 2 == 0 { p.v1 } else { p.v2 };
            (k as f64 * p.half_period, v)
        })
        .collect();
    PotentialWaveform {
        edges,
        end: p.n_cycles as f64 * p.period(),
    }
}

/// Analytic decomposition of the current after one potential edge.
///
/// `current_at(t) = sign·(redox + capacitive) + leak`, with `t` measured
/// from the edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaTransient {
    pub step_index: usize,
    /// Absolute time of the edge, s.
    pub t_edge: f64,
    /// Signed potential change at the edge, V.
    pub delta_v: f64,
    /// Charge carried by the reporters, `alpha·Q_T`, C.
    pub redox_charge: f64,
    /// Electron-transfer time constant at the simulated concentration, s.
    pub tau: f64,
    /// Initial double-layer charging current magnitude, A.
    pub cap_amplitude: f64,
    /// `r_eff·c_dl`, s.
    pub cap_tau: f64,
    /// A
    pub leak: f64,
    /// Ideal current sampled over the ROI, starting at the edge.
    pub trace: Trace,
}

impl CaTransient {
    pub fn sign(&self) -> f64 {
        self.delta_v.signum()
    }

    pub fn redox_current(&self, t: f64) -> f64 {
        self.redox_charge / self.tau * (-t / self.tau).exp()
    }

    pub fn capacitive_current(&self, t: f64) -> f64 {
        if self.cap_tau > 0.0 {
            self.cap_amplitude * (-t / self.cap_tau).exp()
        } else {
            0.0
        }
    }

    pub fn current_at(&self, t: f64) -> f64 {
        self.sign() * (self.redox_current(t) + self.capacitive_current(t)) + self.leak
    }
}

/// Ideal current after every edge of the protocol at concentration `c`.
pub fn simulate_ca_transient(
    cell: &ElectrochemicalCell,
    assay: &AptamerAssay,
    p: &CaProtocol,
    c: f64,
) -> Result<Vec<CaTransient>> {
    cell.validate()?;
    assay.validate()?;
    p.validate()?;
    let tau = tau_of_concentration(c, assay)?;
    let dt = 1.0 / p.sample_rate;
    let n = p.roi_samples();
    let wave = generate_ca_potential(p);
    let mut out = Vec::with_capacity(wave.edges.len());
    for (k, &(t_edge, v)) in wave.edges.iter().enumerate() {
        let prev = if k % 2 == 0 { p.v2 } else { p.v1 };
        let delta_v = v - prev;
        let (cap_amplitude, cap_tau) = if p.r_eff > 0.0 {
            (delta_v.abs() / p.r_eff, p.r_eff * cell.c_dl)
        } else {
            (0.0, 0.0)
        };
        let mut tr = CaTransient {
            step_index: k,
            t_edge,
            delta_v,
            redox_charge: assay.active_charge(),
            tau,
            cap_amplitude,
            cap_tau,
            leak: cell.i_leak,
            trace: Trace {
                t0: 0.0,
                dt,
                samples: Vec::new(),
            },
        };
        let samples = (0..n).map(|i| tr.current_at(i as f64 * dt)).collect();
        tr.trace = Trace::new(0.0, dt, samples)?;
        out.push(tr);
    }
    Ok(out)
}

/// Square-wave voltammetry scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwvProtocol {
    pub e_start: f64,
    pub e_end: f64,
    pub e_step: f64,
    pub amplitude: f64,
    pub frequency: f64,
}

impl Default for SwvProtocol {
    fn default() -> Self {
        Self {
            e_start: -0.5,
            e_end: -0.1,
            e_step: 1e-3,
            amplitude: 25e-3,
            frequency: 400.0,
        }
    }
}

impl SwvProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_step != 0.0 && self.e_step.is_finite()) {
            return Err(Error::Config("SWV e_step must be nonzero".into()));
        }
        if !(self.frequency > 0.0) {
            return Err(Error::Config("SWV frequency must be > 0".into()));
        }
        if !(self.amplitude > 0.0) {
            return Err(Error::Config("SWV amplitude must be > 0".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.e_end - self.e_start).abs() / self.e_step.abs()).round() as usize
    }

    /// Staircase potentials, one per step, moving from `e_start` toward `e_end`.
    pub fn potentials(&self) -> Vec<f64> {
        let dir = (self.e_end - self.e_start).signum();
        let step = self.e_step.abs() * if dir == 0.0 { 1.0 } else { dir };
        (0..=self.n_steps())
            .map(|k| self.e_start + k as f64 * step)
            .collect()
    }

    /// Sampling delay after each half-cycle edge, `1/(2f)`.
    pub fn sample_delay(&self) -> f64 {
        0.5 / self.frequency
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Voltammogram {
    /// V
    pub potentials: Vec<f64>,
    /// A
    pub delta_currents: Vec<f64>,
}

impl Voltammogram {
    /// Potential and value of the largest difference current.
    pub fn peak(&self) -> (f64, f64) {
        self.potentials.iter().zip(&self.delta_currents).fold(
            (f64::NAN, f64::NEG_INFINITY),
            |best, (&e, &di)| {
                if di > best.1 {
                    (e, di)
                } else {
                    best
                }
            },
        )
    }

    /// CSV with header `e_V,di_A`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("e_V,di_A\n");
        for (e, di) in self.potentials.iter().zip(&self.delta_currents) {
            out.push_str(&format!("{e},{di}\n"));
        }
        out
    }
}

/// Unit-peak Nernstian window `sech²((e − e0)/w)`, `w = 2RT/F`.
pub fn swv_window(e: f64, e0: f64) -> f64 {
    let w = 2.0 * thermal_voltage(ROOM_TEMPERATURE);
    let s = 1.0 / ((e - e0) / w).cosh();
    s * s
}

/// Peak SWV difference current for reporter kinetics `tau`.
pub fn swv_peak_current(redox_charge: f64, tau: f64, p: &SwvProtocol) -> f64 {
    redox_charge / tau * (-p.sample_delay() / tau).exp()
}

pub fn simulate_swv_voltammogram(
    cell: &ElectrochemicalCell,
    assay: &AptamerAssay,
    p: &SwvProtocol,
    c: f64,
) -> Result<Voltammogram> {
    cell.validate()?;
    assay.validate()?;
    p.validate()?;
    let tau = tau_of_concentration(c, assay)?;
    let peak = swv_peak_current(assay.active_charge(), tau, p);
    let potentials = p.potentials();
    let delta_currents = potentials
        .iter()
        .map(|&e| swv_window(e, assay.e_redox) * peak)
        .collect();
    Ok(Voltammogram {
        potentials,
        delta_currents,
    })
}

/// Duration of one staircase scan, s.
pub fn swv_scan_time(p: &SwvProtocol) -> Result<f64> {
    if !(p.e_step != 0.0 && p.frequency > 0.0) {
        return Err(domain(
            "SWV scan needs nonzero e_step and positive frequency",
        ));
    }
    Ok(((p.e_end - p.e_start).abs() / p.e_step.abs()) / p.frequency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::redox_transient;

    #[test]
    fn ca_potential_examples() {
        let p = CaProtocol {
            n_cycles: 3,
            ..Default::default()
        };
        let w = generate_ca_potential(&p);
        assert!((p.step_amplitude() - 0.2).abs() < 1e-15);
        assert_eq!(w.edges.len(), 6);
        assert_eq!(w.edges[0], (0.0, -0.2));
        assert_eq!(w.value_at(0.06), Some(-0.4));
        assert_eq!(w.value_at(0.11), Some(-0.2));
        // 100 ms period -> 10 acquisitions per second
        assert!((1.0 / p.period() - 10.0).abs() < 1e-12);
        let empty = generate_ca_potential(&CaProtocol { n_cycles: 0, ..p });
        assert!(empty.is_empty());
        assert_eq!(empty.value_at(0.0), None);
    }

    #[test]
    fn ca_reduces_to_redox_transient() {
        let cell = ElectrochemicalCell {
            i_leak: 0.0,
            ..Default::default()
        };
        let assay = AptamerAssay::default();
        let p = CaProtocol {
            r_eff: 0.0,
            ..Default::default()
        };
        let tr = &simulate_ca_transient(&cell, &assay, &p, 0.0).unwrap()[0];
        let reference = redox_transient(
            0.0,
            1.0 / p.sample_rate,
            p.roi_samples(),
            crate::cell::total_charge(&assay),
            assay.alpha,
            3e-3,
        )
        .unwrap();
        for (a, b) in tr.trace.samples.iter().zip(&reference.samples) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
        // near-zero r_eff: capacitive term is gone after the first sample
        let p = CaProtocol { r_eff: 1e-6, ..p };
        let tr = &simulate_ca_transient(&cell, &assay, &p, 0.0).unwrap()[0];
        for (a, b) in tr.trace.samples.iter().zip(&reference.samples).skip(1) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn ca_leak_is_the_asymptote() {
        let cell = ElectrochemicalCell::default();
        let tr =
            &simulate_ca_transient(&cell, &AptamerAssay::default(), &CaProtocol::default(), 0.0)
                .unwrap()[0];
        assert!((tr.current_at(1.0) - cell.i_leak).abs() < 1e-20);
        assert!((tr.cap_tau - 50e-6).abs() < 1e-15);
        // second edge steps back down: currents reverse sign
        let p = CaProtocol::default();
        let both = simulate_ca_transient(&cell, &AptamerAssay::default(), &p, 0.0).unwrap();
        assert_eq!(both.len(), 2);
        assert!(both[1].delta_v < 0.0 && both[1].current_at(1e-3) < 0.0);
    }

    #[test]
    fn ca_concentration_sets_tau() {
        let tr = &simulate_ca_transient(
            &ElectrochemicalCell::default(),
            &AptamerAssay::default(),
            &CaProtocol::default(),
            2e-3,
        )
        .unwrap()[0];
        assert!((tr.tau - 1.56e-3).abs() < 1e-15);
    }

    #[test]
    fn swv_peak_sits_at_redox_potential() {
        let assay = AptamerAssay::default();
        let v = simulate_swv_voltammogram(
            &ElectrochemicalCell::default(),
            &assay,
            &SwvProtocol::default(),
            0.0,
        )
        .unwrap();
        let (e, _) = v.peak();
        assert!((e - assay.e_redox).abs() < 1e-9);
        assert_eq!(v.potentials.len(), 401);
        assert!(v.potentials.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn swv_frequency_sets_binding_direction() {
        // oracle: e^{-ts/tau}/tau ratio at tau = 1.2 ms vs 3 ms
        let ratio = |f: f64| {
            let ts = 0.5 / f;
            ((-ts / 1.2e-3).exp() / 1.2e-3) / ((-ts / 3e-3).exp() / 3e-3)
        };
        assert!((ratio(400.0) - 1.34).abs() < 0.005);
        assert!((ratio(60.0) - 0.0388).abs() < 0.0005);
        let q = 1e-9;
        for f in [400.0, 60.0] {
            let p = SwvProtocol {
                frequency: f,
                ..Default::default()
            };
            let r = swv_peak_current(q, 1.2e-3, &p) / swv_peak_current(q, 3e-3, &p);
            assert!((r - ratio(f)).abs() < 1e-12);
        }
    }

    #[test]
    fn swv_peak_is_maximal_at_tau_equal_sample_delay() {
        let p = SwvProtocol::default();
        let ts = p.sample_delay();
        let grid: Vec<f64> = (1..=4000).map(|k| k as f64 * 1e-6).collect();
        let best = grid
            .iter()
            .copied()
            .max_by(|a, b| {
                swv_peak_current(1.0, *a, &p)
                    .partial_cmp(&swv_peak_current(1.0, *b, &p))
                    .unwrap()
            })
            .unwrap();
        assert!((best - ts).abs() <= 1e-6);
    }

    #[test]
    fn kdm_sign_property() {
        let cell = ElectrochemicalCell::default();
        let assay = AptamerAssay::default();
        let grid = [0.0, 0.1e-3, 0.3e-3, 0.5e-3, 1e-3, 2e-3];
        let peak = |f: f64, c: f64| {
            let p = SwvProtocol {
                frequency: f,
                ..Default::default()
            };
            simulate_swv_voltammogram(&cell, &assay, &p, c)
                .unwrap()
                .peak()
                .1
        };
        for (i, &c1) in grid.iter().enumerate() {
            for &c2 in &grid[i + 1..] {
                assert!(peak(400.0, c2) > peak(400.0, c1));
                assert!(peak(60.0, c2) < peak(60.0, c1));
            }
        }
    }

    #[test]
    fn scan_time_examples() {
        let p = SwvProtocol::default();
        assert!((swv_scan_time(&p).unwrap() - 1.0).abs() < 1e-12);
        let lo = SwvProtocol {
            frequency: 60.0,
            ..p
        };
        assert!((swv_scan_time(&lo).unwrap() - 6.6667).abs() < 1e-3);
        let pair = swv_scan_time(&p).unwrap() + swv_scan_time(&lo).unwrap();
        assert!((pair - 8.0).abs() / 8.0 < 0.05);
        let zero = SwvProtocol {
            e_end: p.e_start,
            ..p
        };
        assert_eq!(swv_scan_time(&zero).unwrap(), 0.0);
    }
}
