//! Behavioral model of the sample-and-hold readout chain.
//!
//! Each recorded cycle starts from an ideal chronoamperometric transient and
//! passes through the non-idealities of the duty-cycled front end: a random
//! error in the held electrode potential, the resulting change in electron
//! transfer kinetics, the IR shift across the recording input impedance,
//! amplifier noise, and finally a boxcar-integrating ADC behind a current
//! mirror.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{AptamerAssay, ElectrochemicalCell};
use crate::error::{domain, Error, Result};
use crate::noise::{log_grid, synthesize_noise, NoiseBudget, NoisePsd, ReadoutMode, DEFAULT_F_MIN};
use crate::protocol::CaTransient;
use crate::rng::{derive_seed, seeded_rng};
use crate::trace::Trace;
use crate::units::{thermal_voltage, ROOM_TEMPERATURE};

const STREAM_HELD: u64 = 0x686f_6c64;
const STREAM_NOISE: u64 = 0x6e6f_6973;

/// Sub-samples simulated per ADC sample period.
const OVERSAMPLE: usize = 10;

/// Phase durations of one duty-cycled measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShTiming {
    /// Amplifiers track the electrode potential, s.
    pub t_track: f64,
    /// Charge pump drives the double layer to the new potential, s.
    pub t_pump: f64,
    /// Linear settling before the potential is held, s.
    pub t_settle: f64,
    /// Measurement repetition period, s.
    pub period: f64,
}

impl Default for ShTiming {
    fn default() -> Self {
        Self {
            t_track: 1e-3,
            t_pump: 0.4e-3,
            t_settle: 0.1e-3,
            period: 100e-3,
        }
    }
}

impl ShTiming {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_track", self.t_track),
            ("t_pump", self.t_pump),
            ("t_settle", self.t_settle),
            ("period", self.period),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.active_time() >= self.period {
            return Err(Error::Config(format!(
                "active phases ({} s) must be shorter than the period ({} s)",
                self.active_time(),
                self.period
            )));
        }
        Ok(())
    }

    pub fn active_time(&self) -> f64 {
        self.t_track + self.t_pump + self.t_settle
    }

    /// Delay from the potential step to the first recorded sample.
    pub fn record_start(&self) -> f64 {
        self.t_pump + self.t_settle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    /// Input impedance seen by the electrode while recording, Ω.
    pub z_in: f64,
    pub i_bias: f64,
    /// Hold capacitors, F.
    pub c1: f64,
    pub c2: f64,
    /// Peak-to-peak spread of the held-potential error, V.
    pub emi_vpp: f64,
    /// Sensitivity of the electron-transfer rate to potential error, 1/V.
    pub bv_slope: f64,
    /// Sensitivity of the reporter charge to the held-potential error, 1/V.
    /// The held error shifts where the step lands on the redox wave, so the
    /// charge collected by the step moves together with the rate.
    pub charge_slope: f64,
    /// ADC integration window, s.
    pub adc_t_int: f64,
    /// A, referred to the ADC input (after the mirror).
    pub adc_full_scale: f64,
    /// Resolution; 0 disables quantization and clipping.
    pub adc_bits: u32,
    pub mirror_ratio: u32,
    /// Continuous readout power, W.
    pub p_active: f64,
    /// Duty-cycled readout power, W.
    pub p_sh: f64,
}

/// `αF/RT` with α = 0.5 at room temperature.
pub fn default_bv_slope() -> f64 {
    0.5 / thermal_voltage(ROOM_TEMPERATURE)
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            z_in: 16e3,
            i_bias: 2e-6,
            c1: 1e-6,
            c2: 40e-12,
            emi_vpp: 3e-3,
            bv_slope: default_bv_slope(),
            charge_slope: default_bv_slope(),
            adc_t_int: 50e-6,
            adc_full_scale: 2e-6,
            adc_bits: 10,
            mirror_ratio: 4,
            p_active: 5.25e-3,
            p_sh: 0.22e-3,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("z_in", self.z_in),
            ("i_bias", self.i_bias),
            ("c1", self.c1),
            ("c2", self.c2),
            ("emi_vpp", self.emi_vpp),
            ("bv_slope", self.bv_slope),
            ("charge_slope", self.charge_slope),
            ("p_active", self.p_active),
            ("p_sh", self.p_sh),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("adc_t_int", self.adc_t_int),
            ("adc_full_scale", self.adc_full_scale),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.mirror_ratio == 0 {
            return Err(Error::Config("mirror_ratio must be >= 1".into()));
        }
        if self.adc_bits > 52 {
            return Err(Error::Config(format!(
                "adc_bits must be <= 52, got {}",
                self.adc_bits
            )));
        }
        Ok(())
    }

    /// Quantization step at the ADC input, A. Zero when quantization is off.
    pub fn lsb(&self) -> f64 {
        if self.adc_bits == 0 {
            0.0
        } else {
            self.adc_full_scale / 2f64.powi(self.adc_bits as i32)
        }
    }

    /// No held-potential error, no IR shift and an ideal ADC.
    pub fn ideal(self) -> Self {
        Self {
            emi_vpp: 0.0,
            z_in: 0.0,
            adc_bits: 0,
            ..self
        }
    }
}

/// One digitized transient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedCycle {
    pub cycle: usize,
    /// Absolute time of the potential step, s.
    pub t_edge: f64,
    /// Samples with times measured from the step.
    pub trace: Trace,
    /// Realized held-potential error, V.
    pub dv_held: f64,
    /// Potential droop of the held electrode, V/s.
    pub droop_slope: f64,
    /// Per-sample clipping flags.
    pub clipped: Vec<bool>,
}

impl RecordedCycle {
    pub fn any_clipped(&self) -> bool {
        self.clipped.iter().any(|c| *c)
    }
}

pub const RECORDED_CSV_HEADER: &str = "cycle,t_s,i_A,dv_held_V,clipped";

/// CSV export of a set of recorded cycles.
pub fn recorded_cycles_csv(cycles: &[RecordedCycle]) -> String {
    let mut s = String::from(RECORDED_CSV_HEADER);
    s.push('\n');
    for c in cycles {
        for (i, v) in c.trace.samples.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{}",
                c.cycle,
                c.trace.time(i),
                v,
                c.dv_held,
                u8::from(c.clipped[i])
            );
        }
    }
    s
}

/// Fraction of each period during which the amplifiers are powered.
pub fn duty_cycle(t: &ShTiming) -> Result<f64> {
    t.validate()?;
    Ok(t.active_time() / t.period)
}

/// Rate at which leakage discharges the held double layer, V/s.
pub fn droop_rate(i_leak: f64, c_dl: f64) -> Result<f64> {
    if !(c_dl > 0.0) {
        return Err(domain(format!("c_dl must be > 0, got {c_dl}")));
    }
    Ok(i_leak / c_dl)
}

/// Working-electrode potential shift from a current change across `z_in`.
pub fn we_potential_shift(delta_i: f64, z_in: f64) -> f64 {
    delta_i * z_in
}

/// Readout power and the energy for one acquisition of the given length.
pub fn power_energy(
    mode: ReadoutMode,
    acquisition_time: f64,
    cfg: &FrontendConfig,
) -> Result<(f64, f64)> {
    if !(acquisition_time > 0.0) {
        return Err(domain(format!(
            "acquisition time must be > 0, got {acquisition_time}"
        )));
    }
    let p = match mode {
        ReadoutMode::Feedback => cfg.p_active,
        ReadoutMode::SampleHold => cfg.p_sh,
    };
    Ok((p, p * acquisition_time))
}

/// Result of converting one integration window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcSample {
    /// Current referred back to the electrode, A.
    pub value: f64,
    pub clipped: bool,
}

/// Boxcar-integrates `window` (electrode current) and quantizes it through
/// the mirror onto a unipolar range `[0, full_scale)`.
pub fn adc_convert(window: &[f64], cfg: &FrontendConfig) -> AdcSample {
    let avg = window.iter().sum::<f64>() / window.len() as f64;
    if cfg.adc_bits == 0 {
        return AdcSample {
            value: avg,
            clipped: false,
        };
    }
    let m = cfg.mirror_ratio as f64;
    let lsb = cfg.lsb();
    let max_code = 2f64.powi(cfg.adc_bits as i32) - 1.0;
    let raw = (avg * m / lsb).round();
    let code = raw.clamp(0.0, max_code);
    AdcSample {
        value: code * lsb / m,
        clipped: raw != code,
    }
}

/// Runs every ideal transient through the front end.
///
/// `budget = None` disables amplifier noise. Cycles are independent and use
/// seeds derived from `(seed, step_index)`, so the output does not depend on
/// how the work is scheduled.
pub fn apply_frontend(
    ideal: &[CaTransient],
    cfg: &FrontendConfig,
    timing: &ShTiming,
    budget: Option<&NoiseBudget>,
    cell: &ElectrochemicalCell,
    assay: &AptamerAssay,
    seed: u64,
) -> Result<Vec<RecordedCycle>> {
    cfg.validate()?;
    timing.validate()?;
    cell.validate()?;
    assay.validate()?;
    let Some(first) = ideal.first() else {
        return Ok(Vec::new());
    };
    let base = &first.trace;
    if ideal
        .iter()
        .any(|t| t.trace.dt != base.dt || t.trace.len() != base.len())
    {
        return Err(Error::Domain(
            "ideal transients must share one time base".into(),
        ));
    }
    if cfg.adc_t_int > base.dt * (1.0 + 1e-9) {
        return Err(Error::Config(format!(
            "adc_t_int ({} s) must not exceed the sample period ({} s)",
            cfg.adc_t_int, base.dt
        )));
    }
    let start = (timing.record_start() / base.dt - 1e-9).ceil() as usize;
    if start + 1 >= base.len() {
        return Err(Error::Config(
            "recording starts after the end of the analysis window".into(),
        ));
    }
    let psd = match budget {
        Some(b) => {
            b.validate()?;
            let nyquist = 0.5 * OVERSAMPLE as f64 / base.dt;
            Some(NoisePsd::from_budget(
                b,
                cell,
                log_grid(DEFAULT_F_MIN, nyquist, 200),
            )?)
        }
        None => None,
    };
    let droop = droop_rate(cell.i_leak, cell.c_dl)?;
    ideal
        .par_iter()
        .map(|tr| record_cycle(tr, cfg, start, psd.as_ref(), droop, seed))
        .collect()
}

fn record_cycle(
    tr: &CaTransient,
    cfg: &FrontendConfig,
    start: usize,
    psd: Option<&NoisePsd>,
    droop: f64,
    seed: u64,
) -> Result<RecordedCycle> {
    let id = tr.step_index as u64;
    let dt = tr.trace.dt;
    let n = tr.trace.len();
    let fine_dt = dt / OVERSAMPLE as f64;
    let n_fine = n * OVERSAMPLE;
    let per_window = ((cfg.adc_t_int / fine_dt).round() as usize).clamp(1, OVERSAMPLE);

    let half = 0.5 * cfg.emi_vpp;
    let dv = if half > 0.0 {
        seeded_rng(seed, &[STREAM_HELD, id]).random_range(-half..=half)
    } else {
        0.0
    };
    let k0 = (cfg.bv_slope * dv).exp() / tr.tau;
    let charge = tr.redox_charge * (cfg.charge_slope * dv).exp();
    let sign = tr.sign();

    // held-potential error only
    let t_fine: Vec<f64> = (0..n_fine).map(|j| j as f64 * fine_dt).collect();
    let rest = |t: f64| sign * tr.capacitive_current(t) + tr.leak;
    let first_pass: Vec<f64> = t_fine
        .iter()
        .map(|&t| sign * charge * k0 * (-k0 * t).exp() + rest(t))
        .collect();

    // single-pass IR correction: the recorded current shifts the electrode
    // by z_in·i and slows the rate accordingly
    let mut current = first_pass.clone();
    if cfg.z_in > 0.0 {
        let excess: Vec<f64> = first_pass
            .iter()
            .map(|i| (-cfg.bv_slope * we_potential_shift(sign * i, cfg.z_in)).exp() - 1.0)
            .collect();
        let mut extra = 0.0;
        for j in 0..n_fine {
            if j > 0 {
                extra += 0.5 * (excess[j - 1] + excess[j]) * fine_dt;
            }
            let t = t_fine[j];
            let rate = k0 * (1.0 + excess[j]);
            let decayed = (-k0 * (t + extra)).exp();
            current[j] = sign * charge * rate * decayed + rest(t);
        }
    }

    if let Some(psd) = psd {
        let noise = synthesize_noise(psd, n_fine, fine_dt, derive_seed(seed, &[STREAM_NOISE, id]))?;
        for (c, w) in current.iter_mut().zip(&noise.samples) {
            *c += w;
        }
    }

    let mut samples = Vec::with_capacity(n - start);
    let mut clipped = Vec::with_capacity(n - start);
    for i in start..n {
        let w = &current[i * OVERSAMPLE..i * OVERSAMPLE + per_window];
        let s = adc_convert(w, cfg);
        samples.push(s.value);
        clipped.push(s.clipped);
    }
    Ok(RecordedCycle {
        cycle: tr.step_index,
        t_edge: tr.t_edge,
        trace: Trace::new(start as f64 * dt, dt, samples)?,
        dv_held: dv,
        droop_slope: droop,
        clipped,
    })
}
