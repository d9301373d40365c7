//! Input-referred current noise of the readout, gm sizing for a target
//! noise-peaking frequency, and time-domain synthesis of noise with a given
//! power spectral density.
//!
//! The PSD is the lumped two-term form: a cell-dependent term from the
//! voltage-noise contributors that rises as `(ωC_dl)²`, and a flat
//! current-conveyor term with a 1/f corner. In sample-and-hold mode the
//! amplifiers are disconnected while recording, so only the second term
//! remains.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cell::ElectrochemicalCell;
use crate::error::{domain, Error, Result};
use crate::rng::seeded_rng;
use crate::trace::Trace;
use crate::units::{BOLTZMANN, ROOM_TEMPERATURE};

/// Lower integration limit for integrated noise, Hz.
pub const DEFAULT_F_MIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    Feedback,
    SampleHold,
}

impl std::str::FromStr for ReadoutMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "feedback" => Ok(ReadoutMode::Feedback),
            "sample_hold" | "sample-hold" | "sh" => Ok(ReadoutMode::SampleHold),
            other => Err(format!("unknown readout mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    /// Transconductance of the feedback-amplifier input devices, S.
    pub gm1: f64,
    /// Transconductance of the current-conveyor devices, S.
    pub gm2: f64,
    /// Number of voltage-noise contributors.
    pub n1: u32,
    /// Number of current-noise contributors.
    pub n2: u32,
    /// Technology noise factor.
    pub gamma: f64,
    /// K
    pub temp: f64,
    /// 1/f corner of the flat term, Hz.
    pub flicker_corner: f64,
    pub mode: ReadoutMode,
}

impl Default for NoiseBudget {
    fn default() -> Self {
        let gm2 = 30e-6;
        Self {
            gm1: required_gm1(100e-9, gm2, 2.0 * PI * 1e3).expect("positive inputs"),
            gm2,
            n1: 3,
            n2: 3,
            gamma: 1.0,
            temp: ROOM_TEMPERATURE,
            flicker_corner: 300.0,
            mode: ReadoutMode::SampleHold,
        }
    }
}

impl NoiseBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.gm1 > 0.0 && self.gm2 > 0.0) {
            return Err(Error::Config("gm1 and gm2 must be > 0".into()));
        }
        if self.n1 < 1 || self.n2 < 1 {
            return Err(Error::Config("n1 and n2 must be >= 1".into()));
        }
        if !(self.temp > 0.0) {
            return Err(Error::Config("temp must be > 0".into()));
        }
        if !(self.flicker_corner >= 0.0) {
            return Err(Error::Config("flicker_corner must be >= 0".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config("gamma must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_mode(self, mode: ReadoutMode) -> Self {
        Self { mode, ..self }
    }

    /// Cell-dependent density at `f` (zero in sample-and-hold mode), A²/Hz.
    pub fn cell_term(&self, f: f64, cell: &ElectrochemicalCell) -> f64 {
        match self.mode {
            ReadoutMode::SampleHold => 0.0,
            ReadoutMode::Feedback => {
                let w_c = 2.0 * PI * f * cell.c_dl;
                f64::from(self.n1) * w_c * w_c * 8.0 * BOLTZMANN * self.temp * self.gamma / self.gm1
            }
        }
    }

    /// Current-conveyor density at `f`, A²/Hz.
    pub fn conveyor_term(&self, f: f64) -> f64 {
        self.white_level() * (1.0 + self.flicker_corner / f)
    }

    /// Flat part of the conveyor density, `n2·4kTγ·gm2`.
    pub fn white_level(&self) -> f64 {
        f64::from(self.n2) * 4.0 * BOLTZMANN * self.temp * self.gamma * self.gm2
    }

    /// Noise power integrated from `f_min` to `bw`, A².
    pub fn integrated_power(&self, cell: &ElectrochemicalCell, f_min: f64, bw: f64) -> f64 {
        if !(bw > f_min) {
            return 0.0;
        }
        let flat = self.white_level() * ((bw - f_min) + self.flicker_corner * (bw / f_min).ln());
        let cellp = match self.mode {
            ReadoutMode::SampleHold => 0.0,
            ReadoutMode::Feedback => {
                let k = 2.0 * PI * cell.c_dl;
                f64::from(self.n1) * k * k * 8.0 * BOLTZMANN * self.temp * self.gamma / self.gm1
                    * (bw.powi(3) - f_min.powi(3))
                    / 3.0
            }
        };
        flat + cellp
    }

    /// Rescales `gamma` so the integrated noise over `[f_min, bw]` equals
    /// `target_rms`. Both PSD terms are proportional to `gamma`.
    pub fn calibrate_gamma(
        self,
        cell: &ElectrochemicalCell,
        f_min: f64,
        bw: f64,
        target_rms: f64,
    ) -> Result<Self> {
        let p = self.integrated_power(cell, f_min, bw);
        if !(p > 0.0 && target_rms > 0.0) {
            return Err(Error::Config(
                "cannot calibrate gamma against zero noise".into(),
            ));
        }
        Ok(Self {
            gamma: self.gamma * target_rms * target_rms / p,
            ..self
        })
    }

    /// Solves `gm1` (feedback mode) so that the integrated noise over
    /// `[f_min, bw]` for `cell` equals `target_rms`.
    pub fn calibrate_gm1(
        self,
        cell: &ElectrochemicalCell,
        f_min: f64,
        bw: f64,
        target_rms: f64,
    ) -> Result<Self> {
        let fb = self.with_mode(ReadoutMode::Feedback);
        let flat = fb
            .with_mode(ReadoutMode::SampleHold)
            .integrated_power(cell, f_min, bw);
        let cell_part = fb.integrated_power(cell, f_min, bw) - flat;
        let needed = target_rms * target_rms - flat;
        if !(needed > 0.0) {
            return Err(Error::Config(
                "target noise is below the conveyor floor; gm1 cannot reach it".into(),
            ));
        }
        Ok(Self {
            gm1: self.gm1 * cell_part / needed,
            mode: ReadoutMode::Feedback,
            ..self
        })
    }
}

/// Input-referred current-noise density at `f`, A²/Hz.
pub fn input_referred_psd(f: f64, budget: &NoiseBudget, cell: &ElectrochemicalCell) -> Result<f64> {
    if !(f > 0.0) {
        return Err(domain(format!("frequency must be > 0, got {f}")));
    }
    Ok(budget.cell_term(f, cell) + budget.conveyor_term(f))
}

/// `gm1 = (2/gm2)·(omega_peak·c_dl)²`: the input-device transconductance that
/// places the noise-peaking corner at `omega_peak` when both contributor
/// groups have the same count.
pub fn required_gm1(c_dl: f64, gm2: f64, omega_peak: f64) -> Result<f64> {
    if !(c_dl > 0.0 && gm2 > 0.0 && omega_peak > 0.0) {
        return Err(domain("c_dl, gm2 and omega_peak must be > 0"));
    }
    let wc = omega_peak * c_dl;
    Ok(2.0 / gm2 * wc * wc)
}

/// RMS noise current over `[DEFAULT_F_MIN, bw]` with a brick-wall filter.
pub fn integrated_rms(budget: &NoiseBudget, cell: &ElectrochemicalCell, bw: f64) -> f64 {
    integrated_rms_from(budget, cell, DEFAULT_F_MIN, bw)
}

pub fn integrated_rms_from(
    budget: &NoiseBudget,
    cell: &ElectrochemicalCell,
    f_min: f64,
    bw: f64,
) -> f64 {
    budget.integrated_power(cell, f_min, bw).sqrt()
}

/// A one-sided PSD tabulated on a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePsd {
    /// Hz, strictly increasing.
    pub grid: Vec<f64>,
    /// A²/Hz, nonnegative.
    pub density: Vec<f64>,
}

impl NoisePsd {
    pub fn new(grid: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if grid.len() != density.len() || grid.is_empty() {
            return Err(Error::Config(
                "PSD grid and density must be equal, nonempty".into(),
            ));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] < 0.0 {
            return Err(Error::Config(
                "PSD grid must be nonnegative and strictly increasing".into(),
            ));
        }
        if density.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::Config("PSD density must be finite and >= 0".into()));
        }
        Ok(Self { grid, density })
    }

    /// Tabulates a budget on `grid`.
    pub fn from_budget(
        budget: &NoiseBudget,
        cell: &ElectrochemicalCell,
        grid: Vec<f64>,
    ) -> Result<Self> {
        let density = grid
            .iter()
            .map(|&f| input_referred_psd(f, budget, cell))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, density)
    }

    /// Flat density `level` on `[f_lo, f_hi]` (two grid points).
    pub fn flat(level: f64, f_lo: f64, f_hi: f64) -> Result<Self> {
        Self::new(vec![f_lo, f_hi], vec![level, level])
    }

    /// Linear interpolation, zero outside the grid.
    pub fn density_at(&self, f: f64) -> f64 {
        let g = &self.grid;
        if f < g[0] || f > g[g.len() - 1] {
            return 0.0;
        }
        if g.len() == 1 {
            return self.density[0];
        }
        let i = g.partition_point(|&x| x <= f).clamp(1, g.len() - 1);
        let (f0, f1) = (g[i - 1], g[i]);
        let (d0, d1) = (self.density[i - 1], self.density[i]);
        d0 + (d1 - d0) * (f - f0) / (f1 - f0)
    }

    pub fn max_frequency(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// CSV with header `f_Hz,psd_A2Hz`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("f_Hz,psd_A2Hz\n");
        for (f, d) in self.grid.iter().zip(&self.density) {
            out.push_str(&format!("{f},{d}\n"));
        }
        out
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|k| {
                    if k == 0 {
                        lo
                    } else if k == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * k as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Zero-mean Gaussian noise whose one-sided PSD follows `psd`, produced by
/// shaping white noise in the frequency domain.
pub fn synthesize_noise(psd: &NoisePsd, n: usize, dt: f64, seed: u64) -> Result<Trace> {
    if !(dt > 0.0) {
        return Err(domain("dt must be > 0"));
    }
    if 0.5 / dt < psd.max_frequency() * (1.0 - 1e-12) {
        return Err(Error::Config(format!(
            "PSD extends to {} Hz, above the Nyquist frequency {} Hz",
            psd.max_frequency(),
            0.5 / dt
        )));
    }
    if n == 0 {
        return Trace::new(0.0, dt, Vec::new());
    }
    let mut rng = seeded_rng(seed, &[0x6e_6f69_7365]);
    let fs = 1.0 / dt;
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        let gain = if k == 0 {
            0.0
        } else {
            (psd.density_at(f) * fs / 2.0).sqrt()
        };
        *z *= gain;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    Trace::new(0.0, dt, buf.iter().map(|z| z.re * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn equal_budget() -> NoiseBudget {
        NoiseBudget {
            gm1: 26.4e-3,
            gm2: 30e-6,
            n1: 3,
            n2: 3,
            gamma: 1.0,
            flicker_corner: 0.0,
            mode: ReadoutMode::Feedback,
            ..Default::default()
        }
    }

    #[test]
    fn sample_hold_ignores_cell_capacitance() {
        let b = NoiseBudget::default();
        let vals: Vec<f64> = [10e-9, 100e-9, 200e-9]
            .iter()
            .map(|&c| {
                let cell = ElectrochemicalCell {
                    c_dl: c,
                    ..Default::default()
                };
                input_referred_psd(1e3, &b, &cell).unwrap()
            })
            .collect();
        assert_eq!(vals[0], vals[1]);
        assert_eq!(vals[1], vals[2]);
    }

    #[test]
    fn feedback_cell_term_follows_omega_squared() {
        let b = equal_budget();
        let cell = ElectrochemicalCell::default();
        assert!(rel(b.cell_term(20e3, &cell), 4.0 * b.cell_term(10e3, &cell)) < 1e-12);
    }

    #[test]
    fn terms_cross_near_one_kilohertz() {
        // oracle: bisection on cell_term(f) - conveyor_term(f)
        let b = equal_budget();
        let cell = ElectrochemicalCell::default();
        let (mut lo, mut hi) = (10.0_f64, 1e5_f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if b.cell_term(mid, &cell) < b.conveyor_term(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 1e3).abs() / 1e3 < 0.01, "crossing at {lo}");
    }

    #[test]
    fn required_gm1_examples() {
        let g = required_gm1(100e-9, 30e-6, 2.0 * PI * 1e3).unwrap();
        assert!((g - 26.32e-3).abs() < 0.01e-3);
        assert!(rel(g, 26.4e-3) < 0.01);
        let half = required_gm1(50e-9, 30e-6, 2.0 * PI * 1e3).unwrap();
        assert!(rel(half, g / 4.0) < 1e-12);
        let g2 = required_gm1(100e-9, 30e-6, 2.0 * PI * 2e3).unwrap();
        assert!((g2 - 105.3e-3).abs() < 0.05e-3);
        assert!(required_gm1(0.0, 30e-6, 1.0).is_err());
    }

    #[test]
    fn required_gm1_balances_the_terms() {
        for (c, gm2, f) in [
            (100e-9, 30e-6, 1e3),
            (10e-9, 5e-6, 3.3e3),
            (1e-6, 1e-4, 200.0),
        ] {
            let w = 2.0 * PI * f;
            let b = NoiseBudget {
                gm1: required_gm1(c, gm2, w).unwrap(),
                gm2,
                flicker_corner: 0.0,
                mode: ReadoutMode::Feedback,
                ..Default::default()
            };
            let cell = ElectrochemicalCell {
                c_dl: c,
                ..Default::default()
            };
            assert!(rel(b.cell_term(f, &cell), b.conveyor_term(f)) < 1e-9);
        }
    }

    #[test]
    fn integrated_rms_examples() {
        let cell = ElectrochemicalCell::default();
        let flat = NoiseBudget {
            flicker_corner: 0.0,
            ..Default::default()
        };
        let rms = integrated_rms(&flat, &cell, 2.5e3);
        assert!((rms - 61e-12).abs() < 0.5e-12, "{rms}");
        assert_eq!(integrated_rms(&flat, &cell, 0.5), 0.0);
        let fb = NoiseBudget::default().with_mode(ReadoutMode::Feedback);
        let rms = integrated_rms(&fb, &cell, 2.5e3);
        assert!(rms > 100e-12 && rms < 300e-12, "{rms}");
    }

    #[test]
    fn integrated_power_matches_quadrature() {
        // oracle: composite Simpson on a log-spaced variable
        let cell = ElectrochemicalCell::default();
        let b = NoiseBudget::default().with_mode(ReadoutMode::Feedback);
        let (a, z) = (1.0f64.ln(), 2.5e3f64.ln());
        let n = 20_000;
        let h = (z - a) / n as f64;
        let g = |u: f64| {
            let f = u.exp();
            input_referred_psd(f, &b, &cell).unwrap() * f
        };
        let mut s = g(a) + g(z);
        for k in 1..n {
            s += g(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let quad = s * h / 3.0;
        assert!(rel(b.integrated_power(&cell, 1.0, 2.5e3), quad) < 1e-9);
    }

    #[test]
    fn sample_hold_rms_insensitive_to_capacitance() {
        let b = NoiseBudget::default();
        let base = integrated_rms(
            &b,
            &ElectrochemicalCell {
                c_dl: 10e-9,
                ..Default::default()
            },
            2.5e3,
        );
        for c in log_grid(10e-9, 1e-6, 9) {
            let r = integrated_rms(
                &b,
                &ElectrochemicalCell {
                    c_dl: c,
                    ..Default::default()
                },
                2.5e3,
            );
            assert!(rel(r, base) < 1e-3);
        }
    }

    #[test]
    fn feedback_minimum_moves_down_with_capacitance() {
        let b = NoiseBudget::default().with_mode(ReadoutMode::Feedback);
        let grid = log_grid(1.0, 1e6, 4000);
        let argmin = |c: f64| {
            let cell = ElectrochemicalCell {
                c_dl: c,
                ..Default::default()
            };
            let vals: Vec<f64> = grid
                .iter()
                .map(|&f| input_referred_psd(f, &b, &cell).unwrap())
                .collect();
            let i = (0..vals.len())
                .min_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap())
                .unwrap();
            // unique interior minimum: strictly decreasing before, increasing after
            assert!(i > 0 && i < vals.len() - 1);
            assert!(vals[..=i].windows(2).all(|w| w[1] < w[0]));
            assert!(vals[i..].windows(2).all(|w| w[1] > w[0]));
            grid[i]
        };
        let f10 = argmin(10e-9);
        let f100 = argmin(100e-9);
        let f1000 = argmin(1e-6);
        assert!(f10 > f100 && f100 > f1000);
    }

    #[test]
    fn calibration_hits_target() {
        let cell = ElectrochemicalCell::default();
        let sh = NoiseBudget::default()
            .calibrate_gamma(&cell, 1.0, 2.5e3, 15.2e-12)
            .unwrap();
        assert!(rel(integrated_rms(&sh, &cell, 2.5e3), 15.2e-12) < 1e-12);
        let fb = NoiseBudget::default()
            .calibrate_gm1(&cell, 1.0, 2.5e3, 4.36e-9)
            .unwrap();
        assert!(rel(integrated_rms(&fb, &cell, 2.5e3), 4.36e-9) < 1e-12);
        assert!(NoiseBudget::default()
            .calibrate_gm1(&cell, 1.0, 2.5e3, 1e-15)
            .is_err());
    }

    #[test]
    fn psd_interpolation_and_csv() {
        let p = NoisePsd::new(vec![1.0, 3.0], vec![2.0, 4.0]).unwrap();
        assert_eq!(p.density_at(2.0), 3.0);
        assert_eq!(p.density_at(0.5), 0.0);
        assert_eq!(p.density_at(3.5), 0.0);
        assert!(p.to_csv().starts_with("f_Hz,psd_A2Hz\n1,2\n"));
        assert!(NoisePsd::new(vec![2.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(NoisePsd::new(vec![1.0, 2.0], vec![-1.0, 1.0]).is_err());
    }

    #[test]
    fn synthesis_flat_variance_parseval() {
        // oracle: variance of band-limited white noise is S0·bw
        let (s0, bw) = (1e-24, 10e3);
        let psd = NoisePsd::flat(s0, 0.0, bw).unwrap();
        let n = 4096;
        let dt = 1.0 / 50e3;
        let mean_var: f64 = (0..100)
            .map(|seed| {
                let tr = synthesize_noise(&psd, n, dt, seed).unwrap();
                tr.samples.iter().map(|x| x * x).sum::<f64>() / n as f64
            })
            .sum::<f64>()
            / 100.0;
        assert!(rel(mean_var, s0 * bw) < 0.1, "{mean_var}");
    }

    #[test]
    fn synthesis_matches_shaped_psd() {
        let cell = ElectrochemicalCell::default();
        let b = NoiseBudget::default().with_mode(ReadoutMode::Feedback);
        let dt = 1.0 / 20e3;
        let psd = NoisePsd::from_budget(&b, &cell, log_grid(1.0, 10e3, 400)).unwrap();
        let n = 2048;
        let mut acc = vec![0.0; n / 2];
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(n);
        for seed in 0..100 {
            let tr = synthesize_noise(&psd, n, dt, seed).unwrap();
            let mut buf: Vec<Complex64> =
                tr.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            fft.process(&mut buf);
            for k in 1..n / 2 {
                acc[k] += 2.0 * dt * buf[k].norm_sqr() / n as f64 / 100.0;
            }
        }
        // compare band averages of 32 bins in-band
        for start in (32..n / 2 - 32).step_by(128) {
            let est: f64 = acc[start..start + 32].iter().sum::<f64>() / 32.0;
            let target: f64 = (start..start + 32)
                .map(|k| psd.density_at(k as f64 / (n as f64 * dt)))
                .sum::<f64>()
                / 32.0;
            assert!(rel(est, target) < 0.1, "bin {start}: {est} vs {target}");
        }
    }

    #[test]
    fn synthesis_edge_cases() {
        let zero = NoisePsd::flat(0.0, 0.0, 1e3).unwrap();
        let tr = synthesize_noise(&zero, 128, 1e-4, 3).unwrap();
        assert!(tr.samples.iter().all(|&x| x == 0.0));
        let psd = NoisePsd::flat(1e-24, 0.0, 1e3).unwrap();
        let a = synthesize_noise(&psd, 256, 1e-4, 9).unwrap();
        let b = synthesize_noise(&psd, 256, 1e-4, 9).unwrap();
        assert_eq!(a, b);
        let mean = a.samples.iter().sum::<f64>() / 256.0;
        assert!(mean.abs() < 1e-12 * a.peak_abs().max(1e-30) * 256.0);
        assert!(synthesize_noise(&psd, 256, 1e-3, 0).is_err());
    }
}
