//! Orchestrated studies: the noise-to-LoD Monte Carlo, the end-to-end assay
//! sweep with its limit-of-detection table, and the noise/power comparison
//! between feedback and sample-and-hold readout.

use std::fmt::Write as _;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{tau_of_concentration, AptamerAssay, ElectrochemicalCell};
use crate::error::{Error, Result};
use crate::estimator::stats::{mean, std_dev};
use crate::estimator::{
    boxcar, fit_double_exp, fit_langmuir, fit_single_exp, linear_detrend, lod, pca_apply, pca_fit,
    FeatureRecord, FeatureSeries, LangmuirFit, PcaModel,
};
use crate::frontend::{apply_frontend, duty_cycle, power_energy, FrontendConfig, ShTiming};
use crate::noise::{
    integrated_rms_from, log_grid, required_gm1, NoiseBudget, ReadoutMode, DEFAULT_F_MIN,
};
use crate::protocol::{simulate_ca_transient, CaProtocol};
use crate::rng::seeded_rng;
use crate::trace::Trace;

const STREAM_MC: u64 = 0x6d63;
const STREAM_SWEEP: u64 = 0x7377;

/// Root-sum-square combination of independent uncertainty sources, all in
/// the same signal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBudget {
    pub e_electronics: f64,
    /// Sampling (mass-transport/statistical) contribution.
    pub e_msn: f64,
    pub e_background: f64,
}

impl UncertaintyBudget {
    pub fn new(e_electronics: f64, e_msn: f64, e_background: f64) -> Result<Self> {
        for v in [e_electronics, e_msn, e_background] {
            if !(v >= 0.0) {
                return Err(Error::Domain("uncertainty terms must be >= 0".into()));
            }
        }
        Ok(Self {
            e_electronics,
            e_msn,
            e_background,
        })
    }

    pub fn total(&self) -> f64 {
        (self.e_electronics.powi(2) + self.e_msn.powi(2) + self.e_background.powi(2)).sqrt()
    }
}

/// How the τ-per-concentration sensitivity is taken for the Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum McSensitivity {
    /// `(τ(0) − τ(c_high))/c_high`.
    Secant { c_high: f64 },
    /// Langmuir-model derivative at zero concentration.
    Initial,
}

impl McSensitivity {
    pub fn slope(&self, assay: &AptamerAssay) -> Result<f64> {
        match *self {
            McSensitivity::Initial => Ok(assay.initial_tau_slope().abs()),
            McSensitivity::Secant { c_high } => {
                if !(c_high > 0.0) {
                    return Err(Error::Config(format!(
                        "mc_c_high must be > 0, got {c_high}"
                    )));
                }
                let d = tau_of_concentration(0.0, assay)? - tau_of_concentration(c_high, assay)?;
                Ok(d.abs() / c_high)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    /// A rms, ascending.
    pub noise_levels: Vec<f64>,
    pub trials: usize,
    /// Time constant of the simulated transient, s.
    pub tau: f64,
    pub n_samples: usize,
    pub sample_rate: f64,
    pub sensitivity: McSensitivity,
    /// Concentration uncertainty target as a fraction of `K_D`.
    pub target_fraction: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            noise_levels: log_grid(10e-12, 10e-9, 12),
            trials: 500,
            tau: AptamerAssay::default().tau_unbound,
            n_samples: 25,
            sample_rate: 2.5e3,
            sensitivity: McSensitivity::Secant { c_high: 2e-3 },
            target_fraction: 0.01,
        }
    }
}

impl McOptions {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 100 {
            return Err(Error::Config(format!(
                "mc_trials must be >= 100, got {}",
                self.trials
            )));
        }
        if self.noise_levels.is_empty() {
            return Err(Error::Config("mc_noise_levels must not be empty".into()));
        }
        if self
            .noise_levels
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::Config(
                "mc_noise_levels must be finite and >= 0".into(),
            ));
        }
        if self.noise_levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "mc_noise_levels must be strictly ascending".into(),
            ));
        }
        if !(self.tau > 0.0) || !(self.sample_rate > 0.0) {
            return Err(Error::Config(
                "mc_tau and mc_sample_rate must be > 0".into(),
            ));
        }
        if self.n_samples < 8 {
            return Err(Error::Config(format!(
                "mc_samples must be >= 8, got {}",
                self.n_samples
            )));
        }
        if !(self.target_fraction > 0.0) {
            return Err(Error::Config("mc_target_fraction must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub noise_levels: Vec<f64>,
    pub sigma_tau: Vec<f64>,
    pub sigma_c: Vec<f64>,
    /// Non-converged fits dropped at each level.
    pub excluded: Vec<usize>,
    /// Noise at which `sigma_c` reaches the target; `None` when the sweep
    /// never crosses it.
    pub budget_noise: Option<f64>,
    /// |dτ/dc| used for the mapping, s per mol/L.
    pub sensitivity: f64,
    pub target_sigma_c: f64,
}

impl McResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("noise_A,sigma_tau_s,sigma_c_M,excluded\n");
        for i in 0..self.noise_levels.len() {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{}",
                self.noise_levels[i], self.sigma_tau[i], self.sigma_c[i], self.excluded[i]
            );
        }
        s
    }
}

/// Spread of the fitted time constant at each noise level.
///
/// Trial `k` draws the same unit-variance noise at every level (common
/// random numbers), so the curve is smooth in the noise level and the
/// crossing interpolation is not dominated by Monte Carlo scatter.
pub fn mc_noise_to_lod(
    cell: &ElectrochemicalCell,
    assay: &AptamerAssay,
    opts: &McOptions,
    seed: u64,
) -> Result<McResult> {
    cell.validate()?;
    assay.validate()?;
    opts.validate()?;
    let slope = opts.sensitivity.slope(assay)?;
    if !(slope > 0.0) {
        return Err(Error::Experiment(
            "assay has no τ sensitivity to concentration".into(),
        ));
    }
    let dt = 1.0 / opts.sample_rate;
    let clean: Vec<f64> = (0..opts.n_samples)
        .map(|k| assay.active_charge() / opts.tau * (-(k as f64) * dt / opts.tau).exp())
        .collect();
    let unit_noise: Vec<Vec<f64>> = (0..opts.trials)
        .map(|k| {
            let mut rng = seeded_rng(seed, &[STREAM_MC, k as u64]);
            (0..opts.n_samples)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect();

    let mut sigma_tau = Vec::new();
    let mut excluded = Vec::new();
    for &level in &opts.noise_levels {
        let fits: Vec<Option<f64>> = unit_noise
            .par_iter()
            .map(|z| {
                let samples = clean.iter().zip(z).map(|(c, n)| c + level * n).collect();
                let trace = Trace::new(0.0, dt, samples).ok()?;
                let f = fit_single_exp(&trace, 0.0).ok()?;
                (f.converged && f.identifiable).then_some(f.tau)
            })
            .collect();
        let taus: Vec<f64> = fits.iter().flatten().copied().collect();
        let dropped = fits.len() - taus.len();
        if dropped as f64 > 0.05 * opts.trials as f64 {
            return Err(Error::Experiment(format!(
                "{dropped} of {} fits failed at noise {level:e} A (limit 5%)",
                opts.trials
            )));
        }
        excluded.push(dropped);
        sigma_tau.push(std_dev(&taus));
    }
    let sigma_c: Vec<f64> = sigma_tau.iter().map(|s| s / slope).collect();
    let target = opts.target_fraction * assay.k_d;
    let budget_noise = crossing(&opts.noise_levels, &sigma_c, target);
    Ok(McResult {
        noise_levels: opts.noise_levels.clone(),
        sigma_tau,
        sigma_c,
        excluded,
        budget_noise,
        sensitivity: slope,
        target_sigma_c: target,
    })
}

/// First upward crossing of `target`, interpolated in log-log space (linear
/// when an endpoint is zero).
fn crossing(x: &[f64], y: &[f64], target: f64) -> Option<f64> {
    for i in 1..x.len() {
        let (x0, x1, y0, y1) = (x[i - 1], x[i], y[i - 1], y[i]);
        if y0 <= target && y1 >= target {
            if y1 == y0 {
                return Some(x0);
            }
            if x0 > 0.0 && y0 > 0.0 {
                let f = (target.ln() - y0.ln()) / (y1.ln() - y0.ln());
                return Some((x0.ln() + f * (x1.ln() - x0.ln())).exp());
            }
            return Some(x0 + (target - y0) / (y1 - y0) * (x1 - x0));
        }
    }
    None
}

/// One row of the acquisition/energy/LoD comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LodRow {
    pub method: String,
    /// s
    pub acquisition_time: f64,
    /// J
    pub energy: f64,
    /// mol/L; infinite when the method showed no sensitivity.
    pub lod: f64,
    /// `simulated` or `reference` (measured benchmark, not computed here).
    pub source: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LodTable {
    pub rows: Vec<LodRow>,
}

impl LodTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,acquisition_time_s,energy_J,lod_M,source\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{}",
                r.method, r.acquisition_time, r.energy, r.lod, r.source
            );
        }
        s
    }

    pub fn row(&self, method: &str) -> Option<&LodRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

pub const ROW_RAW: &str = "CA + S/H";
pub const ROW_PCA: &str = "CA + S/H + PCA";
pub const ROW_AVG: &str = "CA + S/H with average (N = 10)";

/// Measured benchmark figures shown next to the simulated rows for qualitative
/// comparison only.
fn reference_rows() -> Vec<LodRow> {
    let r = |m: &str, t: f64, e: f64, l: f64| LodRow {
        method: m.to_string(),
        acquisition_time: t,
        energy: e,
        lod: l,
        source: "reference".to_string(),
    };
    vec![
        r("SWV with KDM (benchtop)", f64::NAN, f64::NAN, 1.5e-6),
        r("SWV with KDM (prior CMOS)", 8.0, 50e-3, 18e-6),
        r("CA + S/H (measured)", 0.1, 22e-6, 57e-6),
        r("CA + S/H + PCA (measured)", 0.1, 22e-6, 12.3e-6),
        r(
            "CA + S/H with average (N = 10) (measured)",
            1.0,
            0.22e-3,
            3.1e-6,
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// mol/L; the first entry must be the blank (0).
    pub concentrations: Vec<f64>,
    pub cycles_per_point: usize,
    pub protocol: CaProtocol,
    pub frontend: FrontendConfig,
    pub timing: ShTiming,
    /// `None` disables amplifier noise.
    pub noise: Option<NoiseBudget>,
    pub boxcar_n: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            concentrations: vec![0.0, 0.05e-3, 0.1e-3, 0.25e-3, 0.5e-3, 1e-3, 2e-3],
            cycles_per_point: 100,
            protocol: CaProtocol::default(),
            frontend: FrontendConfig::default(),
            timing: ShTiming::default(),
            noise: Some(calibrated_sample_hold_budget(
                &ElectrochemicalCell::default(),
            )),
            boxcar_n: 10,
        }
    }
}

impl SweepOptions {
    pub fn validate(&self, assay: &AptamerAssay) -> Result<()> {
        let c = &self.concentrations;
        if c.len() < 4 {
            return Err(Error::Config("sweep needs >= 4 concentrations".into()));
        }
        if c[0] != 0.0 {
            return Err(Error::Config(
                "the first sweep concentration must be the blank (0)".into(),
            ));
        }
        if c.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "sweep concentrations must be strictly ascending".into(),
            ));
        }
        if c[c.len() - 1] < 2.0 * assay.k_d {
            return Err(Error::Config("sweep must reach at least 2·K_D".into()));
        }
        if self.cycles_per_point < self.boxcar_n.max(10) {
            return Err(Error::Config(
                "cycles per point must cover the PCA fit and the boxcar".into(),
            ));
        }
        self.protocol.validate()?;
        self.frontend.validate()?;
        self.timing.validate()
    }
}

/// Per-concentration statistics of the three signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub concentration: f64,
    pub cycles: usize,
    pub failed_fits: usize,
    pub degenerate_fits: usize,
    pub clipped_cycles: usize,
    pub tau1_mean: f64,
    pub tau1_std: f64,
    pub i1_mean: f64,
    pub i1_std: f64,
    pub score_mean: f64,
    pub score_std: f64,
    /// Std of the other principal component.
    pub other_score_std: f64,
    pub averaged_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub table: LodTable,
    pub features: Vec<(f64, FeatureSeries)>,
    pub points: Vec<PointStats>,
    pub pca: PcaModel,
    pub calibration_raw: LangmuirFit,
    pub calibration_pca: LangmuirFit,
    /// LoD of the PCA signal divided by √N: what ideal averaging would give.
    pub sqrt_n_expectation: f64,
}

impl SweepResult {
    pub fn points_csv(&self) -> String {
        let mut s = String::from(
            "c_M,cycles,failed,degenerate,clipped,tau1_mean_s,tau1_std_s,i1_mean_A,i1_std_A,score_mean,score_std,other_std,averaged_std\n",
        );
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:e},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                p.concentration,
                p.cycles,
                p.failed_fits,
                p.degenerate_fits,
                p.clipped_cycles,
                p.tau1_mean,
                p.tau1_std,
                p.i1_mean,
                p.i1_std,
                p.score_mean,
                p.score_std,
                p.other_score_std,
                p.averaged_std
            );
        }
        s
    }

    pub fn lod_of(&self, method: &str) -> f64 {
        self.table.row(method).map_or(f64::NAN, |r| r.lod)
    }
}

/// Fitted features of one concentration's recorded cycles.
struct PointRun {
    series: FeatureSeries,
    failed: usize,
    degenerate: usize,
    clipped: usize,
}

fn run_point(
    cell: &ElectrochemicalCell,
    assay: &AptamerAssay,
    opts: &SweepOptions,
    c: f64,
    stream: u64,
    seed: u64,
) -> Result<PointRun> {
    let protocol = CaProtocol {
        n_cycles: opts.cycles_per_point,
        ..opts.protocol
    };
    let ideal: Vec<_> = simulate_ca_transient(cell, assay, &protocol, c)?
        .into_iter()
        .filter(|t| t.delta_v > 0.0)
        .collect();
    let point_seed = crate::rng::derive_seed(seed, &[STREAM_SWEEP, stream]);
    let recorded = apply_frontend(
        &ideal,
        &opts.frontend,
        &opts.timing,
        opts.noise.as_ref(),
        cell,
        assay,
        point_seed,
    )?;
    let fits: Vec<_> = recorded
        .par_iter()
        .map(|r| fit_double_exp(&r.trace))
        .collect();
    let mut run = PointRun {
        series: FeatureSeries::new(),
        failed: 0,
        degenerate: 0,
        clipped: 0,
    };
    for (k, (rec, fit)) in recorded.iter().zip(fits).enumerate() {
        if rec.any_clipped() {
            run.clipped += 1;
        }
        let fit = fit?;
        if !fit.converged {
            run.failed += 1;
            continue;
        }
        if fit.degenerate {
            run.degenerate += 1;
        }
        let tr = &rec.trace;
        let t_end = tr.time(tr.len() - 1) + tr.dt;
        run.series
            .push(FeatureRecord::from_fit(k, &fit, tr.t0, t_end, rec.t_edge))?;
    }
    if run.series.len() < opts.boxcar_n.max(10) {
        return Err(Error::Experiment(format!(
            "only {} usable cycles at c = {c:e} M ({} failed fits)",
            run.series.len(),
            run.failed
        )));
    }
    Ok(run)
}

/// Calibration of one per-cycle signal: Langmuir fit of the blank-subtracted
/// means and the resulting LoD for a given blank spread.
fn calibrate(conc: &[f64], means: &[f64]) -> Result<LangmuirFit> {
    let pts: Vec<(f64, f64)> = conc
        .iter()
        .zip(means)
        .map(|(c, m)| (*c, m - means[0]))
        .collect();
    fit_langmuir(&pts)
}

/// End-to-end concentration sweep through the front end and the estimator.
pub fn assay_sweep(
    cell: &ElectrochemicalCell,
    assay: &AptamerAssay,
    opts: &SweepOptions,
    seed: u64,
) -> Result<SweepResult> {
    cell.validate()?;
    assay.validate()?;
    opts.validate(assay)?;
    let runs: Vec<PointRun> = (0..opts.concentrations.len())
        .into_par_iter()
        .map(|i| run_point(cell, assay, opts, opts.concentrations[i], i as u64, seed))
        .collect::<Result<_>>()?;

    // the interference structure is learned from blank cycles only, where
    // no concentration variance competes with it
    let pca = pca_fit(&runs[0].series.log_tau1_i1()?)?;
    let sc = pca.signal_component;

    let mut points = Vec::with_capacity(runs.len());
    let mut score_means = Vec::new();
    let mut tau_means = Vec::new();
    let mut blank_scores = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let pairs = run.series.tau1_i1();
        let tau1: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let i1: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let scores = pca_apply(&pca, &run.series.log_tau1_i1()?);
        let s: Vec<f64> = scores.iter().map(|v| v[sc]).collect();
        let other: Vec<f64> = scores.iter().map(|v| v[1 - sc]).collect();
        let averaged = boxcar(&linear_detrend(&s), opts.boxcar_n)?;
        if i == 0 {
            blank_scores = s.clone();
        }
        tau_means.push(mean(&tau1));
        score_means.push(mean(&s));
        points.push(PointStats {
            concentration: opts.concentrations[i],
            cycles: opts.cycles_per_point,
            failed_fits: run.failed,
            degenerate_fits: run.degenerate,
            clipped_cycles: run.clipped,
            tau1_mean: mean(&tau1),
            tau1_std: std_dev(&tau1),
            i1_mean: mean(&i1),
            i1_std: std_dev(&i1),
            score_mean: mean(&s),
            score_std: std_dev(&s),
            other_score_std: std_dev(&other),
            averaged_std: std_dev(&averaged),
        });
    }
    let cal_raw = calibrate(&opts.concentrations, &tau_means)?;
    let cal_pca = calibrate(&opts.concentrations, &score_means)?;
    let lod_raw = lod(points[0].tau1_std, cal_raw.slope_at_blank())?;
    let lod_pca = lod(std_dev(&blank_scores), cal_pca.slope_at_blank())?;
    let lod_avg = lod(points[0].averaged_std, cal_pca.slope_at_blank())?;

    let t1 = opts.timing.period;
    let tn = t1 * opts.boxcar_n as f64;
    let (_, e1) = power_energy(ReadoutMode::SampleHold, t1, &opts.frontend)?;
    let (_, en) = power_energy(ReadoutMode::SampleHold, tn, &opts.frontend)?;
    let sim = |m: &str, t: f64, e: f64, l: f64| LodRow {
        method: m.to_string(),
        acquisition_time: t,
        energy: e,
        lod: l,
        source: "simulated".to_string(),
    };
    let mut rows = vec![
        sim(ROW_RAW, t1, e1, lod_raw),
        sim(ROW_PCA, t1, e1, lod_pca),
        sim(ROW_AVG, tn, en, lod_avg),
    ];
    rows.extend(reference_rows());

    let features = opts
        .concentrations
        .iter()
        .zip(runs)
        .map(|(c, r)| (*c, r.series))
        .collect();
    Ok(SweepResult {
        table: LodTable { rows },
        features,
        points,
        pca,
        calibration_raw: cal_raw,
        calibration_pca: cal_pca,
        sqrt_n_expectation: lod_pca / (opts.boxcar_n as f64).sqrt(),
    })
}

const STREAM_FIXED: u64 = 0x66_6978_6564;

/// Spread of the PCA signal component against raw τ1 at one concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaCompensation {
    pub concentration: f64,
    pub cycles: usize,
    /// Std of z-scored ln τ1 (1 by construction, kept for the ratio line).
    pub raw_std: f64,
    pub signal_std: f64,
    /// `signal_std / raw_std`.
    pub ratio: f64,
    pub model: PcaModel,
    pub features: FeatureSeries,
}

/// Runs `opts.cycles_per_point` cycles at a fixed concentration and fits
/// the PCA model on those same cycles.
pub fn pca_compensation(
    cell: &ElectrochemicalCell,
    assay: &AptamerAssay,
    opts: &SweepOptions,
    c: f64,
    seed: u64,
) -> Result<PcaCompensation> {
    cell.validate()?;
    assay.validate()?;
    if !(c >= 0.0) {
        return Err(Error::Domain(format!(
            "concentration must be >= 0, got {c}"
        )));
    }
    let run = run_point(cell, assay, opts, c, STREAM_FIXED, seed)?;
    let pairs = run.series.log_tau1_i1()?;
    let model = pca_fit(&pairs)?;
    let scores = pca_apply(&model, &pairs);
    let z_tau: Vec<f64> = pairs.iter().map(|p| model.zscore(*p)[0]).collect();
    let signal: Vec<f64> = scores.iter().map(|v| v[model.signal_component]).collect();
    let raw_std = std_dev(&z_tau);
    let signal_std = std_dev(&signal);
    Ok(PcaCompensation {
        concentration: c,
        cycles: run.series.len(),
        raw_std,
        signal_std,
        ratio: signal_std / raw_std,
        model,
        features: run.series,
    })
}

/// Integrated noise targets the built-in readout configurations are
/// calibrated to, A rms over the report bandwidth at 100 nF.
pub const SAMPLE_HOLD_IRN_TARGET: f64 = 15.2e-12;
pub const FEEDBACK_IRN_TARGET: f64 = 4.36e-9;
pub const REPORT_BANDWIDTH: f64 = 2.5e3;

/// Default budget with the conveyor excess-noise factor scaled so that the
/// sample-and-hold readout integrates to [`SAMPLE_HOLD_IRN_TARGET`].
pub fn calibrated_sample_hold_budget(cell: &ElectrochemicalCell) -> NoiseBudget {
    NoiseBudget::default()
        .with_mode(ReadoutMode::SampleHold)
        .calibrate_gamma(
            cell,
            DEFAULT_F_MIN,
            REPORT_BANDWIDTH,
            SAMPLE_HOLD_IRN_TARGET,
        )
        .expect("default budget has nonzero noise")
}

/// Same devices in continuous feedback, with the input transconductance
/// solved so the 100 nF electrode integrates to [`FEEDBACK_IRN_TARGET`].
pub fn calibrated_feedback_budget(cell: &ElectrochemicalCell) -> Result<NoiseBudget> {
    let reference = ElectrochemicalCell {
        c_dl: 100e-9,
        ..*cell
    };
    calibrated_sample_hold_budget(&reference).calibrate_gm1(
        &reference,
        DEFAULT_F_MIN,
        REPORT_BANDWIDTH,
        FEEDBACK_IRN_TARGET,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutConfig {
    pub label: String,
    pub budget: NoiseBudget,
    /// W
    pub power: f64,
    pub duty_cycle: f64,
}

/// The two calibrated configurations plus the feedback readout with the
/// input device sized by the closed-form rule instead of calibration.
pub fn builtin_readouts(
    cell: &ElectrochemicalCell,
    fe: &FrontendConfig,
    timing: &ShTiming,
) -> Result<Vec<ReadoutConfig>> {
    let sh = calibrated_sample_hold_budget(cell);
    let fb = calibrated_feedback_budget(cell)?;
    let sized = NoiseBudget {
        gm1: required_gm1(100e-9, sh.gm2, 2.0 * std::f64::consts::PI * 1e3)?,
        ..sh.with_mode(ReadoutMode::Feedback)
    };
    Ok(vec![
        ReadoutConfig {
            label: "feedback".into(),
            budget: fb,
            power: fe.p_active,
            duty_cycle: 1.0,
        },
        ReadoutConfig {
            label: "sample_hold".into(),
            budget: sh,
            power: fe.p_sh,
            duty_cycle: duty_cycle(timing)?,
        },
        ReadoutConfig {
            label: "feedback_sized_gm1".into(),
            budget: sized,
            power: fe.p_active,
            duty_cycle: 1.0,
        },
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    /// A rms over the bandwidth at the reference capacitance.
    pub irn: f64,
    pub power: f64,
    pub duty_cycle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePowerReport {
    pub bandwidth: f64,
    pub reference_c_dl: f64,
    pub rows: Vec<ReportRow>,
    pub c_dl_grid: Vec<f64>,
    /// `irn_curves[k][j]`: config `k` at `c_dl_grid[j]`.
    pub irn_curves: Vec<Vec<f64>>,
    /// Feedback over sample-and-hold IRN at the reference capacitance.
    pub noise_ratio: f64,
    /// Feedback over sample-and-hold power.
    pub power_ratio: f64,
}

impl NoisePowerReport {
    pub fn table_csv(&self) -> String {
        let mut s = String::from("config,irn_A,power_W,duty_cycle\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e}",
                r.label, r.irn, r.power, r.duty_cycle
            );
        }
        s
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("c_dl_F");
        for r in &self.rows {
            let _ = write!(s, ",{}_A", r.label);
        }
        s.push('\n');
        for (j, c) in self.c_dl_grid.iter().enumerate() {
            let _ = write!(s, "{c:e}");
            for curve in &self.irn_curves {
                let _ = write!(s, ",{:e}", curve[j]);
            }
            s.push('\n');
        }
        s
    }
}

/// IRN, power and duty cycle of each readout; the first two configs are
/// compared in the ratio lines.
pub fn noise_power_report(
    configs: &[ReadoutConfig],
    cell: &ElectrochemicalCell,
    bandwidth: f64,
    f_min: f64,
) -> Result<NoisePowerReport> {
    if configs.len() < 2 {
        return Err(Error::Config(
            "report needs at least two readout configs".into(),
        ));
    }
    if !(bandwidth > f_min) {
        return Err(Error::Config("report bandwidth must exceed f_min".into()));
    }
    let reference = ElectrochemicalCell {
        c_dl: 100e-9,
        ..*cell
    };
    let c_dl_grid = log_grid(10e-9, 1e-6, 9);
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for cfg in configs {
        cfg.budget.validate()?;
        rows.push(ReportRow {
            label: cfg.label.clone(),
            irn: integrated_rms_from(&cfg.budget, &reference, f_min, bandwidth),
            power: cfg.power,
            duty_cycle: cfg.duty_cycle,
        });
        curves.push(
            c_dl_grid
                .iter()
                .map(|&c| {
                    integrated_rms_from(
                        &cfg.budget,
                        &ElectrochemicalCell { c_dl: c, ..*cell },
                        f_min,
                        bandwidth,
                    )
                })
                .collect(),
        );
    }
    let noise_ratio = rows[0].irn / rows[1].irn;
    let power_ratio = rows[0].power / rows[1].power;
    Ok(NoisePowerReport {
        bandwidth,
        reference_c_dl: reference.c_dl,
        rows,
        c_dl_grid,
        irn_curves: curves,
        noise_ratio,
        power_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncertainty_is_root_sum_square() {
        let b = UncertaintyBudget::new(3.0, 4.0, 0.0).unwrap();
        assert_eq!(b.total(), 5.0);
        assert_eq!(UncertaintyBudget::new(2.0, 0.0, 0.0).unwrap().total(), 2.0);
        assert!(UncertaintyBudget::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn sensitivity_rules() {
        let a = AptamerAssay::default();
        let initial = McSensitivity::Initial.slope(&a).unwrap();
        assert!((initial - 3.6e-6 / 1e-6).abs() < 1e-9);
        let secant = McSensitivity::Secant { c_high: 2e-3 }.slope(&a).unwrap();
        // 1.8 ms · 0.8 over 2 mM
        assert!((secant - 0.72).abs() < 1e-12);
    }

    #[test]
    fn crossing_interpolates_in_log_space() {
        let x = [1.0, 10.0, 100.0];
        let y = [0.1, 1.0, 10.0];
        assert!((crossing(&x, &y, 3.0).unwrap() - 30.0).abs() < 1e-9);
        assert_eq!(crossing(&x, &y, 100.0), None);
        assert!((crossing(&[0.0, 2.0], &[0.0, 2.0], 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mc_zero_noise_gives_zero_spread() {
        let opts = McOptions {
            noise_levels: vec![0.0, 1e-9],
            trials: 100,
            ..McOptions::default()
        };
        let r = mc_noise_to_lod(
            &ElectrochemicalCell::default(),
            &AptamerAssay::default(),
            &opts,
            3,
        )
        .unwrap();
        assert!(r.sigma_tau[0] < 1e-9 * opts.tau, "{}", r.sigma_tau[0]);
        assert!(r.sigma_tau[1] > 0.0);
    }

    #[test]
    fn mc_rejects_bad_options() {
        let cell = ElectrochemicalCell::default();
        let a = AptamerAssay::default();
        let few = McOptions {
            trials: 10,
            ..McOptions::default()
        };
        assert!(mc_noise_to_lod(&cell, &a, &few, 0).is_err());
        let desc = McOptions {
            noise_levels: vec![2e-9, 1e-9],
            ..McOptions::default()
        };
        assert!(mc_noise_to_lod(&cell, &a, &desc, 0).is_err());
    }

    #[test]
    fn report_ratios_and_insensitivity() {
        let cell = ElectrochemicalCell::default();
        let fe = FrontendConfig::default();
        let cfgs = builtin_readouts(&cell, &fe, &ShTiming::default()).unwrap();
        let r = noise_power_report(&cfgs, &cell, REPORT_BANDWIDTH, DEFAULT_F_MIN).unwrap();
        assert!((r.rows[1].irn / SAMPLE_HOLD_IRN_TARGET - 1.0).abs() < 1e-9);
        assert!((r.rows[0].irn / FEEDBACK_IRN_TARGET - 1.0).abs() < 1e-9);
        assert!(r.noise_ratio >= 100.0);
        assert!((r.power_ratio - 23.9).abs() < 0.05);
        let sh = &r.irn_curves[1];
        assert!(sh.iter().all(|v| (v / sh[0] - 1.0).abs() < 1e-12));
        let fb = &r.irn_curves[0];
        assert!(fb.windows(2).all(|w| w[1] > w[0]));
        assert!(r.table_csv().starts_with("config,"));
        assert_eq!(r.curve_csv().lines().count(), 10);
    }

    #[test]
    fn sweep_validation() {
        let a = AptamerAssay::default();
        let mut o = SweepOptions::default();
        assert!(o.validate(&a).is_ok());
        o.concentrations = vec![0.0, 1e-4, 2e-4, 3e-4];
        assert!(o.validate(&a).is_err());
        o.concentrations = vec![1e-5, 1e-4, 1e-3, 2e-3];
        assert!(o.validate(&a).is_err());
    }
}
