//! `aptasense` command-line tool.
//!
//! Every subcommand builds its outputs in memory and writes them to `--out`
//! only after the whole computation succeeded, so a failed run leaves no
//! files behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use aptasense::config::{load_config, Config};
use aptasense::estimator::{
    fit_double_exp, fit_single_exp, kdm, pca_apply, pca_fit, FeatureRecord, FeatureSeries, PcaModel,
};
use aptasense::experiments::{
    assay_sweep, builtin_readouts, mc_noise_to_lod, noise_power_report, pca_compensation,
};
use aptasense::frontend::{
    apply_frontend, droop_rate, duty_cycle, power_energy, recorded_cycles_csv, we_potential_shift,
};
use aptasense::noise::{integrated_rms_from, log_grid, required_gm1, NoisePsd, ReadoutMode};
use aptasense::output::OutputSet;
use aptasense::protocol::{
    simulate_ca_transient, simulate_swv_voltammogram, swv_peak_current, SwvProtocol,
};
use aptasense::units::{parse_quantity, Dimension};
use aptasense::{cell::tau_of_concentration, Error, Result, Trace};

#[derive(Parser)]
#[command(
    name = "aptasense",
    version,
    about = "Aptamer electrochemical sensing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (`key = value` text or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_molar(s: &str) -> std::result::Result<f64, String> {
    let v = parse_quantity(s, Dimension::Molar)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("concentration must be >= 0, got {s}"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Chronoamperometric transients, ideal and through the front end.
    SimulateCa {
        #[command(flatten)]
        common: Common,
        /// Target concentration, e.g. `250 uM`.
        #[arg(long, default_value = "0", value_parser = parse_molar)]
        concentration: f64,
    },
    /// Square-wave voltammograms and the kinetic differential series.
    SimulateSwv {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "0", value_parser = parse_molar)]
        concentration: f64,
    },
    /// Input-referred noise PSD of the configured readout.
    NoisePsd {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo mapping from readout noise to concentration error.
    McLod {
        #[command(flatten)]
        common: Common,
    },
    /// Exponential fits of a `t_s,i_A` trace.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// PCA of a feature CSV, or of simulated cycles at `pca_concentration`.
    Pca {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Concentration sweep and limit-of-detection table.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Noise, power and energy bookkeeping of the readout configurations.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SimulateCa { .. } => "simulate-ca",
            Command::SimulateSwv { .. } => "simulate-swv",
            Command::NoisePsd { .. } => "noise-psd",
            Command::McLod { .. } => "mc-lod",
            Command::Fit { .. } => "fit",
            Command::Pca { .. } => "pca",
            Command::Sweep { .. } => "sweep",
            Command::Report { .. } => "report",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::SimulateCa { common, .. }
            | Command::SimulateSwv { common, .. }
            | Command::NoisePsd { common }
            | Command::McLod { common }
            | Command::Fit { common, .. }
            | Command::Pca { common, .. }
            | Command::Sweep { common }
            | Command::Report { common } => common,
        }
    }
}

fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))
}

fn simulate_ca(cfg: &Config, c: f64, seed: u64, out: &mut OutputSet) -> Result<()> {
    let ideal = simulate_ca_transient(&cfg.cell, &cfg.assay, &cfg.ca, c)?;
    let rising: Vec<_> = ideal.iter().filter(|t| t.delta_v > 0.0).cloned().collect();
    let noise = cfg.noise_enabled.then_some(cfg.noise);
    let recorded = apply_frontend(
        &rising,
        &cfg.frontend,
        &cfg.timing,
        noise.as_ref(),
        &cfg.cell,
        &cfg.assay,
        seed,
    )?;
    out.add_text("transient.csv", ideal[0].trace.to_csv());
    out.add_text("recorded.csv", recorded_cycles_csv(&recorded));
    if let Some(first) = recorded.first() {
        out.add_text("recorded_first.csv", first.trace.to_csv());
    }
    out.add_json(
        "summary.json",
        &json!({
            "concentration_M": c,
            "tau_s": tau_of_concentration(c, &cfg.assay)?,
            "redox_charge_C": cfg.assay.active_charge(),
            "edges": ideal.len(),
            "recorded_cycles": recorded.len(),
            "clipped_cycles": recorded.iter().filter(|r| r.any_clipped()).count(),
        }),
    )
}

fn simulate_swv(cfg: &Config, c: f64, out: &mut OutputSet) -> Result<()> {
    let v = simulate_swv_voltammogram(&cfg.cell, &cfg.assay, &cfg.swv, c)?;
    out.add_text("voltammogram.csv", v.to_csv());
    let at = |f: f64| SwvProtocol {
        frequency: f,
        ..cfg.swv
    };
    let peaks = |f: f64| -> Result<Vec<f64>> {
        let p = at(f);
        p.validate()?;
        cfg.sweep_concentrations
            .iter()
            .map(|&c| {
                Ok(swv_peak_current(
                    cfg.assay.active_charge(),
                    tau_of_concentration(c, &cfg.assay)?,
                    &p,
                ))
            })
            .collect()
    };
    let hi = peaks(cfg.swv_freq_hi)?;
    let lo = peaks(cfg.swv_freq_lo)?;
    let diff = kdm(
        &hi,
        &lo,
        aptasense::estimator::kdm::DEFAULT_BASELINE_FRACTION,
    )?;
    let mut csv = String::from("c_M,peak_hi_A,peak_lo_A,kdm\n");
    for (i, c) in cfg.sweep_concentrations.iter().enumerate() {
        let _ = writeln!(csv, "{c:e},{:e},{:e},{:e}", hi[i], lo[i], diff[i]);
    }
    out.add_text("kdm.csv", csv);
    let (e_peak, di_peak) = v.peak();
    out.add_json(
        "summary.json",
        &json!({
            "concentration_M": c,
            "peak_potential_V": e_peak,
            "peak_current_A": di_peak,
            "freq_hi_Hz": cfg.swv_freq_hi,
            "freq_lo_Hz": cfg.swv_freq_lo,
        }),
    )
}

fn noise_psd(cfg: &Config, out: &mut OutputSet) -> Result<()> {
    let grid = log_grid(cfg.f_min, cfg.psd_f_max, cfg.psd_points);
    let psd = NoisePsd::from_budget(&cfg.noise, &cfg.cell, grid)?;
    out.add_text("psd.csv", psd.to_csv());
    let mode = match cfg.noise.mode {
        ReadoutMode::Feedback => "feedback",
        ReadoutMode::SampleHold => "sample_hold",
    };
    out.add_json(
        "summary.json",
        &json!({
            "mode": mode,
            "bandwidth_Hz": cfg.report_bandwidth,
            "irn_A": integrated_rms_from(&cfg.noise, &cfg.cell, cfg.f_min, cfg.report_bandwidth),
        }),
    )
}

fn mc_lod(cfg: &Config, seed: u64, out: &mut OutputSet) -> Result<()> {
    let res = mc_noise_to_lod(&cfg.cell, &cfg.assay, &cfg.mc_options(), seed)?;
    out.add_text("mc_lod.csv", res.to_csv());
    out.add_json("summary.json", &res)
}

fn fit(input: &Path, out: &mut OutputSet) -> Result<()> {
    let trace = Trace::from_csv(&read_input(input)?)?;
    let double = fit_double_exp(&trace)?;
    let single = fit_single_exp(&trace, 0.0)?;
    let t_end = trace.time(trace.len() - 1) + trace.dt;
    let features = FeatureRecord::from_fit(0, &double, trace.t0, t_end, 0.0);
    out.add_json(
        "fit.json",
        &json!({
            "samples": trace.len(),
            "double_exp": double,
            "converged": double.converged,
            "single_exp": {
                "amplitude_A": single.amplitude,
                "tau_s": single.tau,
                "residual_rms_A": single.residual_rms,
                "converged": single.converged,
                "identifiable": single.identifiable,
            },
            "features": {
                "tau1_s": features.tau1, "i1_A": features.i1,
                "tau2_s": features.tau2, "i2_A": features.i2,
            },
        }),
    )
}

fn pca_outputs(model: &PcaModel, series: &FeatureSeries, out: &mut OutputSet) -> Result<()> {
    let pairs = series.log_tau1_i1()?;
    let scores = pca_apply(model, &pairs);
    let mut csv = String::from("cycle,ln_tau1,ln_i1,pc0,pc1\n");
    for ((rec, p), s) in series.records().iter().zip(&pairs).zip(&scores) {
        let _ = writeln!(
            csv,
            "{},{:e},{:e},{:e},{:e}",
            rec.cycle, p.0, p.1, s[0], s[1]
        );
    }
    out.add_text("scores.csv", csv);
    out.add_json("pca_model.json", model)
}

fn pca(cfg: &Config, input: Option<&Path>, seed: u64, out: &mut OutputSet) -> Result<()> {
    match input {
        Some(path) => {
            let series = FeatureSeries::from_csv(&read_input(path)?)?;
            let model = pca_fit(&series.log_tau1_i1()?)?;
            pca_outputs(&model, &series, out)
        }
        None => {
            let opts = cfg.sweep_options();
            let comp = pca_compensation(&cfg.cell, &cfg.assay, &opts, cfg.pca_concentration, seed)?;
            out.add_text("features.csv", comp.features.to_csv());
            pca_outputs(&comp.model, &comp.features, out)?;
            out.add_json(
                "summary.json",
                &json!({
                    "concentration_M": comp.concentration,
                    "cycles": comp.cycles,
                    "raw_std": comp.raw_std,
                    "signal_std": comp.signal_std,
                    "ratio": comp.ratio,
                    "signal_component": comp.model.signal_component,
                }),
            )
        }
    }
}

fn sweep(cfg: &Config, seed: u64, out: &mut OutputSet) -> Result<()> {
    let res = assay_sweep(&cfg.cell, &cfg.assay, &cfg.sweep_options(), seed)?;
    out.add_text("lod_table.csv", res.table.to_csv());
    out.add_text("points.csv", res.points_csv());
    let mut scatter = String::from("c_M,cycle,tau1_s,i1_A,tau2_s,i2_A\n");
    for (c, series) in &res.features {
        for r in series.records() {
            let _ = writeln!(
                scatter,
                "{c:e},{},{:e},{:e},{:e},{:e}",
                r.cycle, r.tau1, r.i1, r.tau2, r.i2
            );
        }
    }
    out.add_text("features.csv", scatter);
    out.add_json(
        "summary.json",
        &json!({
            "table": res.table,
            "pca": res.pca,
            "calibration_raw": res.calibration_raw,
            "calibration_pca": res.calibration_pca,
            "sqrt_n_expectation_M": res.sqrt_n_expectation,
        }),
    )
}

fn report(cfg: &Config, out: &mut OutputSet) -> Result<()> {
    let configs = builtin_readouts(&cfg.cell, &cfg.frontend, &cfg.timing)?;
    let rep = noise_power_report(&configs, &cfg.cell, cfg.report_bandwidth, cfg.f_min)?;
    out.add_text("noise_table.csv", rep.table_csv());
    out.add_text("irn_vs_cdl.csv", rep.curve_csv());
    let mut energy = String::from("mode,acquisition_time_s,power_W,energy_J\n");
    for (label, mode) in [
        ("feedback", ReadoutMode::Feedback),
        ("sample_hold", ReadoutMode::SampleHold),
    ] {
        for t in [0.1, 1.0] {
            let (p, e) = power_energy(mode, t, &cfg.frontend)?;
            let _ = writeln!(energy, "{label},{t:e},{p:e},{e:e}");
        }
    }
    out.add_text("energy.csv", energy);
    out.add_json(
        "summary.json",
        &json!({
            "report": rep,
            "required_gm1_S": required_gm1(100e-9, cfg.noise.gm2, 2.0 * std::f64::consts::PI * 1e3)?,
            "duty_cycle": duty_cycle(&cfg.timing)?,
            "droop_V_per_s": droop_rate(cfg.cell.i_leak, cfg.cell.c_dl)?,
            "we_shift_at_blank_peak_V": we_potential_shift(
                cfg.assay.active_charge() / cfg.assay.tau_unbound,
                cfg.frontend.z_in
            ),
        }),
    )
}

fn run(cmd: &Command) -> Result<()> {
    let common = cmd.common();
    let cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => Config::default(),
    };
    let seed = common.seed;
    let mut out = OutputSet::new();
    match cmd {
        Command::SimulateCa { concentration, .. } => {
            simulate_ca(&cfg, *concentration, seed, &mut out)?
        }
        Command::SimulateSwv { concentration, .. } => simulate_swv(&cfg, *concentration, &mut out)?,
        Command::NoisePsd { .. } => noise_psd(&cfg, &mut out)?,
        Command::McLod { .. } => mc_lod(&cfg, seed, &mut out)?,
        Command::Fit { input, .. } => fit(input, &mut out)?,
        Command::Pca { input, .. } => pca(&cfg, input.as_deref(), seed, &mut out)?,
        Command::Sweep { .. } => sweep(&cfg, seed, &mut out)?,
        Command::Report { .. } => report(&cfg, &mut out)?,
    }
    let manifest = out.manifest(cmd.name(), seed, cfg.snapshot());
    if let Err(e) = out.write(&common.out, &manifest) {
        for name in out.names() {
            let _ = std::fs::remove_file(common.out.join(name));
        }
        return Err(e);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("aptasense {}: {msg}", cli.command.name());
            ExitCode::from(1)
        }
    }
}
