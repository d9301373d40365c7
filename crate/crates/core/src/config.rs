//! Experiment configuration: flat `key = value` text with unit suffixes, or
//! the equivalent JSON object.
//!
//! Every key has a default, so an empty file is a complete configuration.
//! Unknown keys are rejected, and errors name the key and the line.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use crate::cell::{AptamerAssay, ElectrochemicalCell};
use crate::error::{Error, Result};
use crate::experiments::{
    calibrated_sample_hold_budget, McOptions, McSensitivity, SweepOptions, REPORT_BANDWIDTH,
};
use crate::frontend::{FrontendConfig, ShTiming};
use crate::noise::{log_grid, NoiseBudget, ReadoutMode, DEFAULT_F_MIN};
use crate::protocol::{CaProtocol, SwvProtocol};
use crate::units::{parse_quantity, Dimension};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub cell: ElectrochemicalCell,
    pub assay: AptamerAssay,
    pub ca: CaProtocol,
    pub swv: SwvProtocol,
    /// Interrogation frequencies of the kinetic differential pair, Hz.
    pub swv_freq_hi: f64,
    pub swv_freq_lo: f64,
    pub noise: NoiseBudget,
    pub noise_enabled: bool,
    pub timing: ShTiming,
    pub frontend: FrontendConfig,
    pub mc_noise_min: f64,
    pub mc_noise_max: f64,
    pub mc_levels: usize,
    pub mc_trials: usize,
    pub mc_tau: f64,
    pub mc_samples: usize,
    pub mc_sample_rate: f64,
    pub mc_sensitivity: McSensitivityRule,
    pub mc_c_high: f64,
    pub mc_target_fraction: f64,
    pub sweep_concentrations: Vec<f64>,
    pub sweep_cycles: usize,
    pub boxcar_n: usize,
    /// Concentration of the fixed-point PCA study, mol/L.
    pub pca_concentration: f64,
    pub report_bandwidth: f64,
    pub f_min: f64,
    /// Points in the emitted PSD grid.
    pub psd_points: usize,
    pub psd_f_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McSensitivityRule {
    Secant,
    Initial,
}

impl Default for Config {
    fn default() -> Self {
        let cell = ElectrochemicalCell::default();
        let assay = AptamerAssay::default();
        let mc = McOptions::default();
        let sweep = SweepOptions::default();
        Self {
            cell,
            assay,
            ca: CaProtocol::default(),
            swv: SwvProtocol::default(),
            swv_freq_hi: 400.0,
            swv_freq_lo: 60.0,
            noise: calibrated_sample_hold_budget(&cell),
            noise_enabled: true,
            timing: ShTiming::default(),
            frontend: FrontendConfig::default(),
            mc_noise_min: mc.noise_levels[0],
            mc_noise_max: mc.noise_levels[mc.noise_levels.len() - 1],
            mc_levels: mc.noise_levels.len(),
            mc_trials: mc.trials,
            mc_tau: mc.tau,
            mc_samples: mc.n_samples,
            mc_sample_rate: mc.sample_rate,
            mc_sensitivity: McSensitivityRule::Secant,
            mc_c_high: 2e-3,
            mc_target_fraction: mc.target_fraction,
            sweep_concentrations: sweep.concentrations,
            sweep_cycles: sweep.cycles_per_point,
            boxcar_n: sweep.boxcar_n,
            pca_concentration: assay.k_d,
            report_bandwidth: REPORT_BANDWIDTH,
            f_min: DEFAULT_F_MIN,
            psd_points: 200,
            psd_f_max: 100e3,
        }
    }
}

impl Config {
    pub fn mc_options(&self) -> McOptions {
        McOptions {
            noise_levels: log_grid(self.mc_noise_min, self.mc_noise_max, self.mc_levels),
            trials: self.mc_trials,
            tau: self.mc_tau,
            n_samples: self.mc_samples,
            sample_rate: self.mc_sample_rate,
            sensitivity: match self.mc_sensitivity {
                McSensitivityRule::Secant => McSensitivity::Secant {
                    c_high: self.mc_c_high,
                },
                McSensitivityRule::Initial => McSensitivity::Initial,
            },
            target_fraction: self.mc_target_fraction,
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            concentrations: self.sweep_concentrations.clone(),
            cycles_per_point: self.sweep_cycles,
            protocol: self.ca,
            frontend: self.frontend,
            timing: self.timing,
            noise: self.noise_enabled.then_some(self.noise),
            boxcar_n: self.boxcar_n,
        }
    }

    /// Cross-field checks; per-key range checks happen while parsing.
    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        self.assay.validate()?;
        self.ca.validate()?;
        self.swv.validate()?;
        self.noise.validate()?;
        self.timing.validate()?;
        self.frontend.validate()?;
        if self.mc_noise_max <= self.mc_noise_min {
            return Err(Error::Config(
                "mc_noise_max must exceed mc_noise_min".into(),
            ));
        }
        if self.report_bandwidth <= self.f_min {
            return Err(Error::Config("report_bandwidth must exceed f_min".into()));
        }
        if self.psd_f_max <= self.f_min {
            return Err(Error::Config("psd_f_max must exceed f_min".into()));
        }
        if self.frontend.adc_t_int > 1.0 / self.ca.sample_rate * (1.0 + 1e-9) {
            return Err(Error::Config(
                "adc_t_int must not exceed 1/ca_sample_rate".into(),
            ));
        }
        self.mc_options().validate()?;
        self.sweep_options().validate(&self.assay)
    }

    /// Every key with its current value in SI, in key order. Loading the
    /// result reproduces this configuration exactly.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|k| (k.name.to_string(), (k.get)(self).render()))
            .collect()
    }

    /// Snapshot in the flat text format.
    pub fn to_text(&self) -> String {
        self.snapshot()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Parsed value of one key before it is stored.
#[derive(Debug, Clone, PartialEq)]
enum Val {
    Num(f64),
    Int(usize),
    Flag(bool),
    Word(String),
    List(Vec<f64>),
}

impl Val {
    fn render(&self) -> String {
        match self {
            Val::Num(v) => format!("{v:e}"),
            Val::Int(v) => v.to_string(),
            Val::Flag(v) => v.to_string(),
            Val::Word(v) => v.clone(),
            Val::List(v) => v
                .iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(", "),
        }
    }
    fn num(&self) -> f64 {
        match self {
            Val::Num(v) => *v,
            _ => unreachable!("key table pairs numeric keys with numeric setters"),
        }
    }
    fn int(&self) -> usize {
        match self {
            Val::Int(v) => *v,
            _ => unreachable!("key table pairs integer keys with integer setters"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    /// Quantity with a unit; the bound applies to the SI value.
    Num(Dimension, Bound),
    /// Non-negative integer with a minimum.
    Int(usize),
    Flag,
    Word(&'static [&'static str]),
    List(Dimension),
}

#[derive(Debug, Clone, Copy)]
enum Bound {
    Any,
    Positive,
    NonNegative,
}

struct Key {
    name: &'static str,
    kind: Kind,
    get: fn(&Config) -> Val,
    set: fn(&mut Config, &Val),
}

macro_rules! num_key {
    ($name:literal, $dim:ident, $bound:ident, $($field:ident).+) => {
        Key {
            name: $name,
            kind: Kind::Num(Dimension::$dim, Bound::$bound),
            get: |c| Val::Num(c.$($field).+),
            set: |c, v| c.$($field).+ = v.num(),
        }
    };
}

macro_rules! int_key {
    ($name:literal, $min:expr, $($field:ident).+) => {
        Key {
            name: $name,
            kind: Kind::Int($min),
            get: |c| Val::Int(c.$($field).+ as usize),
            set: |c, v| c.$($field).+ = v.int() as _,
        }
    };
}

static KEYS: &[Key] = &[
    // electrode
    num_key!("r_s", Ohms, NonNegative, cell.r_s),
    num_key!("c_dl", Farads, Positive, cell.c_dl),
    num_key!("i_leak", Amperes, NonNegative, cell.i_leak),
    // assay
    num_key!("k_d", Molar, Positive, assay.k_d),
    num_key!("tau_unbound", Seconds, Positive, assay.tau_unbound),
    num_key!("tau_bound", Seconds, Positive, assay.tau_bound),
    num_key!("alpha", Dimensionless, Positive, assay.alpha),
    num_key!("area", Area, Positive, assay.area),
    num_key!("probe_density", PerSquareCm, Positive, assay.probe_density),
    int_key!("electrons_per_probe", 1, assay.electrons_per_probe),
    num_key!("e_redox", Volts, Any, assay.e_redox),
    // chronoamperometry
    num_key!("ca_v1", Volts, Any, ca.v1),
    num_key!("ca_v2", Volts, Any, ca.v2),
    num_key!("ca_half_period", Seconds, Positive, ca.half_period),
    num_key!("ca_roi", Seconds, Positive, ca.roi),
    num_key!("ca_sample_rate", Hertz, Positive, ca.sample_rate),
    int_key!("ca_cycles", 1, ca.n_cycles),
    num_key!("r_eff", Ohms, NonNegative, ca.r_eff),
    // square-wave voltammetry
    num_key!("swv_e_start", Volts, Any, swv.e_start),
    num_key!("swv_e_end", Volts, Any, swv.e_end),
    num_key!("swv_e_step", Volts, Positive, swv.e_step),
    num_key!("swv_amplitude", Volts, Positive, swv.amplitude),
    num_key!("swv_frequency", Hertz, Positive, swv.frequency),
    num_key!("swv_freq_hi", Hertz, Positive, swv_freq_hi),
    num_key!("swv_freq_lo", Hertz, Positive, swv_freq_lo),
    // readout noise
    num_key!("noise_gm1", Siemens, Positive, noise.gm1),
    num_key!("noise_gm2", Siemens, Positive, noise.gm2),
    int_key!("noise_n1", 1, noise.n1),
    int_key!("noise_n2", 1, noise.n2),
    num_key!("noise_gamma", Dimensionless, Positive, noise.gamma),
    num_key!("noise_temp", Kelvin, Positive, noise.temp),
    num_key!(
        "noise_flicker_corner",
        Hertz,
        NonNegative,
        noise.flicker_corner
    ),
    Key {
        name: "noise_mode",
        kind: Kind::Word(&["feedback", "sample_hold"]),
        get: |c| {
            Val::Word(match c.noise.mode {
                ReadoutMode::Feedback => "feedback".into(),
                ReadoutMode::SampleHold => "sample_hold".into(),
            })
        },
        set: |c, v| {
            if let Val::Word(w) = v {
                c.noise.mode = w.parse().expect("validated against the word list");
            }
        },
    },
    Key {
        name: "noise_enabled",
        kind: Kind::Flag,
        get: |c| Val::Flag(c.noise_enabled),
        set: |c, v| {
            if let Val::Flag(b) = v {
                c.noise_enabled = *b;
            }
        },
    },
    // sample-and-hold timing
    num_key!("t_track", Seconds, Positive, timing.t_track),
    num_key!("t_pump", Seconds, Positive, timing.t_pump),
    num_key!("t_settle", Seconds, Positive, timing.t_settle),
    num_key!("period", Seconds, Positive, timing.period),
    // front end
    num_key!("z_in", Ohms, NonNegative, frontend.z_in),
    num_key!("i_bias", Amperes, NonNegative, frontend.i_bias),
    num_key!("c1", Farads, Positive, frontend.c1),
    num_key!("c2", Farads, Positive, frontend.c2),
    num_key!("emi_vpp", Volts, NonNegative, frontend.emi_vpp),
    num_key!("bv_slope", PerVolt, NonNegative, frontend.bv_slope),
    num_key!("charge_slope", PerVolt, NonNegative, frontend.charge_slope),
    num_key!("adc_t_int", Seconds, Positive, frontend.adc_t_int),
    num_key!("adc_full_scale", Amperes, Positive, frontend.adc_full_scale),
    int_key!("adc_bits", 0, frontend.adc_bits),
    int_key!("mirror_ratio", 1, frontend.mirror_ratio),
    num_key!("p_active", Watts, Positive, frontend.p_active),
    num_key!("p_sh", Watts, Positive, frontend.p_sh),
    // noise-to-LoD Monte Carlo
    num_key!("mc_noise_min", Amperes, NonNegative, mc_noise_min),
    num_key!("mc_noise_max", Amperes, Positive, mc_noise_max),
    int_key!("mc_levels", 2, mc_levels),
    int_key!("mc_trials", 100, mc_trials),
    num_key!("mc_tau", Seconds, Positive, mc_tau),
    int_key!("mc_samples", 8, mc_samples),
    num_key!("mc_sample_rate", Hertz, Positive, mc_sample_rate),
    Key {
        name: "mc_sensitivity",
        kind: Kind::Word(&["secant", "initial"]),
        get: |c| {
            Val::Word(match c.mc_sensitivity {
                McSensitivityRule::Secant => "secant".into(),
                McSensitivityRule::Initial => "initial".into(),
            })
        },
        set: |c, v| {
            if let Val::Word(w) = v {
                c.mc_sensitivity = if w == "initial" {
                    McSensitivityRule::Initial
                } else {
                    McSensitivityRule::Secant
                };
            }
        },
    },
    num_key!("mc_c_high", Molar, Positive, mc_c_high),
    num_key!(
        "mc_target_fraction",
        Dimensionless,
        Positive,
        mc_target_fraction
    ),
    // assay sweep
    Key {
        name: "sweep_concentrations",
        kind: Kind::List(Dimension::Molar),
        get: |c| Val::List(c.sweep_concentrations.clone()),
        set: |c, v| {
            if let Val::List(l) = v {
                c.sweep_concentrations = l.clone();
            }
        },
    },
    int_key!("sweep_cycles", 10, sweep_cycles),
    int_key!("boxcar_n", 1, boxcar_n),
    num_key!("pca_concentration", Molar, NonNegative, pca_concentration),
    // reporting
    num_key!("report_bandwidth", Hertz, Positive, report_bandwidth),
    num_key!("f_min", Hertz, Positive, f_min),
    int_key!("psd_points", 2, psd_points),
    num_key!("psd_f_max", Hertz, Positive, psd_f_max),
];

/// Names of every accepted key.
pub fn known_keys() -> Vec<&'static str> {
    KEYS.iter().map(|k| k.name).collect()
}

fn key_error(line: usize, key: &str, msg: impl Into<String>) -> Error {
    Error::ConfigKey {
        line,
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_value(spec: &Key, text: &str, line: usize) -> Result<Val> {
    let text = text.trim();
    let err = |m: String| key_error(line, spec.name, m);
    match spec.kind {
        Kind::Num(dim, bound) => {
            let v = parse_quantity(text, dim).map_err(err)?;
            match bound {
                Bound::Positive if !(v > 0.0) => Err(err(format!("must be > 0, got {text}"))),
                Bound::NonNegative if !(v >= 0.0) => Err(err(format!("must be >= 0, got {text}"))),
                _ => Ok(Val::Num(v)),
            }
        }
        Kind::Int(min) => {
            let v: usize = text
                .parse()
                .map_err(|_| err(format!("expected a non-negative integer, got `{text}`")))?;
            if v < min {
                return Err(err(format!("must be >= {min}, got {v}")));
            }
            Ok(Val::Int(v))
        }
        Kind::Flag => match text {
            "true" | "yes" | "on" | "1" => Ok(Val::Flag(true)),
            "false" | "no" | "off" | "0" => Ok(Val::Flag(false)),
            _ => Err(err(format!("expected true or false, got `{text}`"))),
        },
        Kind::Word(words) => {
            let w = text.replace('-', "_");
            if words.contains(&w.as_str()) {
                Ok(Val::Word(w))
            } else {
                Err(err(format!(
                    "expected one of {}, got `{text}`",
                    words.join(", ")
                )))
            }
        }
        Kind::List(dim) => {
            let items: Vec<f64> = text
                .split(',')
                .map(|s| parse_quantity(s.trim(), dim))
                .collect::<std::result::Result<_, _>>()
                .map_err(err)?;
            if items.is_empty() || items.iter().any(|v| !(*v >= 0.0)) {
                return Err(err("list entries must be >= 0".to_string()));
            }
            Ok(Val::List(items))
        }
    }
}

fn apply(cfg: &mut Config, key: &str, text: &str, line: usize) -> Result<()> {
    let spec = KEYS
        .iter()
        .find(|k| k.name == key)
        .ok_or_else(|| key_error(line, key, "unknown key"))?;
    let v = parse_value(spec, text, line)?;
    (spec.set)(cfg, &v);
    Ok(())
}

/// Parses the flat text format.
pub fn parse_text(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    let mut seen = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| {
            Error::Parse(format!(
                "config line {line}: expected `key = value`, got `{body}`"
            ))
        })?;
        let key = key.trim();
        if let Some(prev) = seen.insert(key.to_string(), line) {
            return Err(key_error(
                line,
                key,
                format!("duplicate key (first set on line {prev})"),
            ));
        }
        apply(&mut cfg, key, value, line)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses the JSON form: an object of key → number (SI) or string (with
/// units). A run manifest is accepted too; its `config` object is used.
pub fn parse_json(text: &str) -> Result<Config> {
    let root: Value = serde_json::from_str(text)?;
    let obj = match root.get("config") {
        Some(inner) if root.get("schema_version").is_some() => inner,
        _ => &root,
    };
    let map = obj
        .as_object()
        .ok_or_else(|| Error::Parse("JSON config must be an object".into()))?;
    let mut cfg = Config::default();
    for (key, v) in map {
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Array(items) => items
                .iter()
                .map(|x| match x {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => {
                return Err(key_error(0, key, format!("unsupported JSON value {other}")));
            }
        };
        apply(&mut cfg, key, &text, 0)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses either format, choosing JSON when the text starts with `{`.
pub fn parse_config(text: &str) -> Result<Config> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_text(text)
    }
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_text("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.cell.c_dl, 100e-9);
        assert_eq!(cfg.frontend.emi_vpp, 3e-3);
        assert_eq!(cfg.assay.k_d, 0.5e-3);
        assert_eq!(cfg.frontend.p_sh, 0.22e-3);
    }

    #[test]
    fn units_and_comments() {
        let cfg = parse_text(
            "# electrode\nc_dl = 10 nF\ni_leak = 2nA # trailing comment\nk_d = 500 uM\n\
             ca_half_period = 50 ms\nemi_vpp = 3 mV\nsweep_concentrations = 0, 0.1 mM, 1 mM, 2 mM\n\
             noise_mode = feedback\nnoise_enabled = false\n",
        )
        .unwrap();
        assert!((cfg.cell.c_dl - 1e-8).abs() < 1e-22);
        assert!((cfg.assay.k_d - 0.5e-3).abs() < 1e-18);
        assert_eq!(cfg.sweep_concentrations.len(), 4);
        assert_eq!(cfg.noise.mode, ReadoutMode::Feedback);
        assert!(!cfg.noise_enabled);
    }

    #[test]
    fn errors_name_key_and_line() {
        let e = parse_text("r_s = 100\nc_dl = -1 nF\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("c_dl") && e.contains("line 2"), "{e}");
        let e = parse_text("bogus = 1\n").unwrap_err().to_string();
        assert!(e.contains("bogus") && e.contains("unknown"), "{e}");
        let e = parse_text("c_dl = 10 nA\n").unwrap_err().to_string();
        assert!(e.contains("c_dl"), "{e}");
        assert!(parse_text("c_dl 10 nF\n").is_err());
        assert!(parse_text("c_dl = 1 nF\nc_dl = 2 nF\n").is_err());
        let e = parse_text("ca_v1 = -0.4 V\n").unwrap_err().to_string();
        assert!(e.contains("v1") || e.contains("v2"), "{e}");
    }

    #[test]
    fn snapshot_round_trips_exactly() {
        let cfg = parse_text("c_dl = 33 nF\nemi_vpp = 1.7 mV\nmc_sensitivity = initial\n").unwrap();
        assert_eq!(parse_text(&cfg.to_text()).unwrap(), cfg);
        let json = serde_json::to_string(&cfg.snapshot()).unwrap();
        assert_eq!(parse_json(&json).unwrap(), cfg);
        assert_eq!(cfg.snapshot().len(), known_keys().len());
    }

    #[test]
    fn json_accepts_numbers_and_manifests() {
        let cfg = parse_config(r#"{"c_dl": 1e-8, "emi_vpp": "2 mV"}"#).unwrap();
        assert_eq!(cfg.cell.c_dl, 1e-8);
        assert!((cfg.frontend.emi_vpp - 2e-3).abs() < 1e-15);
        let manifest = r#"{"schema_version": 1, "config": {"c_dl": "20 nF"}}"#;
        assert!((parse_config(manifest).unwrap().cell.c_dl - 2e-8).abs() < 1e-20);
        assert!(parse_config(r#"{"nope": 1}"#).is_err());
    }
}
