//! Physical constants and unit-suffixed value parsing.

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Faraday constant, C/mol.
pub const FARADAY: f64 = 96_485.332_12;
/// Molar gas constant, J/(mol·K).
pub const GAS_CONSTANT: f64 = 8.314_462_618;
/// Room temperature used for all electrochemical defaults, K.
pub const ROOM_TEMPERATURE: f64 = 298.15;

/// `RT/F` at `temp` kelvin, volts.
pub fn thermal_voltage(temp: f64) -> f64 {
    GAS_CONSTANT * temp / FARADAY
}

/// Physical dimension expected by a configuration key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Dimensionless,
    Count,
    Seconds,
    Hertz,
    Volts,
    Amperes,
    Ohms,
    Farads,
    Siemens,
    Watts,
    Kelvin,
    /// mol/L
    Molar,
    /// m²
    Area,
    /// probes per cm²
    PerSquareCm,
    /// V⁻¹
    PerVolt,
}

impl Dimension {
    fn symbols(self) -> &'static [&'static str] {
        match self {
            Dimension::Dimensionless | Dimension::Count => &[""],
            Dimension::Seconds => &["s"],
            Dimension::Hertz => &["Hz"],
            Dimension::Volts => &["V"],
            Dimension::Amperes => &["A"],
            Dimension::Ohms => &["Ohm", "ohm", "Ω"],
            Dimension::Farads => &["F"],
            Dimension::Siemens => &["S"],
            Dimension::Watts => &["W"],
            Dimension::Kelvin => &["K"],
            Dimension::Molar => &["M"],
            Dimension::Area => &["m2", "m^2", "m²"],
            Dimension::PerSquareCm => &["/cm2", "/cm^2", "/cm²", "cm-2", "cm^-2"],
            Dimension::PerVolt => &["/V", "V-1", "V^-1"],
        }
    }
}

fn prefix_scale(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "f" => 1e-15,
        "p" => 1e-12,
        "n" => 1e-9,
        "u" | "μ" | "µ" => 1e-6,
        "m" => 1e-3,
        "c" => 1e-2,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        _ => return None,
    })
}

/// Parses `"<number>[ ]<prefix><unit>"` into an SI value for `dim`.
///
/// A bare number is taken as already being in the SI unit of `dim`
/// (per cm² for [`Dimension::PerSquareCm`]).
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E') && i > 0 && next_is_exponent(&text[i + 1..])))
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (num, suffix) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse number from `{text}`"))?;
    let suffix = suffix.trim();
    if suffix.is_empty() {
        return Ok(value);
    }
    if matches!(dim, Dimension::Dimensionless | Dimension::Count) {
        return Err(format!(
            "unexpected unit `{suffix}` on a dimensionless value"
        ));
    }
    for sym in dim.symbols() {
        if let Some(prefix) = suffix.strip_suffix(sym) {
            if let Some(scale) = area_or_plain_scale(prefix, dim) {
                return Ok(value * scale);
            }
        }
    }
    Err(format!("unit `{suffix}` is not a valid {dim:?} unit"))
}

fn next_is_exponent(rest: &str) -> bool {
    let rest = rest.strip_prefix(['+', '-']).unwrap_or(rest);
    rest.chars().next().is_some_and(|c| c.is_ascii_digit())
}

fn area_or_plain_scale(prefix: &str, dim: Dimension) -> Option<f64> {
    match dim {
        // length prefix is squared
        Dimension::Area => prefix_scale(prefix).map(|s| s * s),
        Dimension::PerSquareCm => prefix.is_empty().then_some(1.0),
        _ => prefix_scale(prefix),
    }
}
