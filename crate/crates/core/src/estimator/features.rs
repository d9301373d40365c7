//! Per-cycle feature records extracted from recorded transients.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::fit::DoubleExpFit;

pub const FEATURE_CSV_HEADER: &str = "cycle,tau1_s,i1_A,tau2_s,i2_A";

/// Charge a fitted term delivers between `t_start` and `t_end`, C.
fn window_charge(i: f64, tau: f64, t_start: f64, t_end: f64) -> f64 {
    if i == 0.0 || !tau.is_finite() {
        return 0.0;
    }
    (i * tau * ((-t_start / tau).exp() - (-t_end / tau).exp())).abs()
}

/// Features of one cycle. Component 1 is the kinetic (redox) term of the
/// two-exponential fit, i.e. the term carrying the larger charge inside the
/// analysis window; component 2 is the other term, which absorbs residual
/// charging current, IR distortion and the leakage baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub cycle: usize,
    pub tau1: f64,
    pub i1: f64,
    pub tau2: f64,
    pub i2: f64,
    /// Start of the cycle, s.
    pub timestamp: f64,
}

impl FeatureRecord {
    /// Orders the fitted terms so the kinetic term comes first.
    pub fn from_fit(
        cycle: usize,
        fit: &DoubleExpFit,
        t_start: f64,
        t_end: f64,
        timestamp: f64,
    ) -> Self {
        let q1 = window_charge(fit.i1, fit.tau1, t_start, t_end);
        let q2 = window_charge(fit.i2, fit.tau2, t_start, t_end);
        let (tau1, i1, tau2, i2) = if q2 > q1 {
            (fit.tau2, fit.i2, fit.tau1, fit.i1)
        } else {
            (fit.tau1, fit.i1, fit.tau2, fit.i2)
        };
        Self {
            cycle,
            tau1,
            i1,
            tau2,
            i2,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureSeries {
    records: Vec<FeatureRecord>,
}

impl FeatureSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; timestamps must strictly increase.
    pub fn push(&mut self, rec: FeatureRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if !(rec.timestamp > last.timestamp) {
                return Err(Error::Domain(format!(
                    "feature timestamps must increase: {} after {}",
                    rec.timestamp, last.timestamp
                )));
            }
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(τ1, I1)` pairs, the PCA input.
    pub fn tau1_i1(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.tau1, r.i1)).collect()
    }

    /// `(ln τ1, ln I1)` pairs.
    ///
    /// Binding and held-potential error both act multiplicatively on the
    /// kinetic term, so in log coordinates their directions stay fixed
    /// across the concentration range and a single rotation separates them.
    pub fn log_tau1_i1(&self) -> Result<Vec<(f64, f64)>> {
        self.records
            .iter()
            .map(|r| {
                if r.tau1 > 0.0 && r.i1 > 0.0 {
                    Ok((r.tau1.ln(), r.i1.ln()))
                } else {
                    Err(Error::Domain(format!(
                        "cycle {}: log features need tau1 > 0 and i1 > 0 (got {:e}, {:e})",
                        r.cycle, r.tau1, r.i1
                    )))
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(FEATURE_CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e}",
                r.cycle, r.tau1, r.i1, r.tau2, r.i2
            );
        }
        s
    }

    /// Parses the CSV form. Timestamps are not stored in the file, so the
    /// cycle index is used in their place.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == FEATURE_CSV_HEADER => {}
            _ => {
                return Err(Error::Parse(format!(
                    "expected header `{FEATURE_CSV_HEADER}`"
                )))
            }
        }
        let mut out = Self::new();
        for (ln, line) in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::Parse(format!("line {}: expected 5 fields", ln + 1)));
            }
            let num = |i: usize| -> Result<f64> {
                f[i].parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {}: {e}", ln + 1, f[i])))
            };
            let cycle: usize = f[0]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: cycle: {e}", ln + 1)))?;
            out.push(FeatureRecord {
                cycle,
                tau1: num(1)?,
                i1: num(2)?,
                tau2: num(3)?,
                i2: num(4)?,
                timestamp: cycle as f64,
            })
            .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
        }
        Ok(out)
    }
}
