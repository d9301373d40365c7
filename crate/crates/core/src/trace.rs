use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled current record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Time of the first sample, s.
    pub t0: f64,
    /// Sample spacing, s.
    pub dt: f64,
    /// Current samples, A.
    pub samples: Vec<f64>,
}

impl Trace {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!(
                "trace dt must be positive, got {dt}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::Domain("trace t0 must be finite".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Domain(format!("trace sample {i} is not finite")));
        }
        Ok(Self { t0, dt, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|i| self.time(i)).collect()
    }

    pub fn peak_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// CSV with header `t_s,i_A`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,i_A\n");
        for (i, s) in self.samples.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.time(i), s));
        }
        out
    }

    /// Reads the `t_s,i_A` CSV back. The time column must be uniform.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trace CSV".into()))?;
        if header.trim() != "t_s,i_A" {
            return Err(Error::Parse(format!(
                "expected header `t_s,i_A`, found `{}`",
                header.trim()
            )));
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (n, line) in lines.enumerate() {
            let mut cols = line.split(',');
            let (Some(t), Some(i), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Parse(format!("row {}: expected two columns", n + 2)));
            };
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: bad number `{s}`", n + 2)))
            };
            times.push(parse(t)?);
            samples.push(parse(i)?);
        }
        if times.len() < 2 {
            return Err(Error::InsufficientData(
                "trace CSV needs at least two rows".into(),
            ));
        }
        let t0 = times[0];
        let dt = (times[times.len() - 1] - t0) / (times.len() - 1) as f64;
        for (k, t) in times.iter().enumerate() {
            let expected = t0 + k as f64 * dt;
            if (t - expected).abs() > 1e-6 * dt {
                return Err(Error::Parse(format!(
                    "row {}: time base is not uniform",
                    k + 2
                )));
            }
        }
        Trace::new(t0, dt, samples)
    }
}
