//! Exponential-decay fits by variable projection.
//!
//! The decay rates are the only nonlinear parameters; they are carried as
//! `ln τ` so positivity is automatic. For each trial set of time constants
//! the amplitudes are the linear least-squares solution, and the reduced
//! residual is minimized with a Levenberg–Marquardt iteration using the
//! full Golub–Pereyra Jacobian of the projected residual.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Trace;

/// Starting time constants for multi-start, s.
pub const TAU_START_GRID: [f64; 5] = [0.5e-3, 1e-3, 2e-3, 4e-3, 8e-3];

/// Points in the double-exponential start grid; every pair is tried.
const DOUBLE_EXP_STARTS: usize = 6;

/// Fits whose two time constants are closer than this ratio are reported as
/// a single exponential.
pub const DEGENERATE_RATIO: f64 = 1.05;

const MAX_ITER: usize = 400;
/// Step size in `ln τ` below which the iteration stops.
const XTOL: f64 = 1e-13;
/// Relative cost reduction below which an accepted step ends the iteration.
const FTOL: f64 = 1e-13;
/// Largest cosine between the residual and a Jacobian column at a
/// stationary point.
const GTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleExpFit {
    /// Current at t = 0, A.
    pub amplitude: f64,
    /// s; NaN when not identifiable.
    pub tau: f64,
    pub residual_rms: f64,
    pub converged: bool,
    /// False when the data carry no decay to fit (e.g. all zeros).
    pub identifiable: bool,
    pub iterations: usize,
}

/// Two-term exponential fit, fast component first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleExpFit {
    #[serde(rename = "i1_A")]
    pub i1: f64,
    #[serde(rename = "tau1_s")]
    pub tau1: f64,
    #[serde(rename = "i2_A")]
    pub i2: f64,
    #[serde(rename = "tau2_s")]
    pub tau2: f64,
    #[serde(rename = "residual_rms_A")]
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Time constants too close to separate; reported as one exponential
    /// with `i2 = 0`.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
struct Solution {
    log_tau: Vec<f64>,
    coeffs: Vec<f64>,
    cost: f64,
    converged: bool,
    iterations: usize,
}

struct Projection {
    c: DVector<f64>,
    r: DVector<f64>,
    phi: DMatrix<f64>,
    range: DMatrix<f64>,
    /// Transpose of the pseudo-inverse of Φ, n×p.
    pinv_t: DMatrix<f64>,
}

/// Sum of decaying exponentials evaluated on fixed sample times.
struct ExpProblem<'a> {
    t: &'a [f64],
    y: DVector<f64>,
    log_tau_min: f64,
    log_tau_max: f64,
}

impl<'a> ExpProblem<'a> {
    fn new(t: &'a [f64], y: &[f64]) -> Self {
        let dt = if t.len() > 1 {
            (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64
        } else {
            1.0
        };
        let span = (t[t.len() - 1] - t[0]).max(dt);
        Self {
            t,
            y: DVector::from_column_slice(y),
            log_tau_min: (dt * 1e-2).ln(),
            log_tau_max: (span * 1e4).ln(),
        }
    }

    fn basis(&self, log_tau: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.t.len(), log_tau.len(), |i, j| {
            (-self.t[i] * (-log_tau[j]).exp()).exp()
        })
    }

    /// Amplitudes, residual `y − Φc` and the orthonormal basis of the
    /// range of Φ at `log_tau`, from one SVD.
    fn project(&self, log_tau: &[f64]) -> Projection {
        let phi = self.basis(log_tau);
        let svd = phi.clone().svd(true, true);
        let u = svd.u.as_ref().expect("requested U");
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let smax = svd.singular_values.max();
        let p = log_tau.len();
        let mut c = DVector::zeros(p);
        let mut cols = Vec::with_capacity(p);
        let mut pinv_t = DMatrix::zeros(self.t.len(), p);
        for k in 0..p {
            let s = svd.singular_values[k];
            if s > smax * 1e-13 {
                let uk = u.column(k).into_owned();
                let coef = uk.dot(&self.y) / s;
                c += v_t.row(k).transpose() * coef;
                pinv_t += &uk * (v_t.row(k) / s);
                cols.push(uk);
            }
        }
        let basis = if cols.is_empty() {
            DMatrix::zeros(self.t.len(), 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        let r = &self.y - &phi * &c;
        Projection {
            c,
            r,
            phi,
            range: basis,
            pinv_t,
        }
    }

    fn cost(&self, log_tau: &[f64]) -> f64 {
        0.5 * self.project(log_tau).r.norm_squared()
    }

    /// Jacobian of the projected residual with respect to `ln τ`
    /// (Golub–Pereyra form, including the term Kaufman's approximation
    /// drops; that term matters once the residual is not small).
    fn jacobian(&self, log_tau: &[f64], pr: &Projection) -> DMatrix<f64> {
        let n = self.t.len();
        let p = log_tau.len();
        let mut jac = DMatrix::zeros(n, p);
        for (k, lt) in log_tau.iter().enumerate() {
            let tau = lt.exp();
            // d/d(ln τ) of exp(−t/τ) is exp(−t/τ)·t/τ
            let dcol = DVector::from_fn(n, |i, _| pr.phi[(i, k)] * self.t[i] / tau);
            let dphi = &dcol * pr.c[k];
            let proj = &pr.range * (pr.range.transpose() * &dphi);
            let second = pr.pinv_t.column(k) * dcol.dot(&pr.r);
            jac.set_column(k, &(proj - dphi - second));
        }
        jac
    }

    fn clamp(&self, log_tau: &mut [f64]) {
        for v in log_tau.iter_mut() {
            *v = v.clamp(self.log_tau_min, self.log_tau_max);
        }
    }

    fn solve(&self, start: &[f64]) -> Solution {
        let mut theta: Vec<f64> = start.iter().map(|t| t.ln()).collect();
        self.clamp(&mut theta);
        let p = theta.len();
        let mut pr = self.project(&theta);
        let mut cost = 0.5 * pr.r.norm_squared();
        let scale = 0.5 * self.y.norm_squared();
        let mut lambda = 1e-3;
        let mut nu = 2.0;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < MAX_ITER {
            iterations += 1;
            if cost <= scale * 1e-30 {
                converged = true;
                break;
            }
            let jac = self.jacobian(&theta, &pr);
            let jtj = jac.transpose() * &jac;
            let grad = jac.transpose() * &pr.r;
            let rnorm = pr.r.norm();
            let stationary = (0..p).all(|k| {
                let jn = jac.column(k).norm();
                jn == 0.0 || grad[k].abs() <= GTOL * jn * rnorm
            });
            if stationary {
                converged = true;
                break;
            }
            let mut accepted = false;
            while lambda < 1e16 {
                let mut a = jtj.clone();
                for k in 0..p {
                    a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
                }
                let Some(delta) = a.cholesky().map(|ch| ch.solve(&(-&grad))) else {
                    lambda *= nu;
                    nu *= 2.0;
                    continue;
                };
                let mut trial: Vec<f64> =
                    theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
                self.clamp(&mut trial);
                let step = trial
                    .iter()
                    .zip(&theta)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                let pr_new = self.project(&trial);
                let cost_new = 0.5 * pr_new.r.norm_squared();
                // reduction predicted by the local linear model
                let predicted = -(grad.dot(&delta) + 0.5 * (&jtj * &delta).dot(&delta));
                if cost_new < cost {
                    let reduction = (cost - cost_new) / cost.max(f64::MIN_POSITIVE);
                    let rho = if predicted > 0.0 {
                        (cost - cost_new) / predicted
                    } else {
                        1.0
                    };
                    theta = trial;
                    pr = pr_new;
                    cost = cost_new;
                    // Nielsen's update: overshooting steps (small rho) keep
                    // the damping high
                    lambda =
                        (lambda * (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3))).max(1e-12);
                    nu = 2.0;
                    accepted = true;
                    if step < XTOL || reduction < FTOL {
                        converged = true;
                    }
                    break;
                }
                if step < XTOL {
                    // no representable improvement left at this point
                    converged = true;
                    break;
                }
                lambda *= nu;
                nu *= 2.0;
            }
            if converged {
                break;
            }
            if !accepted {
                // damping exhausted without a decrease: stationary to precision
                converged = true;
                break;
            }
        }
        Solution {
            log_tau: theta,
            coeffs: pr.c.iter().copied().collect(),
            cost,
            converged,
            iterations,
        }
    }
}

fn rms(cost: f64, n: usize) -> f64 {
    (2.0 * cost / n as f64).sqrt()
}

/// Log-spaced starting time constants from two samples to the record span,
/// so the starts follow the time base of the trace.
fn double_exp_start_grid(t: &[f64]) -> Vec<f64> {
    let dt = t[1] - t[0];
    let span = t[t.len() - 1] - t[0];
    let (lo, hi) = ((2.0 * dt).ln(), span.ln());
    let n = DOUBLE_EXP_STARTS;
    (0..n)
        .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn single_exp_starts(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut starts = TAU_START_GRID.to_vec();
    let span = t[t.len() - 1] - t[0];
    starts.extend([0.05, 0.2, 1.0].iter().map(|f| f * span));
    // log-linear estimate when the data are one-signed
    let sign = y[0].signum();
    if sign != 0.0 && y.iter().all(|v| v * sign > 0.0) {
        let ly: Vec<f64> = y.iter().map(|v| (v * sign).ln()).collect();
        let n = t.len() as f64;
        let tm = t.iter().sum::<f64>() / n;
        let lm = ly.iter().sum::<f64>() / n;
        let sxy: f64 = t.iter().zip(&ly).map(|(a, b)| (a - tm) * (b - lm)).sum();
        let sxx: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
        let slope = sxy / sxx;
        if slope < 0.0 && slope.is_finite() {
            starts.push(-1.0 / slope);
        }
    }
    starts
}

/// Least-squares fit of `A·exp(−t/τ) + baseline` with the baseline known.
pub fn fit_single_exp(trace: &Trace, baseline: f64) -> Result<SingleExpFit> {
    if trace.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "single-exponential fit needs >= 8 samples, got {}",
            trace.len()
        )));
    }
    let t = trace.times();
    let y: Vec<f64> = trace.samples.iter().map(|s| s - baseline).collect();
    if y.iter().all(|&v| v == 0.0) {
        return Ok(SingleExpFit {
            amplitude: 0.0,
            tau: f64::NAN,
            residual_rms: 0.0,
            converged: false,
            identifiable: false,
            iterations: 0,
        });
    }
    let problem = ExpProblem::new(&t, &y);
    let best = single_exp_starts(&t, &y)
        .into_iter()
        .map(|s| problem.solve(&[s]))
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("nonempty start set");
    Ok(SingleExpFit {
        amplitude: best.coeffs[0],
        tau: best.log_tau[0].exp(),
        residual_rms: rms(best.cost, t.len()),
        converged: best.converged,
        identifiable: true,
        iterations: best.iterations,
    })
}

/// Least-squares fit of `I₁e^{−t/τ₁} + I₂e^{−t/τ₂}`, fast component first.
pub fn fit_double_exp(trace: &Trace) -> Result<DoubleExpFit> {
    if trace.len() < 12 {
        return Err(Error::InsufficientData(format!(
            "double-exponential fit needs >= 12 samples, got {}",
            trace.len()
        )));
    }
    let t = trace.times();
    let y = &trace.samples;
    if y.iter().all(|&v| v == 0.0) {
        return Ok(DoubleExpFit {
            i1: 0.0,
            tau1: f64::NAN,
            i2: 0.0,
            tau2: f64::NAN,
            residual_rms: 0.0,
            converged: false,
            iterations: 0,
            degenerate: true,
        });
    }
    let problem = ExpProblem::new(&t, y);
    let grid = double_exp_start_grid(&t);
    let mut starts = Vec::new();
    for (i, &a) in grid.iter().enumerate() {
        for &b in &grid[i + 1..] {
            starts.push([a, b]);
        }
    }
    let best = starts
        .iter()
        .map(|s| problem.solve(s))
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("nonempty start set");

    let mut comps = [
        (best.log_tau[0].exp(), best.coeffs[0]),
        (best.log_tau[1].exp(), best.coeffs[1]),
    ];
    comps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let [(tau1, i1), (tau2, i2)] = comps;
    let largest = i1.abs().max(i2.abs());
    let negligible = i1.abs().min(i2.abs()) <= 1e-9 * largest;
    if tau2 / tau1 < DEGENERATE_RATIO || negligible {
        let single = fit_single_exp(trace, 0.0)?;
        return Ok(DoubleExpFit {
            i1: single.amplitude,
            tau1: single.tau,
            i2: 0.0,
            tau2: single.tau,
            residual_rms: single.residual_rms,
            converged: single.converged,
            iterations: best.iterations + single.iterations,
            degenerate: true,
        });
    }
    Ok(DoubleExpFit {
        i1,
        tau1,
        i2,
        tau2,
        residual_rms: rms(best.cost, t.len()),
        converged: best.converged,
        iterations: best.iterations,
        degenerate: false,
    })
}

#[allow(dead_code)]
pub(crate) fn objective(t: &[f64], y: &[f64], taus: &[f64]) -> f64 {
    let p = ExpProblem::new(t, y);
    let lt: Vec<f64> = taus.iter().map(|v| v.ln()).collect();
    p.cost(&lt)
}
