//! Behavioral simulator and estimation toolkit for aptamer-based
//! electrochemical drug sensing.
//!
//! The crate covers the whole chain from the redox-reporter kinetics at the
//! electrode, through the chronoamperometric (CA) and square-wave voltammetry
//! (SWV) excitation, the input-referred noise of feedback and sample-and-hold
//! (S/H) readouts, a behavioral S/H front end with an integrating ADC, and
//! the analysis stack (exponential fits, KDM, Langmuir calibration, PCA
//! compensation, boxcar averaging, limit of detection).
//!
//! All quantities are SI unless a field name says otherwise
//! (`probe_density` is per cm²).

// Range checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell;
pub mod config;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod frontend;
pub mod noise;
pub mod output;
pub mod protocol;
pub mod rng;
pub mod trace;
pub mod units;

pub use error::{Error, Result};
pub use trace::Trace;
