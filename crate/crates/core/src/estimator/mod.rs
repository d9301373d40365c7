//! Analysis stack: exponential fits, kinetic differential measurement,
//! calibration, PCA compensation and limit-of-detection arithmetic.

pub mod features;
pub mod fit;
pub mod kdm;
pub mod langmuir;
pub mod pca;
pub mod stats;

pub use features::{FeatureRecord, FeatureSeries};
pub use fit::{fit_double_exp, fit_single_exp, DoubleExpFit, SingleExpFit};
pub use kdm::kdm;
pub use langmuir::{fit_langmuir, LangmuirFit};
pub use pca::{pca_apply, pca_fit, PcaModel};
pub use stats::{boxcar, linear_detrend, lod};
