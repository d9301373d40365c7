//! Two-feature principal component analysis used to separate the binding
//! signal from the interference that co-modulates `τ1` and `I1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::stats::{mean, std_dev};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub means: [f64; 2],
    pub scales: [f64; 2],
    /// Rows are principal axes in z-scored coordinates, ordered by
    /// decreasing variance.
    pub rotation: [[f64; 2]; 2],
    /// Variance along each axis (z-scored units).
    pub variances: [f64; 2],
    pub signal_component: usize,
    /// Coordinates whose variance was zero; their scale was set to 1.
    pub clamped: [bool; 2],
}

/// Fits a PCA model to `(tau1, i1)` pairs.
///
/// The signal component is the minor axis. After z-scoring a 2-D data set
/// the axes load both features with equal magnitude, so the loading on
/// `τ1` cannot pick between them; the minor axis is the direction the
/// dominant co-modulation leaves untouched.
pub fn pca_fit(pairs: &[(f64, f64)]) -> Result<PcaModel> {
    if pairs.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "PCA fit needs >= 10 pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::Domain("PCA input contains non-finite values".into()));
    }
    let cols = [
        pairs.iter().map(|p| p.0).collect::<Vec<_>>(),
        pairs.iter().map(|p| p.1).collect::<Vec<_>>(),
    ];
    let means = [mean(&cols[0]), mean(&cols[1])];
    let mut scales = [std_dev(&cols[0]), std_dev(&cols[1])];
    let mut clamped = [false; 2];
    for k in 0..2 {
        if !(scales[k] > 0.0) {
            scales[k] = 1.0;
            clamped[k] = true;
        }
    }
    let n = pairs.len() as f64;
    let z: Vec<[f64; 2]> = pairs
        .iter()
        .map(|(a, b)| [(a - means[0]) / scales[0], (b - means[1]) / scales[1]])
        .collect();
    let mut cov = [[0.0; 2]; 2];
    for v in &z {
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += v[i] * v[j] / (n - 1.0);
            }
        }
    }
    let (variances, rotation) = symmetric_eigen_2x2(cov);
    Ok(PcaModel {
        means,
        scales,
        rotation,
        variances,
        signal_component: 1,
        clamped,
    })
}

/// Eigen-decomposition of a symmetric 2×2 matrix, eigenvalues descending.
/// Each eigenvector is signed so its first nonzero entry is positive.
fn symmetric_eigen_2x2(m: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let half_tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let l1 = half_tr + disc;
    let l2 = half_tr - disc;
    // angle of the major axis
    let theta = 0.5 * (2.0 * b).atan2(a - d);
    let (s, c) = theta.sin_cos();
    let mut v1 = [c, s];
    let mut v2 = [-s, c];
    for v in [&mut v1, &mut v2] {
        let lead = if v[0] != 0.0 { v[0] } else { v[1] };
        if lead < 0.0 {
            v[0] = -v[0];
            v[1] = -v[1];
        }
    }
    ([l1, l2], [v1, v2])
}

impl PcaModel {
    pub fn zscore(&self, pair: (f64, f64)) -> [f64; 2] {
        [
            (pair.0 - self.means[0]) / self.scales[0],
            (pair.1 - self.means[1]) / self.scales[1],
        ]
    }

    pub fn project(&self, pair: (f64, f64)) -> [f64; 2] {
        let z = self.zscore(pair);
        let r = &self.rotation;
        [
            r[0][0] * z[0] + r[0][1] * z[1],
            r[1][0] * z[0] + r[1][1] * z[1],
        ]
    }

    /// Loading of each component on `(τ1, I1)`.
    pub fn loadings(&self, component: usize) -> [f64; 2] {
        self.rotation[component]
    }
}

/// Scores of each pair in model coordinates.
pub fn pca_apply(model: &PcaModel, pairs: &[(f64, f64)]) -> Vec<[f64; 2]> {
    pairs.iter().map(|p| model.project(*p)).collect()
}
