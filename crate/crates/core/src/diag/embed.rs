//! Two-dimensional PCA of normalized latent features: per-dimension
//! z-scoring followed by an exact symmetric eigendecomposition of the
//! covariance (cyclic Jacobi).

use crate::diag::{feature_of, DiagError};
use crate::math::Real;
use crate::rollout::LatentTrajectory;

const STD_FLOOR: Real = 1e-8;

/// Fitted normalization statistics and the top-2 principal axes.
#[derive(Clone, Debug)]
pub struct EmbeddingModel {
    pub mean: Vec<Real>,
    pub std: Vec<Real>,
    /// Orthonormal principal axes, largest-magnitude loading positive.
    pub axes: [Vec<Real>; 2],
    /// Eigenvalues of the top-2 axes, nonincreasing.
    pub explained: [Real; 2],
    /// Sum of all eigenvalues (total variance of normalized data).
    pub total_variance: Real,
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, f: &[Real]) -> Vec<Real> {
        f.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn project(&self, f: &[Real]) -> [Real; 2] {
        let z = self.normalize(f);
        let dot = |axis: &[Real]| z.iter().zip(axis).map(|(&a, &b)| a * b).sum::<Real>();
        [dot(&self.axes[0]), dot(&self.axes[1])]
    }

    /// Fraction of total variance captured per axis.
    pub fn explained_ratio(&self) -> [Real; 2] {
        [
            self.explained[0] / self.total_variance,
            self.explained[1] / self.total_variance,
        ]
    }
}

/// Fit normalization and top-2 PCA over every step of the trajectories.
pub fn fit_embedding(trajs: &[LatentTrajectory]) -> Result<EmbeddingModel, DiagError> {
    if trajs.len() < 3 {
        return Err(DiagError::TooFewTrajectories {
            have: trajs.len(),
            need: 3,
        });
    }
    let features: Vec<Vec<Real>> = trajs
        .iter()
        .flat_map(|t| t.steps.iter())
        .map(feature_of)
        .collect();
    fit_embedding_features(&features)
}

/// Same as [`fit_embedding`] but over raw feature rows.
pub fn fit_embedding_features(features: &[Vec<Real>]) -> Result<EmbeddingModel, DiagError> {
    let n = features.len();
    if n < 2 {
        return Err(DiagError::TooFewTrajectories { have: n, need: 2 });
    }
    let d = features[0].len();
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, &v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as Real;
    }
    let mut std = vec![0.0; d];
    for f in features {
        for (s, (&v, &m)) in std.iter_mut().zip(f.iter().zip(&mean)) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut std {
        *s = (*s / n as Real).sqrt().max(STD_FLOOR);
    }

    // Covariance of the z-scored data.
    let mut cov = vec![vec![0.0; d]; d];
    for f in features {
        let z: Vec<Real> = f
            .iter()
            .zip(mean.iter().zip(&std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect();
        for i in 0..d {
            for j in i..d {
                cov[i][j] += z[i] * z[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= n as Real;
            cov[j][i] = cov[i][j];
        }
    }

    let (mut values, mut vectors) = jacobi_eigen(&cov);
    let total_variance: Real = values.iter().sum::<Real>().max(STD_FLOOR);
    // Sort descending, stable in index for exact ties.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    let mut axes = [vec![0.0; d], vec![0.0; d]];
    let mut explained = [0.0; 2];
    for (slot, &idx) in order.iter().take(2).enumerate() {
        let mut axis = std::mem::take(&mut vectors[idx]);
        // Sign convention: the largest-magnitude loading is positive.
        let mut big = 0;
        for (i, v) in axis.iter().enumerate() {
            if v.abs() > axis[big].abs() {
                big = i;
            }
        }
        if axis[big] < 0.0 {
            for v in &mut axis {
                *v = -*v;
            }
        }
        axes[slot] = axis;
        explained[slot] = values[idx].max(0.0);
        values[idx] = values[idx].max(0.0);
    }
    Ok(EmbeddingModel {
        mean,
        std,
        axes,
        explained,
        total_variance,
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// `(eigenvalues, eigenvectors)` with `eigenvectors[i]` matching
/// `eigenvalues[i]`, unsorted. Exact to round-off; O(d³) per sweep.
pub fn jacobi_eigen(matrix: &[Vec<Real>]) -> (Vec<Real>, Vec<Vec<Real>>) {
    let d = matrix.len();
    let mut a: Vec<Vec<Real>> = matrix.to_vec();
    let mut v = vec![vec![0.0; d]; d];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frob: Real = matrix
        .iter()
        .flat_map(|r| r.iter())
        .map(|&x| x * x)
        .sum::<Real>()
        .sqrt();
    let tol = (frob * 1e-14).max(1e-300);
    for _sweep in 0..100 {
        let mut off: Real = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q].abs() <= tol / (d as Real) {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..d {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for i in 0..d {
                    let api = a[p][i];
                    let aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for row in v.iter_mut() {
                    let vip = row[p];
                    let viq = row[q];
                    row[p] = c * vip - s * viq;
                    row[q] = s * vip + c * viq;
                }
            }
        }
    }
    let values: Vec<Real> = (0..d).map(|i| a[i][i]).collect();
    let vectors: Vec<Vec<Real>> = (0..d).map(|j| (0..d).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}
