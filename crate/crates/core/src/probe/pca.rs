//! PCA by Jacobi eigendecomposition of the sample covariance.
//!
//! Deterministic: eigenpairs sorted by descending eigenvalue, each
//! eigenvector's sign fixed so its first nonzero loading is positive.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Pca {
    /// Column j is the j-th principal direction; shape [d, keep_d].
    pub basis: Tensor,
    pub mean: Vec<f64>,
    /// All d eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Variance fraction captured per kept component.
    pub explained_variance_ratio: Vec<f64>,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major d x d).
/// Returns (eigenvalues, eigenvectors as columns).
fn jacobi_eigen(mut m: Vec<f64>, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale = (0..d).map(|i| m[i * d + i].abs()).fold(1e-300, f64::max);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..d {
            for q in (p + 1)..d {
                off = off.max(m[p * d + q].abs());
            }
        }
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig: Vec<f64> = (0..d).map(|i| m[i * d + i]).collect();
    (eig, v)
}

/// Center and project onto the leading `keep_d` principal directions.
pub fn pca_reduce(x: &Tensor, keep_d: usize) -> Result<(Tensor, Pca)> {
    let (n, d) = (x.rows(), x.cols());
    if keep_d == 0 || keep_d > d.min(n) {
        return Err(Error::config(format!(
            "keep_d must lie in 1..=min(N, d) = {}, got {keep_d}",
            d.min(n)
        )));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (j, v) in x.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    // Sample covariance (n - 1 denominator; n == 1 degenerates to zeros).
    let denom = (n as f64 - 1.0).max(1.0);
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let row = x.row(i);
        for p in 0..d {
            let cp = row[p] - mean[p];
            for q in p..d {
                cov[p * d + q] += cp * (row[q] - mean[q]);
            }
        }
    }
    for p in 0..d {
        for q in p..d {
            let v = cov[p * d + q] / denom;
            cov[p * d + q] = v;
            cov[q * d + p] = v;
        }
    }

    let (eig, vecs) = jacobi_eigen(cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig[b].partial_cmp(&eig[a]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig[i]).collect();

    let mut basis = Tensor::zeros(&[d, keep_d]);
    for (col, &src) in order.iter().take(keep_d).enumerate() {
        // Sign convention: first loading of nonnegligible magnitude positive.
        let mut sign = 1.0;
        for k in 0..d {
            let val = vecs[k * d + src];
            if val.abs() > 1e-12 {
                sign = val.signum();
                break;
            }
        }
        for k in 0..d {
            basis.data_mut()[k * keep_d + col] = sign * vecs[k * d + src];
        }
    }

    let total: f64 = eigenvalues.iter().map(|&e| e.max(0.0)).sum();
    let explained_variance_ratio = eigenvalues
        .iter()
        .take(keep_d)
        .map(|&e| if total > 0.0 { e.max(0.0) / total } else { 0.0 })
        .collect();

    let mut projected = Tensor::zeros(&[n, keep_d]);
    for i in 0..n {
        let row = x.row(i);
        for col in 0..keep_d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += (row[k] - mean[k]) * basis.data()[k * keep_d + col];
            }
            projected.data_mut()[i * keep_d + col] = acc;
        }
    }

    Ok((
        projected,
        Pca {
            basis,
            mean,
            eigenvalues,
            explained_variance_ratio,
        },
    ))
}

impl Pca {
    /// Project new rows into the learned basis.
    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        let keep = self.basis.shape()[1];
        if x.cols() != d {
            return Err(Error::shape(format!("[N, {d}]"), format!("{:?}", x.shape())));
        }
        let n = x.rows();
        let mut out = Tensor::zeros(&[n, keep]);
        for i in 0..n {
            let row = x.row(i);
            for col in 0..keep {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += (row[k] - self.mean[k]) * self.basis.data()[k * keep + col];
                }
                out.data_mut()[i * keep + col] = acc;
            }
        }
        Ok(out)
    }

    /// Map projected rows back to the original space.
    pub fn reconstruct(&self, y: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        let keep = self.basis.shape()[1];
        if y.cols() != keep {
            return Err(Error::shape(format!("[N, {keep}]"), format!("{:?}", y.shape())));
        }
        let n = y.rows();
        let mut out = Tensor::zeros(&[n, d]);
        for i in 0..n {
            for k in 0..d {
                let mut acc = self.mean[k];
                for col in 0..keep {
                    acc += y.row(i)[col] * self.basis.data()[k * keep + col];
                }
                out.data_mut()[i * d + k] = acc;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        let mut t = Tensor::zeros(&[n, d]);
        for v in t.data_mut() {
            *v = rng.normal();
        }
        t
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        let x = random_matrix(50, 6, 3);
        let (proj, pca) = pca_reduce(&x, 6).unwrap();
        let back = pca.reconstruct(&proj).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        let x = random_matrix(80, 5, 7);
        let (_, pca) = pca_reduce(&x, 5).unwrap();
        let b = &pca.basis;
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = (0..5).map(|k| b.data()[k * 5 + i] * b.data()[k * 5 + j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10, "({i},{j}) dot {dot}");
            }
        }
    }

    #[test]
    fn line_in_3d_explains_everything_with_one_component() {
        let mut rng = Rng::new(9);
        let dir = [0.3, -0.8, 0.5];
        let mut x = Tensor::zeros(&[100, 3]);
        for i in 0..100 {
            let t = rng.normal();
            for j in 0..3 {
                x.data_mut()[i * 3 + j] = 2.0 + t * dir[j];
            }
        }
        let (_, pca) = pca_reduce(&x, 1).unwrap();
        assert!(
            (pca.explained_variance_ratio[0] - 1.0).abs() < 1e-9,
            "ratio = {}",
            pca.explained_variance_ratio[0]
        );
    }

    #[test]
    fn eigenvalues_descend_and_sign_convention_holds() {
        let x = random_matrix(200, 8, 11);
        let (_, pca) = pca_reduce(&x, 8).unwrap();
        for w in pca.eigenvalues.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
        for col in 0..8 {
            let first_nonzero = (0..8)
                .map(|k| pca.basis.data()[k * 8 + col])
                .find(|v| v.abs() > 1e-12)
                .unwrap();
            assert!(first_nonzero > 0.0);
        }
    }

    #[test]
    fn keep_d_bounds_checked() {
        let x = random_matrix(10, 4, 1);
        assert!(pca_reduce(&x, 0).is_err());
        assert!(pca_reduce(&x, 5).is_err());
    }

    #[test]
    fn project_matches_training_projection() {
        let x = random_matrix(60, 5, 13);
        let (proj, pca) = pca_reduce(&x, 3).unwrap();
        let again = pca.project(&x).unwrap();
        for (a, b) in proj.data().iter().zip(again.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
