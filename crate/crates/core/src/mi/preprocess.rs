//! Standardization and random projection applied before MI estimation.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct ZscoreStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Dimensions whose std is (numerically) zero are passed through
    /// unscaled and flagged here.
    pub constant: Vec<bool>,
}

const CONSTANT_EPS: f64 = 1e-12;

/// Per-dimension standardization to mean 0, std 1. Constant dimensions are
/// left untouched and flagged.
pub fn zscore(x: &Tensor) -> (Tensor, ZscoreStats) {
    let (n, d) = (x.rows(), x.cols());
    let mut mu = vec![0.0; d];
    let mut sigma = vec![0.0; d];
    for i in 0..n {
        for (j, v) in x.row(i).iter().enumerate() {
            mu[j] += v;
        }
    }
    for m in mu.iter_mut() {
        *m /= n as f64;
    }
    for i in 0..n {
        for (j, v) in x.row(i).iter().enumerate() {
            let c = v - mu[j];
            sigma[j] += c * c;
        }
    }
    let mut constant = vec![false; d];
    for (j, s) in sigma.iter_mut().enumerate() {
        *s = (*s / n as f64).sqrt();
        if *s < CONSTANT_EPS {
            constant[j] = true;
        }
    }
    let mut out = x.clone();
    for i in 0..n {
        let row = &mut out.data_mut()[i * d..(i + 1) * d];
        for j in 0..d {
            if !constant[j] {
                row[j] = (row[j] - mu[j]) / sigma[j];
            }
        }
    }
    (
        out,
        ZscoreStats {
            mu,
            sigma,
            constant,
        },
    )
}

/// Invert a standardization (constant dims pass through, mirroring zscore).
pub fn de_zscore(x: &Tensor, stats: &ZscoreStats) -> Tensor {
    let (n, d) = (x.rows(), x.cols());
    let mut out = x.clone();
    for i in 0..n {
        let row = &mut out.data_mut()[i * d..(i + 1) * d];
        for j in 0..d {
            if !stats.constant[j] {
                row[j] = row[j] * stats.sigma[j] + stats.mu[j];
            }
        }
    }
    out
}

/// Seeded Gaussian projection matrix with i.i.d. standard normal entries,
/// shaped [d_in, d_out] so that projected = x @ w.
pub fn projection_matrix(d_in: usize, d_out: usize, seed: u64) -> Tensor {
    let mut rng = Rng::stream(seed, 0x9107);
    let mut w = Tensor::zeros(&[d_in, d_out]);
    rng.fill_normal(w.data_mut(), 1.0);
    w
}

/// Apply an explicit projection (the identity-matrix test hook goes through
/// here).
pub fn project_with(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    if x.cols() != w.shape()[0] {
        return Err(Error::shape(
            format!("[N, {}]", w.shape()[0]),
            format!("{:?}", x.shape()),
        ));
    }
    let (n, m) = (x.rows(), w.shape()[1]);
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let xrow = x.row(i);
        let orow = &mut out.data_mut()[i * m..(i + 1) * m];
        for (l, &xv) in xrow.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &w.data()[l * m..(l + 1) * m];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    Ok(out)
}

/// Random projection to `target_d` dimensions.
pub fn random_project(x: &Tensor, target_d: usize, seed: u64) -> Result<Tensor> {
    let w = projection_matrix(x.cols(), target_d, seed);
    project_with(x, &w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_matrix() -> Tensor {
        let mut rng = Rng::new(5);
        let mut t = Tensor::zeros(&[200, 3]);
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v = rng.normal() * ((i % 3) as f64 + 0.5) + (i % 3) as f64;
        }
        t
    }

    #[test]
    fn zscore_standardizes() {
        let x = sample_matrix();
        let (z, stats) = zscore(&x);
        assert!(!stats.constant.iter().any(|&c| c));
        let (z2, stats2) = zscore(&z);
        // Already standardized input is unchanged within 1e-12.
        for (a, b) in z.data().iter().zip(z2.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for j in 0..3 {
            assert!(stats2.mu[j].abs() < 1e-12);
            assert!((stats2.sigma[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_flagged_not_divided() {
        let mut x = sample_matrix();
        for i in 0..x.rows() {
            x.data_mut()[i * 3 + 1] = 4.25;
        }
        let (z, stats) = zscore(&x);
        assert!(stats.constant[1]);
        for i in 0..z.rows() {
            assert_eq!(z.row(i)[1], 4.25);
        }
    }

    #[test]
    fn round_trip_recovers_input() {
        let x = sample_matrix();
        let (z, stats) = zscore(&x);
        let back = de_zscore(&z, &stats);
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_projection_hook() {
        let x = sample_matrix();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let out = project_with(&x, &eye).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn projection_is_linear() {
        let x = sample_matrix();
        let y = {
            let mut t = sample_matrix();
            for v in t.data_mut() {
                *v = -0.5 * *v + 0.1;
            }
            t
        };
        let w = projection_matrix(3, 2, 9);
        let (alpha, beta) = (1.7, -0.3);
        let mut combo = x.clone();
        for (c, (xa, ya)) in combo.data_mut().iter_mut().zip(x.data().iter().zip(y.data())) {
            *c = alpha * xa + beta * ya;
        }
        let lhs = project_with(&combo, &w).unwrap();
        let px = project_with(&x, &w).unwrap();
        let py = project_with(&y, &w).unwrap();
        for (l, (a, b)) in lhs.data().iter().zip(px.data().iter().zip(py.data())) {
            assert!((l - (alpha * a + beta * b)).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_seeded_deterministic() {
        let a = projection_matrix(5, 3, 42);
        let b = projection_matrix(5, 3, 42);
        assert_eq!(a.data(), b.data());
    }
}
