//! Synthetic distributions with closed-form mutual information, used to
//! calibrate the estimators.

use crate::autodiff::tensor::Tensor;
use crate::rng::Rng;

/// Row-aligned samples from a bivariate Gaussian with correlation `rho`;
/// both marginals are standard normal. Closed form:
/// I(X; Y) = -1/2 log2(1 - rho^2).
pub fn bivariate_gaussian(n: usize, rho: f64, seed: u64) -> (Tensor, Tensor) {
    let mut rng = Rng::stream(seed, 0x6a);
    let scale = (1.0 - rho * rho).sqrt();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let z1 = rng.normal();
        let z2 = rng.normal();
        xs.push(z1);
        ys.push(rho * z1 + scale * z2);
    }
    (
        Tensor::from_vec(&[n, 1], xs).unwrap(),
        Tensor::from_vec(&[n, 1], ys).unwrap(),
    )
}

/// Closed-form MI in bits for the bivariate Gaussian.
pub fn gaussian_mi_bits(rho: f64) -> f64 {
    -0.5 * (1.0 - rho * rho).log2()
}

/// Multivariate pair: x is d-dimensional standard normal, y_j = rho * x_j
/// + sqrt(1-rho^2) * noise for the first `coupled` dims.
pub fn correlated_pair(
    n: usize,
    d_x: usize,
    d_y: usize,
    coupled: usize,
    rho: f64,
    seed: u64,
) -> (Tensor, Tensor) {
    let mut rng = Rng::stream(seed, 0x6b);
    let scale = (1.0 - rho * rho).sqrt();
    let mut xs = Vec::with_capacity(n * d_x);
    let mut ys = Vec::with_capacity(n * d_y);
    for _ in 0..n {
        let x: Vec<f64> = (0..d_x).map(|_| rng.normal()).collect();
        for j in 0..d_y {
            let noise = rng.normal();
            if j < coupled && j < d_x {
                ys.push(rho * x[j] + scale * noise);
            } else {
                ys.push(noise);
            }
        }
        xs.extend(x);
    }
    (
        Tensor::from_vec(&[n, d_x], xs).unwrap(),
        Tensor::from_vec(&[n, d_y], ys).unwrap(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_moments() {
        let (x, y) = bivariate_gaussian(40_000, 0.8, 3);
        let n = x.rows() as f64;
        let mean_x: f64 = x.data().iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var_x = 0.0;
        let mut var_y = 0.0;
        for i in 0..x.rows() {
            cov += x.row(i)[0] * y.row(i)[0];
            var_x += x.row(i)[0] * x.row(i)[0];
            var_y += y.row(i)[0] * y.row(i)[0];
        }
        cov /= n;
        var_x /= n;
        var_y /= n;
        assert!(mean_x.abs() < 0.02);
        assert!((var_x - 1.0).abs() < 0.03);
        assert!((var_y - 1.0).abs() < 0.03);
        assert!((cov - 0.8).abs() < 0.02);
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(gaussian_mi_bits(0.0), 0.0);
        assert!((gaussian_mi_bits(0.5) - 0.2075).abs() < 1e-4);
        assert!((gaussian_mi_bits(0.8) - 0.7370).abs() < 1e-4);
    }
}
