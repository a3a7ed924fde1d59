//! Action-centricity probing: net-relative-action normalization, PCA, the
//! linear probe (closed form and gradient descent), and NMSE reporting.

pub mod pca;

pub use pca::{pca_reduce, Pca};

use crate::autodiff::adamw::{optimizer_step, AdamConfig, AdamState};
use crate::autodiff::graph::Graph;
use crate::autodiff::mlp::ParamSet;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::worldgen::dataset::DatasetManifest;

pub const ACTION_DIMS: usize = 7;
/// Stabilizer added to the horizon-adjusted std before dividing.
pub const DEFAULT_EPS: f64 = 1e-8;
const CONSTANT_SIGMA: f64 = 1e-12;

/// Dataset-level per-dimension action statistics plus the horizon
/// adjustment: continuous dims scale as mu_hat = H mu, sigma_hat = sqrt(H)
/// sigma; the gripper dim keeps its per-step statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionStats {
    pub mu: [f64; ACTION_DIMS],
    pub sigma: [f64; ACTION_DIMS],
}

impl ActionStats {
    pub fn from_manifest(m: &DatasetManifest) -> ActionStats {
        ActionStats {
            mu: m.action_mu,
            sigma: m.action_sigma,
        }
    }

    pub fn from_rows(rows: &[[f64; ACTION_DIMS]]) -> ActionStats {
        let n = rows.len().max(1) as f64;
        let mut mu = [0.0; ACTION_DIMS];
        for r in rows {
            for d in 0..ACTION_DIMS {
                mu[d] += r[d];
            }
        }
        mu.iter_mut().for_each(|m| *m /= n);
        let mut sigma = [0.0; ACTION_DIMS];
        for r in rows {
            for d in 0..ACTION_DIMS {
                let c = r[d] - mu[d];
                sigma[d] += c * c;
            }
        }
        sigma.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        ActionStats { mu, sigma }
    }

    /// (mu_hat, sigma_hat) for horizon `h`.
    pub fn horizon(&self, h: usize) -> ([f64; ACTION_DIMS], [f64; ACTION_DIMS]) {
        let hf = h as f64;
        let root_h = hf.sqrt();
        let mut mu_hat = self.mu;
        let mut sigma_hat = self.sigma;
        for d in 0..6 {
            mu_hat[d] *= hf;
            sigma_hat[d] *= root_h;
        }
        (mu_hat, sigma_hat)
    }

    /// Per-step z-scoring; constant dims pass through centered.
    pub fn normalize_step(&self, raw: &[f64; ACTION_DIMS]) -> [f64; ACTION_DIMS] {
        let mut out = [0.0; ACTION_DIMS];
        for d in 0..ACTION_DIMS {
            let centered = raw[d] - self.mu[d];
            out[d] = if self.sigma[d] > CONSTANT_SIGMA {
                centered / self.sigma[d]
            } else {
                centered
            };
        }
        out
    }
}

/// A multi-step action sequence collapsed to one 7-D normalized vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetAction(pub [f64; ACTION_DIMS]);

/// Net relative action of a normalized H x 7 step sequence: de-normalize
/// per step, sum dims 1-6 over time, take the final step's dim 7, and
/// re-normalize with the horizon-adjusted statistics.
///
/// Implemented in the algebraically cancelled form
///   out_d = sigma_d * sum_t a_norm[t][d] / (sigma_hat_d + eps)
/// which is the same map (the H*mu and mu_hat terms cancel exactly) and
/// makes H = 1 with eps = 0 the exact identity.
pub fn net_relative_action(
    a_norm: &[[f64; ACTION_DIMS]],
    stats: &ActionStats,
    eps: f64,
) -> Result<NetAction> {
    let h = a_norm.len();
    if h == 0 {
        return Err(Error::data("net_relative_action needs H >= 1"));
    }
    let (_, sigma_hat) = stats.horizon(h);
    let mut out = [0.0; ACTION_DIMS];
    for d in 0..6 {
        let sum: f64 = a_norm.iter().map(|row| row[d]).sum();
        let denom = sigma_hat[d] + eps;
        out[d] = if denom > 0.0 {
            // sigma = 0 (constant dim) zeroes the numerator scale.
            (stats.sigma[d] / denom) * sum
        } else {
            0.0
        };
    }
    let denom = sigma_hat[6] + eps;
    out[6] = if denom > 0.0 {
        (stats.sigma[6] / denom) * a_norm[h - 1][6]
    } else {
        0.0
    };
    Ok(NetAction(out))
}

/// Literal three-step form of the same map (de-normalize, aggregate,
/// re-normalize); kept as the independent algebraic route for tests.
pub fn net_relative_action_literal(
    a_norm: &[[f64; ACTION_DIMS]],
    stats: &ActionStats,
    eps: f64,
) -> Result<NetAction> {
    let h = a_norm.len();
    if h == 0 {
        return Err(Error::data("net_relative_action needs H >= 1"));
    }
    let (mu_hat, sigma_hat) = stats.horizon(h);
    let mut net = [0.0; ACTION_DIMS];
    for row in a_norm {
        for d in 0..6 {
            net[d] += row[d] * stats.sigma[d] + stats.mu[d];
        }
    }
    net[6] = a_norm[h - 1][6] * stats.sigma[6] + stats.mu[6];
    let mut out = [0.0; ACTION_DIMS];
    for d in 0..ACTION_DIMS {
        let denom = sigma_hat[d] + eps;
        out[d] = if denom > 0.0 {
            (net[d] - mu_hat[d]) / denom
        } else {
            0.0
        };
    }
    Ok(NetAction(out))
}

/// Normalize a stored raw net action (already aggregated over the stride)
/// with horizon-adjusted statistics. This is the evaluation-pipeline path:
/// datasets store a_net_raw, so only the re-normalization step remains.
pub fn normalize_net_raw(
    a_net_raw: &[f64; ACTION_DIMS],
    stats: &ActionStats,
    h: usize,
    eps: f64,
) -> NetAction {
    let (mu_hat, sigma_hat) = stats.horizon(h);
    let mut out = [0.0; ACTION_DIMS];
    for d in 0..ACTION_DIMS {
        let denom = sigma_hat[d] + eps;
        out[d] = if denom > 0.0 {
            (a_net_raw[d] - mu_hat[d]) / denom
        } else {
            0.0
        };
    }
    NetAction(out)
}

/// Linear readout a_hat = W z + b.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    /// [d_in, d_out].
    pub w: Tensor,
    pub b: Vec<f64>,
}

impl LinearProbe {
    pub fn d_in(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn predict(&self, z: &Tensor) -> Result<Tensor> {
        if z.cols() != self.d_in() {
            return Err(Error::shape(
                format!("[N, {}]", self.d_in()),
                format!("{:?}", z.shape()),
            ));
        }
        let (n, d_out) = (z.rows(), self.d_out());
        let mut out = Tensor::zeros(&[n, d_out]);
        for i in 0..n {
            let row = z.row(i);
            let orow = &mut out.data_mut()[i * d_out..(i + 1) * d_out];
            orow.copy_from_slice(&self.b);
            for (k, &zv) in row.iter().enumerate() {
                if zv == 0.0 {
                    continue;
                }
                let wrow = &self.w.data()[k * d_out..(k + 1) * d_out];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += zv * wv;
                }
            }
        }
        Ok(out)
    }
}

/// Cholesky solve of the symmetric positive-definite system G x = rhs for
/// multiple right-hand sides (rhs is [d, m], column-major per output).
fn cholesky_solve(g: &mut [f64], d: usize, rhs: &mut [f64], m: usize) -> Result<()> {
    // In-place lower Cholesky.
    for i in 0..d {
        for j in 0..=i {
            let mut sum = g[i * d + j];
            for k in 0..j {
                sum -= g[i * d + k] * g[j * d + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::numeric(
                        "normal equations not positive definite (rank-deficient without jitter)",
                    ));
                }
                g[i * d + j] = sum.sqrt();
            } else {
                g[i * d + j] = sum / g[j * d + j];
            }
        }
    }
    // Forward then backward substitution per column.
    for col in 0..m {
        for i in 0..d {
            let mut sum = rhs[i * m + col];
            for k in 0..i {
                sum -= g[i * d + k] * rhs[k * m + col];
            }
            rhs[i * m + col] = sum / g[i * d + i];
        }
        for i in (0..d).rev() {
            let mut sum = rhs[i * m + col];
            for k in (i + 1)..d {
                sum -= g[k * d + i] * rhs[k * m + col];
            }
            rhs[i * m + col] = sum / g[i * d + i];
        }
    }
    Ok(())
}

/// Ridge-free least squares via normal equations with a small diagonal
/// jitter (default 1e-8). The default probe solver.
pub fn train_probe_closed(z: &Tensor, a: &Tensor, jitter: f64) -> Result<LinearProbe> {
    if z.rows() != a.rows() {
        return Err(Error::shape(
            format!("{} aligned rows", z.rows()),
            format!("{}", a.rows()),
        ));
    }
    let (n, d, m) = (z.rows(), z.cols(), a.cols());
    let aug = d + 1; // [z | 1]
    let mut gram = vec![0.0; aug * aug];
    let mut rhs = vec![0.0; aug * m];
    for i in 0..n {
        let zi = z.row(i);
        let ai = a.row(i);
        for p in 0..d {
            for q in p..d {
                gram[p * aug + q] += zi[p] * zi[q];
            }
            gram[p * aug + d] += zi[p];
            for c in 0..m {
                rhs[p * m + c] += zi[p] * ai[c];
            }
        }
        for c in 0..m {
            rhs[d * m + c] += ai[c];
        }
    }
    gram[d * aug + d] = n as f64;
    for p in 0..aug {
        for q in p..aug {
            gram[q * aug + p] = gram[p * aug + q];
        }
        gram[p * aug + p] += jitter;
    }
    cholesky_solve(&mut gram, aug, &mut rhs, m)?;
    let mut w = Tensor::zeros(&[d, m]);
    w.data_mut().copy_from_slice(&rhs[..d * m]);
    let b = rhs[d * m..].to_vec();
    Ok(LinearProbe { w, b })
}

/// Gradient-descent probe schedule (cosine-decayed Adam on the MSE).
#[derive(Debug, Clone)]
pub struct ProbeGdSchedule {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub cosine: bool,
    pub seed: u64,
}

impl Default for ProbeGdSchedule {
    fn default() -> Self {
        ProbeGdSchedule {
            epochs: 30,
            batch: 512,
            lr: 1e-3,
            cosine: true,
            seed: 0,
        }
    }
}

/// The protocol-fidelity solver: minimizes the same MSE by minibatch Adam.
pub fn train_probe_gd(z: &Tensor, a: &Tensor, sched: &ProbeGdSchedule) -> Result<LinearProbe> {
    if z.rows() != a.rows() {
        return Err(Error::shape(
            format!("{} aligned rows", z.rows()),
            format!("{}", a.rows()),
        ));
    }
    let (n, d, m) = (z.rows(), z.cols(), a.cols());
    let mut params = ParamSet::new();
    let w_id = params.insert("w", Tensor::zeros(&[d, m]));
    let b_id = params.insert("b", Tensor::zeros(&[m]));

    let mut rng = Rng::stream(sched.seed, 0x9d);
    let steps_per_epoch = n.div_ceil(sched.batch);
    let total_steps = (sched.epochs * steps_per_epoch).max(1);
    let mut adam = AdamState::new(&params);
    let mut step = 0usize;
    for _epoch in 0..sched.epochs {
        let order = rng.permutation(n);
        for chunk in order.chunks(sched.batch) {
            let lr = if sched.cosine {
                let t = step as f64 / total_steps as f64;
                sched.lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            } else {
                sched.lr
            };
            let cfg = AdamConfig::new(lr, 0.0, 0.0);

            let mut zb = Vec::with_capacity(chunk.len() * d);
            let mut ab = Vec::with_capacity(chunk.len() * m);
            for &r in chunk {
                zb.extend_from_slice(z.row(r));
                ab.extend_from_slice(a.row(r));
            }
            let mut g = Graph::new();
            let zv = g.constant(Tensor::from_vec(&[chunk.len(), d], zb)?)?;
            let av = g.constant(Tensor::from_vec(&[chunk.len(), m], ab)?)?;
            let wv = g.param(&params, w_id)?;
            let bv = g.param(&params, b_id)?;
            let pred = g.matmul(zv, wv)?;
            let pred = g.add_bias(pred, bv)?;
            let diff = g.sub(av, pred)?;
            let sq = g.sum_sq(diff)?;
            let loss = g.scale(sq, 1.0 / chunk.len() as f64)?;
            g.backward(loss)?;
            params.zero_grads();
            g.accumulate_param_grads(&mut params)?;
            optimizer_step(&mut params, &mut adam, &cfg)?;
            step += 1;
        }
    }
    Ok(LinearProbe {
        w: params.value(w_id).clone(),
        b: params.value(b_id).data().to_vec(),
    })
}

/// Normalized mean squared error: E|a - a_hat|^2 divided by the total
/// variance of the targets (sum of per-dimension variances). 1.0 equals the
/// mean predictor.
pub fn nmse(probe: &LinearProbe, z: &Tensor, a: &Tensor) -> Result<f64> {
    let n = a.rows();
    let pred = probe.predict(z)?;
    let mut mse = 0.0;
    for i in 0..n {
        for (p, t) in pred.row(i).iter().zip(a.row(i)) {
            mse += (p - t) * (p - t);
        }
    }
    mse /= n as f64;
    let total_var = total_variance(a);
    if total_var <= 0.0 {
        return Err(Error::data("zero-variance probe targets"));
    }
    Ok(mse / total_var)
}

fn total_variance(a: &Tensor) -> f64 {
    let (n, m) = (a.rows(), a.cols());
    let mut mean = vec![0.0; m];
    for i in 0..n {
        for (j, v) in a.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut var = 0.0;
    for i in 0..n {
        for (j, v) in a.row(i).iter().enumerate() {
            let c = v - mean[j];
            var += c * c;
        }
    }
    var / n as f64
}

/// Per-dimension NMSE breakdown (each dim normalized by its own variance;
/// constant dims report 0).
pub fn nmse_per_dim(probe: &LinearProbe, z: &Tensor, a: &Tensor) -> Result<Vec<f64>> {
    let pred = probe.predict(z)?;
    let (n, m) = (a.rows(), a.cols());
    let mut mean = vec![0.0; m];
    for i in 0..n {
        for (j, v) in a.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut mse = vec![0.0; m];
    let mut var = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            let d = pred.row(i)[j] - a.row(i)[j];
            mse[j] += d * d;
            let c = a.row(i)[j] - mean[j];
            var[j] += c * c;
        }
    }
    Ok((0..m)
        .map(|j| if var[j] > 0.0 { mse[j] / var[j] } else { 0.0 })
        .collect())
}
