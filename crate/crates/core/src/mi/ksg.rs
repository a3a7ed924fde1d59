//! KSG k-nearest-neighbor mutual information estimator (variant 1).
//!
//! I = psi(k) + psi(N) - < psi(n_x + 1) + psi(n_y + 1) >
//! with max-norm neighborhoods in the joint space and strict-inequality
//! marginal counts at the k-th joint neighbor distance. Quantized latents
//! produce exact ties, which KSG is undefined for; a seeded jitter of
//! magnitude 1e-10 breaks them.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::mi::digamma::{digamma, digamma_table};
use crate::mi::kdtree::KdTree;
use crate::rng::Rng;

pub const DEFAULT_K: usize = 5;
pub const JITTER_AMPLITUDE: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct KsgConfig {
    pub k: usize,
    pub jitter_seed: u64,
}

impl Default for KsgConfig {
    fn default() -> Self {
        KsgConfig {
            k: DEFAULT_K,
            jitter_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KsgOutput {
    pub bits_raw: f64,
    /// Raw value clamped below at zero (plug-in MI is nonnegative).
    pub bits_clamped: f64,
    pub n: usize,
    pub k: usize,
}

fn jittered(x: &Tensor, rng: &mut Rng) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v += rng.range_f64(-JITTER_AMPLITUDE, JITTER_AMPLITUDE);
    }
    out
}

/// Estimate I(X; Y) in bits from row-aligned samples.
pub fn ksg_estimate(x: &Tensor, y: &Tensor, cfg: &KsgConfig) -> Result<KsgOutput> {
    let n = x.rows();
    if y.rows() != n {
        return Err(Error::shape(format!("{n} rows"), format!("{}", y.rows())));
    }
    if cfg.k == 0 || n <= cfg.k {
        return Err(Error::config(format!(
            "KSG needs N > k >= 1, got N = {n}, k = {}",
            cfg.k
        )));
    }
    let mut rng = Rng::stream(cfg.jitter_seed, 0x5e9);
    let xj = jittered(x, &mut rng);
    let yj = jittered(y, &mut rng);

    let (dx, dy) = (xj.cols(), yj.cols());
    let mut joint = Vec::with_capacity(n * (dx + dy));
    for i in 0..n {
        joint.extend_from_slice(xj.row(i));
        joint.extend_from_slice(yj.row(i));
    }
    let joint_tree = KdTree::build(&joint, dx + dy);
    let x_tree = KdTree::build(xj.data(), dx);
    let y_tree = KdTree::build(yj.data(), dy);

    let psi = digamma_table(n);
    let mut acc = 0.0;
    for i in 0..n {
        let q = &joint[i * (dx + dy)..(i + 1) * (dx + dy)];
        let eps = joint_tree.kth_distance(q, cfg.k, i);
        let nx = x_tree.count_within(xj.row(i), eps, i);
        let ny = y_tree.count_within(yj.row(i), eps, i);
        acc += psi[nx + 1] + psi[ny + 1];
    }
    let nats = digamma(cfg.k as f64) + digamma(n as f64) - acc / n as f64;
    let bits_raw = nats / std::f64::consts::LN_2;
    Ok(KsgOutput {
        bits_raw,
        bits_clamped: bits_raw.max(0.0),
        n,
        k: cfg.k,
    })
}
