//! Mutual-information machinery: KSG, MINE, and BA estimators with shared
//! preprocessing (standardization, random projection), a permutation sanity
//! control, and exact discrete oracles including the information-bound
//! verification.

pub mod ba;
pub mod digamma;
pub mod discrete;
pub mod kdtree;
pub mod ksg;
pub mod mine;
pub mod preprocess;
pub mod samples;
pub mod synth;

pub use ba::{ba_estimate, BaOutput, DiagonalGaussian, SIGMA_FLOOR};
pub use digamma::digamma;
pub use discrete::{
    conditional_entropy_bits, conditional_mi_bits, entropy_bits, mutual_information_bits,
    verify_bound, BoundReport, Column,
};
pub use ksg::{ksg_estimate, KsgConfig, KsgOutput, DEFAULT_K};
pub use mine::{mine_estimate, MineOutput, NeuralMiSchedule};
pub use preprocess::{de_zscore, project_with, projection_matrix, random_project, zscore, ZscoreStats};
pub use samples::{PairedSamples, Split};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Ksg,
    Mine,
    Ba,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Ksg => "ksg",
            EstimatorKind::Mine => "mine",
            EstimatorKind::Ba => "ba",
        }
    }

    pub fn parse(s: &str) -> Result<EstimatorKind> {
        match s {
            "ksg" => Ok(EstimatorKind::Ksg),
            "mine" => Ok(EstimatorKind::Mine),
            "ba" => Ok(EstimatorKind::Ba),
            other => Err(crate::error::Error::config(format!(
                "unknown estimator `{other}` (expected ksg | mine | ba)"
            ))),
        }
    }
}

/// Full estimation protocol: optional random projection of the latents to
/// `project_dim` before KSG, z-scoring of both sides, and the per-estimator
/// schedules. `project_dim` defaults to min(d_z, 32) at desk scale (the
/// larger paper-scale value is a config choice).
#[derive(Debug, Clone)]
pub struct MiProtocol {
    pub ksg: KsgConfig,
    /// Project latents to this dimension before KSG when d_z exceeds it.
    pub project_dim: Option<usize>,
    pub projection_seed: u64,
    pub mine: NeuralMiSchedule,
    pub ba: NeuralMiSchedule,
}

impl Default for MiProtocol {
    fn default() -> Self {
        MiProtocol {
            ksg: KsgConfig::default(),
            project_dim: Some(32),
            projection_seed: 17,
            mine: NeuralMiSchedule::default(),
            ba: NeuralMiSchedule::default(),
        }
    }
}

/// Estimator output with provenance.
#[derive(Debug, Clone)]
pub struct MiEstimate {
    pub estimator: EstimatorKind,
    /// Raw estimate in bits (variational bounds may be negative).
    pub bits: f64,
    /// For KSG: the raw value clamped below at zero.
    pub bits_clamped: Option<f64>,
    pub seed: u64,
    pub preprocessing: String,
    pub split: String,
    pub permuted: bool,
    pub flags: Vec<String>,
}

/// Drop constant columns (flagged by zscore). A constant dimension carries
/// no information — I(Z;A) is unchanged — and degenerate dimensions poison
/// the density models (a zero-variance marginal has unbounded log density).
fn drop_constant_cols(x: &crate::autodiff::Tensor, stats: &ZscoreStats) -> crate::autodiff::Tensor {
    if !stats.constant.iter().any(|&c| c) {
        return x.clone();
    }
    let keep: Vec<usize> = (0..x.cols()).filter(|&j| !stats.constant[j]).collect();
    let mut data = Vec::with_capacity(x.rows() * keep.len());
    for i in 0..x.rows() {
        let row = x.row(i);
        for &j in &keep {
            data.push(row[j]);
        }
    }
    crate::autodiff::Tensor::from_vec(&[x.rows(), keep.len()], data).unwrap()
}

/// Standardize both sides and drop constant dimensions. Returns the
/// preprocessing note and a zero-information short-circuit flag when either
/// side is entirely constant.
fn standardize_pair(
    samples: &PairedSamples,
) -> Result<(crate::autodiff::Tensor, crate::autodiff::Tensor, String, bool)> {
    let (z, z_stats) = zscore(&samples.z);
    let (a, a_stats) = zscore(&samples.a);
    let z = drop_constant_cols(&z, &z_stats);
    let a = drop_constant_cols(&a, &a_stats);
    let dropped = (samples.z.cols() - z.cols()) + (samples.a.cols() - a.cols());
    let note = if dropped > 0 {
        format!("zscore,drop{dropped}const")
    } else {
        "zscore".to_string()
    };
    let degenerate = z.cols() == 0 || a.cols() == 0;
    Ok((z, a, note, degenerate))
}

fn zero_estimate(kind: EstimatorKind, seed: u64, note: String, split: &str) -> MiEstimate {
    MiEstimate {
        estimator: kind,
        bits: 0.0,
        bits_clamped: Some(0.0),
        seed,
        preprocessing: note,
        split: split.to_string(),
        permuted: false,
        flags: vec!["all_dims_constant".to_string()],
    }
}

/// Run one estimator under the protocol.
pub fn estimate(
    samples: &PairedSamples,
    kind: EstimatorKind,
    protocol: &MiProtocol,
) -> Result<MiEstimate> {
    match kind {
        EstimatorKind::Ksg => {
            let (z_in, proj_note) = match protocol.project_dim {
                Some(d) if samples.z.cols() > d => (
                    random_project(&samples.z, d, protocol.projection_seed)?,
                    format!("project{d},"),
                ),
                _ => (samples.z.clone(), String::new()),
            };
            let projected = PairedSamples::new(z_in, samples.a.clone(), samples.split.clone())?;
            let (z, a, note, degenerate) = standardize_pair(&projected)?;
            if degenerate {
                return Ok(zero_estimate(kind, protocol.ksg.jitter_seed, format!("{proj_note}{note}"), "all"));
            }
            if samples.len() < 2 * (protocol.ksg.k + 1) {
                return Err(crate::error::Error::data(format!(
                    "KSG needs N >= 2(k+1) = {}, got {}",
                    2 * (protocol.ksg.k + 1),
                    samples.len()
                )));
            }
            let out = ksg_estimate(&z, &a, &protocol.ksg)?;
            Ok(MiEstimate {
                estimator: kind,
                bits: out.bits_raw,
                bits_clamped: Some(out.bits_clamped),
                seed: protocol.ksg.jitter_seed,
                preprocessing: format!("{proj_note}{note},jitter1e-10"),
                split: "all".to_string(),
                permuted: false,
                flags: Vec::new(),
            })
        }
        EstimatorKind::Mine => {
            let (z, a, note, degenerate) = standardize_pair(samples)?;
            if degenerate {
                return Ok(zero_estimate(kind, protocol.mine.seed, note, "test"));
            }
            let standardized = PairedSamples::new(z, a, samples.split.clone())?;
            let out = mine_estimate(&standardized, &protocol.mine)?;
            Ok(MiEstimate {
                estimator: kind,
                bits: out.bits,
                bits_clamped: None,
                seed: protocol.mine.seed,
                preprocessing: note,
                split: "test".to_string(),
                permuted: false,
                flags: vec![format!("steps={}", out.train_steps_run)],
            })
        }
        EstimatorKind::Ba => {
            let (z, a, note, degenerate) = standardize_pair(samples)?;
            if degenerate {
                return Ok(zero_estimate(kind, protocol.ba.seed, note, "test"));
            }
            let standardized = PairedSamples::new(z, a, samples.split.clone())?;
            let out = ba_estimate(&standardized, &protocol.ba)?;
            let mut flags = vec![format!("steps={}", out.train_steps_run)];
            if out.sigma_floored {
                flags.push("sigma_floored".to_string());
            }
            Ok(MiEstimate {
                estimator: kind,
                bits: out.bits,
                bits_clamped: None,
                seed: protocol.ba.seed,
                preprocessing: note,
                split: "test".to_string(),
                permuted: false,
                flags,
            })
        }
    }
}

/// Permutation sanity control: break the pairing with a seeded uniform
/// permutation of the actions, then run the estimator unchanged. The true
/// MI of the permuted pairing is zero.
pub fn permutation_control(
    samples: &PairedSamples,
    kind: EstimatorKind,
    protocol: &MiProtocol,
    seed: u64,
) -> Result<MiEstimate> {
    let permuted = samples.permuted_actions(seed);
    let mut est = estimate(&permuted, kind, protocol)?;
    est.permuted = true;
    Ok(est)
}
