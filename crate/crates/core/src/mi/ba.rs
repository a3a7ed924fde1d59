//! Barber-Agakov variational MI estimator.
//!
//! Fits a conditional diagonal Gaussian q(a|z) = N(mu(z), diag(sigma^2))
//! with an MLP mean and a global learned std by maximum likelihood, plus a
//! diagonal Gaussian marginal q(a) fitted to the training actions. The
//! plug-in estimate on the test split is
//!   ( E[log q(a|z)] - E[log q(a)] ) / ln 2.

use crate::autodiff::adamw::{optimizer_step, AdamConfig, AdamState};
use crate::autodiff::graph::Graph;
use crate::autodiff::mlp::{mlp_forward, mlp_forward_values, MlpSpec, ParamSet};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::mi::mine::NeuralMiSchedule;
use crate::mi::samples::{PairedSamples, Split};
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Floor on the learned conditional std.
pub const SIGMA_FLOOR: f64 = 1e-6;

pub struct BaOutput {
    pub bits: f64,
    pub sigma_floored: bool,
    pub train_steps_run: usize,
}

/// Diagonal Gaussian marginal fitted by maximum likelihood.
#[derive(Debug, Clone)]
pub struct DiagonalGaussian {
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn fit(a: &Tensor) -> DiagonalGaussian {
        let (n, d) = (a.rows(), a.cols());
        let mut mu = vec![0.0; d];
        for i in 0..n {
            for (j, v) in a.row(i).iter().enumerate() {
                mu[j] += v;
            }
        }
        mu.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for (j, v) in a.row(i).iter().enumerate() {
                let c = v - mu[j];
                var[j] += c * c;
            }
        }
        var.iter_mut()
            .for_each(|v| *v = (*v / n as f64).max(SIGMA_FLOOR * SIGMA_FLOOR));
        DiagonalGaussian { mu, var }
    }

    pub fn log_density(&self, a: &[f64]) -> f64 {
        a.iter()
            .zip(self.mu.iter().zip(&self.var))
            .map(|(&x, (&m, &v))| -0.5 * (LN_2PI + v.ln() + (x - m) * (x - m) / v))
            .sum()
    }
}

fn mean_spec(d_z: usize, d_a: usize, sched: &NeuralMiSchedule) -> Result<MlpSpec> {
    let mut widths = vec![d_z];
    widths.extend(&sched.hidden);
    widths.push(d_a);
    MlpSpec::new(widths, sched.activation)
}

fn gather(rows: &[usize], m: &Tensor) -> Tensor {
    let d = m.cols();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        data.extend_from_slice(m.row(r));
    }
    Tensor::from_vec(&[rows.len(), d], data).unwrap()
}

/// Mean negative log likelihood (up to the ln 2pi constant) of the
/// conditional model on the given rows — the early-stopping metric.
fn conditional_nll(
    params: &ParamSet,
    spec: &MlpSpec,
    samples: &PairedSamples,
    rows: &[usize],
) -> Result<f64> {
    let z = gather(rows, &samples.z);
    let a = gather(rows, &samples.a);
    let mu = mlp_forward_values(params, "mean", spec, &z)?;
    let ls = params.value(params.require("log_std")?);
    let mut acc = 0.0;
    for i in 0..rows.len() {
        for (j, (&av, &mv)) in a.row(i).iter().zip(mu.row(i)).enumerate() {
            let l = ls.data()[j];
            acc += l + 0.5 * (av - mv) * (av - mv) * (-2.0 * l).exp();
        }
    }
    Ok(acc / rows.len() as f64)
}

/// Train q(a|z) and report the plug-in BA estimate in bits on the test
/// split.
pub fn ba_estimate(samples: &PairedSamples, sched: &NeuralMiSchedule) -> Result<BaOutput> {
    samples.require_splits()?;
    let (d_z, d_a) = (samples.z.cols(), samples.a.cols());
    let spec = mean_spec(d_z, d_a, sched)?;
    let mut params = ParamSet::new();
    let mut init_rng = Rng::stream(sched.seed, 0x41);
    params.add_mlp("mean", &spec, &mut init_rng);
    params.insert("log_std", Tensor::zeros(&[d_a]));
    let ls_id = params.id("log_std").unwrap();

    let train_rows = samples.rows_of(Split::Train);
    let val_rows = samples.rows_of(Split::Val);
    let test_rows = samples.rows_of(Split::Test);

    let adam_cfg = AdamConfig::new(sched.lr, sched.weight_decay, sched.grad_clip);
    let mut adam = AdamState::new(&params);
    let mut batch_rng = Rng::stream(sched.seed, 0x42);
    let mut order = batch_rng.permutation(train_rows.len());
    let mut cursor = 0usize;

    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut patience_left = sched.patience;
    let mut steps_run = 0usize;

    for step in 0..sched.steps {
        steps_run = step + 1;
        let b = sched.batch.min(train_rows.len());
        let mut rows = Vec::with_capacity(b);
        for _ in 0..b {
            if cursor >= order.len() {
                order = batch_rng.permutation(train_rows.len());
                cursor = 0;
            }
            rows.push(train_rows[order[cursor]]);
            cursor += 1;
        }

        let mut g = Graph::new();
        let z = g.constant(gather(&rows, &samples.z))?;
        let a = g.constant(gather(&rows, &samples.a))?;
        let mu = mlp_forward(&mut g, &params, "mean", &spec, z)?;
        let diff = g.sub(a, mu)?;
        let sq = g.mul(diff, diff)?;
        let ls = g.param(&params, ls_id)?;
        let neg2ls = g.scale(ls, -2.0)?;
        let inv_var = g.exp(neg2ls)?;
        let weighted = g.mul_row(sq, inv_var)?;
        let quad = g.sum_all(weighted)?;
        let quad = g.scale(quad, 0.5 / b as f64)?;
        let ls_sum = g.sum_all(ls)?;
        let nll = g.add(quad, ls_sum)?;
        g.backward(nll)
            .map_err(|e| Error::numeric(format!("BA step {step}: {e}")))?;
        params.zero_grads();
        g.accumulate_param_grads(&mut params)?;
        optimizer_step(&mut params, &mut adam, &adam_cfg)
            .map_err(|e| Error::numeric(format!("BA step {step}: {e}")))?;

        if (step + 1) % sched.eval_every == 0 {
            let val = conditional_nll(&params, &spec, samples, &val_rows)?;
            if val < best_val - 1e-9 {
                best_val = val;
                best_params = params.clone();
                patience_left = sched.patience;
            } else {
                if patience_left == 0 {
                    break;
                }
                patience_left -= 1;
            }
        }
    }
    if best_val == f64::INFINITY {
        best_params = params;
    }

    // Floor degenerate stds before scoring.
    let mut sigma_floored = false;
    {
        let ls = best_params.value_mut(ls_id);
        for v in ls.data_mut() {
            if v.exp() < SIGMA_FLOOR {
                *v = SIGMA_FLOOR.ln();
                sigma_floored = true;
            }
        }
    }

    let marginal = DiagonalGaussian::fit(&gather(&train_rows, &samples.a));

    let z_test = gather(&test_rows, &samples.z);
    let a_test = gather(&test_rows, &samples.a);
    let mu = mlp_forward_values(&best_params, "mean", &spec, &z_test)?;
    let ls = best_params.value(ls_id);
    let mut acc = 0.0;
    for i in 0..test_rows.len() {
        let mut log_q_cond = 0.0;
        for (j, (&av, &mv)) in a_test.row(i).iter().zip(mu.row(i)).enumerate() {
            let l = ls.data()[j];
            log_q_cond += -0.5 * LN_2PI - l - 0.5 * (av - mv) * (av - mv) * (-2.0 * l).exp();
        }
        acc += log_q_cond - marginal.log_density(a_test.row(i));
    }
    let bits = acc / test_rows.len() as f64 / std::f64::consts::LN_2;
    if !bits.is_finite() {
        return Err(Error::numeric(format!("BA estimate diverged: {bits}")));
    }
    Ok(BaOutput {
        bits,
        sigma_floored,
        train_steps_run: steps_run,
    })
}

/// BA score of an explicitly provided conditional model, for identity
/// checks (a conditional frozen at the marginal scores exactly 0 bits).
pub fn ba_score_of_model(
    params: &ParamSet,
    spec: &MlpSpec,
    marginal: &DiagonalGaussian,
    samples: &PairedSamples,
) -> Result<f64> {
    let rows = samples.rows_of(Split::Test);
    let z = gather(&rows, &samples.z);
    let a = gather(&rows, &samples.a);
    let mu = mlp_forward_values(params, "mean", spec, &z)?;
    let ls = params.value(params.require("log_std")?);
    let mut acc = 0.0;
    for i in 0..rows.len() {
        let mut log_q = 0.0;
        for (j, (&av, &mv)) in a.row(i).iter().zip(mu.row(i)).enumerate() {
            let l = ls.data()[j];
            log_q += -0.5 * LN_2PI - l - 0.5 * (av - mv) * (av - mv) * (-2.0 * l).exp();
        }
        acc += log_q - marginal.log_density(a.row(i));
    }
    Ok(acc / rows.len() as f64 / std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::mlp::Activation;
    use crate::mi::synth::{bivariate_gaussian, gaussian_mi_bits};

    fn linear_schedule(seed: u64) -> NeuralMiSchedule {
        NeuralMiSchedule {
            hidden: vec![],
            activation: Activation::Tanh,
            seed,
            ..NeuralMiSchedule::default()
        }
    }

    #[test]
    fn conditional_equal_to_marginal_scores_zero() {
        let (x, y) = bivariate_gaussian(600, 0.8, 3);
        let samples = PairedSamples::with_splits(x, y, (0.6, 0.2, 0.2), 3).unwrap();
        let train_rows = samples.rows_of(Split::Train);
        let marginal = DiagonalGaussian::fit(&gather(&train_rows, &samples.a));
        // Frozen model: mean identically marginal mean, same std.
        let spec = mean_spec(1, 1, &linear_schedule(0)).unwrap();
        let mut params = ParamSet::new();
        let mut rng = Rng::new(0);
        params.add_mlp("mean", &spec, &mut rng);
        for id in params.ids().collect::<Vec<_>>() {
            params.value_mut(id).fill(0.0);
        }
        params
            .value_mut(params.id("mean.b0").unwrap())
            .data_mut()
            .copy_from_slice(&marginal.mu);
        let ls = Tensor::from_vec(&[1], vec![0.5 * marginal.var[0].ln()]).unwrap();
        params.insert("log_std", ls);
        let bits = ba_score_of_model(&params, &spec, &marginal, &samples).unwrap();
        assert!(bits.abs() < 1e-9, "got {bits}");
    }

    #[test]
    fn gaussian_estimate_is_tight_with_linear_mean() {
        let (x, y) = bivariate_gaussian(5000, 0.8, 5);
        let samples = PairedSamples::with_splits(x, y, (0.6, 0.2, 0.2), 5).unwrap();
        let out = ba_estimate(&samples, &linear_schedule(5)).unwrap();
        let truth = gaussian_mi_bits(0.8);
        assert!(
            (out.bits - truth).abs() < 0.1,
            "got {} vs {truth}",
            out.bits
        );
    }

    #[test]
    fn permuted_pairing_near_zero() {
        let (x, y) = bivariate_gaussian(5000, 0.8, 7);
        let samples = PairedSamples::with_splits(x, y, (0.6, 0.2, 0.2), 7)
            .unwrap()
            .permuted_actions(13);
        let out = ba_estimate(&samples, &linear_schedule(7)).unwrap();
        assert!(out.bits <= 0.05, "got {}", out.bits);
    }
}
