//! Adam with decoupled weight decay and global-norm gradient clipping.

use crate::autodiff::mlp::ParamSet;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Global-norm clip applied before the moment update; 0 disables.
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64, grad_clip: f64) -> Self {
        AdamConfig {
            lr,
            weight_decay,
            grad_clip,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let m = params
            .ids()
            .map(|id| Tensor::zeros(params.value(id).shape()))
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState { m, v, t: 0 }
    }
}

/// One optimizer step over the accumulated gradients. Returns the pre-clip
/// global gradient norm. Non-finite gradients abort with no update applied.
pub fn optimizer_step(
    params: &mut ParamSet,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<f64> {
    for id in params.ids() {
        if !params.grad(id).all_finite() {
            return Err(Error::numeric(format!(
                "non-finite gradient in parameter `{}`",
                params.name(id)
            )));
        }
    }
    let norm = params.global_grad_norm();
    let clip_scale = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
        cfg.grad_clip / norm
    } else {
        1.0
    };

    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);

    for id in params.ids() {
        let n = params.value(id).len();
        for i in 0..n {
            let g = params.grad(id).data()[i] * clip_scale;
            let m = &mut state.m[id].data_mut()[i];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            let m_hat = *m / bc1;
            let v = &mut state.v[id].data_mut()[i];
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let v_hat = *v / bc2;
            let theta = &mut params.value_mut(id).data_mut()[i];
            *theta -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *theta);
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn single_param(values: Vec<f64>) -> ParamSet {
        let mut p = ParamSet::new();
        let n = values.len();
        p.insert("theta", Tensor::from_vec(&[n], values).unwrap());
        p
    }

    #[test]
    fn zero_gradient_no_decay_leaves_params_unchanged() {
        let mut params = single_param(vec![0.5, -1.0, 2.0]);
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::new(1e-2, 0.0, 0.0);
        optimizer_step(&mut params, &mut state, &cfg).unwrap();
        assert_eq!(params.value(0).data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn clip_rescales_to_exact_norm() {
        let mut params = single_param(vec![0.0; 4]);
        // gradient with global norm 10
        params.grad_mut(0).data_mut().copy_from_slice(&[10.0, 0.0, 0.0, 0.0]);
        let cfg = AdamConfig::new(1e-2, 0.0, 1.0);
        let norm = params.global_grad_norm();
        assert!((norm - 10.0).abs() < 1e-12);
        let scale = cfg.grad_clip / norm;
        let clipped_norm: f64 = params
            .grad(0)
            .data()
            .iter()
            .map(|g| (g * scale) * (g * scale))
            .sum::<f64>()
            .sqrt();
        assert!((clipped_norm - 1.0).abs() < 1e-12);
        let mut state = AdamState::new(&params);
        optimizer_step(&mut params, &mut state, &cfg).unwrap();
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut params = single_param(vec![1.0]);
        params.grad_mut(0).data_mut()[0] = f64::NAN;
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::new(1e-2, 0.0, 0.0);
        assert!(optimizer_step(&mut params, &mut state, &cfg).is_err());
        assert_eq!(params.value(0).data(), &[1.0]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // Minimize 0.5 * |theta|^2 from random unit-norm starts.
        let mut rng = Rng::new(13);
        for trial in 0..3 {
            let mut start = [rng.normal(), rng.normal(), rng.normal(), rng.normal()];
            let norm = start.iter().map(|v| v * v).sum::<f64>().sqrt();
            start.iter_mut().for_each(|v| *v /= norm);
            let mut params = single_param(start.to_vec());
            let mut state = AdamState::new(&params);
            let cfg = AdamConfig::new(1e-2, 0.0, 0.0);
            for _ in 0..500 {
                params.zero_grads();
                let theta = params.value(0).data().to_vec();
                params.grad_mut(0).data_mut().copy_from_slice(&theta);
                optimizer_step(&mut params, &mut state, &cfg).unwrap();
            }
            let final_norm = params.value(0).data().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(final_norm < 1e-3, "trial {trial}: |theta| = {final_norm}");
        }
    }

    #[test]
    fn decoupled_weight_decay_shrinks_params_under_zero_gradient() {
        let mut params = single_param(vec![1.0]);
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::new(1e-2, 0.1, 0.0);
        optimizer_step(&mut params, &mut state, &cfg).unwrap();
        let v = params.value(0).data()[0];
        assert!((v - (1.0 - 1e-2 * 0.1)).abs() < 1e-15, "v = {v}");
    }
}
