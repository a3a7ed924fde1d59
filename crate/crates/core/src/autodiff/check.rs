//! Finite-difference gradient verification.
//!
//! Central differences with configurable epsilon serve as the independent
//! oracle for every differentiable op and for composite losses. The checker
//! never looks at how the analytic gradients were produced; it only replays
//! the loss at perturbed parameter values.

use crate::autodiff::mlp::ParamSet;
use crate::autodiff::tensor::Tensor;
use crate::error::Result;
use crate::rng::Rng;

pub const FD_EPS: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

/// Relative error with an absolute floor so that near-zero pairs compare
/// sanely.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub probes: usize,
    pub max_rel_err: f64,
    /// (param id, flat index, analytic, numeric) of the worst probe.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Check analytic parameter gradients against central finite differences on
/// `probes` random parameter entries.
///
/// `loss` must be a pure function of the parameter values. `analytic` is the
/// full per-parameter gradient at the unperturbed point, in `ParamSet` id
/// order.
pub fn fd_check_params(
    params: &mut ParamSet,
    loss: &mut dyn FnMut(&ParamSet) -> Result<f64>,
    analytic: &[Tensor],
    probes: usize,
    eps: f64,
    seed: u64,
) -> Result<FdReport> {
    let mut rng = Rng::new(seed);
    let slots: Vec<(usize, usize)> = params
        .ids()
        .flat_map(|id| (0..params.value(id).len()).map(move |i| (id, i)))
        .collect();
    let mut report = FdReport {
        probes,
        max_rel_err: 0.0,
        worst: None,
    };
    for _ in 0..probes {
        let (id, idx) = slots[rng.below(slots.len())];
        let original = params.value(id).data()[idx];

        params.value_mut(id).data_mut()[idx] = original + eps;
        let plus = loss(params)?;
        params.value_mut(id).data_mut()[idx] = original - eps;
        let minus = loss(params)?;
        params.value_mut(id).data_mut()[idx] = original;

        let numeric = (plus - minus) / (2.0 * eps);
        let ad = analytic[id].data()[idx];
        let err = rel_error(ad, numeric);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = Some((id, idx, ad, numeric));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::graph::Graph;
    use crate::autodiff::mlp::{mlp_forward, Activation, MlpSpec};

    /// Gradient of |f(x)|^2 over a 2-layer tanh net matches central
    /// finite differences.
    #[test]
    fn mlp_squared_norm_matches_finite_differences() {
        let spec = MlpSpec::new(vec![3, 6, 2], Activation::Tanh).unwrap();
        let mut params = ParamSet::new();
        let mut rng = Rng::new(21);
        params.add_mlp("net", &spec, &mut rng);
        let x = Tensor::from_vec(&[4, 3], (0..12).map(|i| (i as f64) * 0.21 - 1.1).collect())
            .unwrap();

        let mut loss = |p: &ParamSet| -> Result<f64> {
            let mut g = Graph::new();
            let xv = g.constant(x.clone())?;
            let y = mlp_forward(&mut g, p, "net", &spec, xv)?;
            let l = g.sum_sq(y)?;
            Ok(g.value(l).item())
        };

        // Analytic gradients at the base point.
        let analytic: Vec<Tensor> = {
            let mut g = Graph::new();
            let xv = g.constant(x.clone()).unwrap();
            let y = mlp_forward(&mut g, &params, "net", &spec, xv).unwrap();
            let l = g.sum_sq(y).unwrap();
            g.backward(l).unwrap();
            params.zero_grads();
            let mut p2 = params.clone();
            g.accumulate_param_grads(&mut p2).unwrap();
            p2.ids().map(|id| p2.grad(id).clone()).collect()
        };

        let report =
            fd_check_params(&mut params, &mut loss, &analytic, 100, FD_EPS, 5).unwrap();
        assert!(
            report.max_rel_err < FD_REL_TOL,
            "max rel err {} at {:?}",
            report.max_rel_err,
            report.worst
        );
    }
}
