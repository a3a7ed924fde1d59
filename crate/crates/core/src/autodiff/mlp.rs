//! Named parameter storage and multilayer perceptrons.

use crate::autodiff::graph::{Graph, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Activation> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::config(format!("unknown activation `{other}`"))),
        }
    }
}

/// MLP layout: `widths` runs input..output (so `widths.len() >= 2`), hidden
/// layers use `activation`, the final layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config("an MLP needs at least input and output widths"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::config("layer widths must be positive"));
        }
        Ok(MlpSpec { widths, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

/// Named parameter tensors with per-parameter gradient accumulators.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> usize {
        assert!(
            self.id(name).is_none(),
            "duplicate parameter name `{name}`"
        );
        let grad = Tensor::zeros(value.shape());
        self.names.push(name.to_string());
        self.values.push(value);
        self.grads.push(grad);
        self.names.len() - 1
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.id(name)
            .ok_or_else(|| Error::data(format!("unknown parameter `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn value(&self, id: usize) -> &Tensor {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.values[id]
    }

    pub fn grad(&self, id: usize) -> &Tensor {
        &self.grads[id]
    }

    pub fn grad_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.grads[id]
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.iter_mut() {
            g.fill(0.0);
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> {
        0..self.names.len()
    }

    pub fn global_grad_norm(&self) -> f64 {
        self.grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }

    pub fn total_values(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Register MLP parameters under `prefix`: weights `{prefix}.w{i}` drawn
    /// uniform in +-1/sqrt(fan_in), biases `{prefix}.b{i}` zero.
    pub fn add_mlp(&mut self, prefix: &str, spec: &MlpSpec, rng: &mut Rng) {
        for layer in 0..spec.num_layers() {
            let (fan_in, fan_out) = (spec.widths[layer], spec.widths[layer + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut w = Tensor::zeros(&[fan_in, fan_out]);
            for v in w.data_mut() {
                *v = rng.range_f64(-bound, bound);
            }
            self.insert(&format!("{prefix}.w{layer}"), w);
            self.insert(&format!("{prefix}.b{layer}"), Tensor::zeros(&[fan_out]));
        }
    }
}

/// Forward pass on the tape: returns the output Var; the tape holds
/// everything needed for exact reverse-mode gradients.
pub fn mlp_forward(
    g: &mut Graph,
    params: &ParamSet,
    prefix: &str,
    spec: &MlpSpec,
    x: Var,
) -> Result<Var> {
    let in_dim = g.value(x).cols();
    if in_dim != spec.input_dim() {
        return Err(Error::shape(
            format!("input width {}", spec.input_dim()),
            format!("{in_dim}"),
        ));
    }
    let mut h = x;
    for layer in 0..spec.num_layers() {
        let w = g.param(params, params.require(&format!("{prefix}.w{layer}"))?)?;
        let b = g.param(params, params.require(&format!("{prefix}.b{layer}"))?)?;
        let lin = g.matmul(h, w)?;
        let lin = g.add_bias(lin, b)?;
        h = if layer + 1 < spec.num_layers() {
            match spec.activation {
                Activation::Tanh => g.tanh(lin)?,
                Activation::Relu => g.relu(lin)?,
            }
        } else {
            lin
        };
    }
    Ok(h)
}

/// Tape-free forward pass for inference over frozen parameters.
pub fn mlp_forward_values(
    params: &ParamSet,
    prefix: &str,
    spec: &MlpSpec,
    x: &Tensor,
) -> Result<Tensor> {
    if x.cols() != spec.input_dim() {
        return Err(Error::shape(
            format!("input width {}", spec.input_dim()),
            format!("{}", x.cols()),
        ));
    }
    let n = x.rows();
    let mut h = x.data().to_vec();
    let mut h_cols = x.cols();
    for layer in 0..spec.num_layers() {
        let w = params.value(params.require(&format!("{prefix}.w{layer}"))?);
        let b = params.value(params.require(&format!("{prefix}.b{layer}"))?);
        let out_cols = spec.widths[layer + 1];
        let mut out = vec![0.0; n * out_cols];
        for i in 0..n {
            let row = &h[i * h_cols..(i + 1) * h_cols];
            let orow = &mut out[i * out_cols..(i + 1) * out_cols];
            orow.copy_from_slice(b.data());
            for (l, &hv) in row.iter().enumerate() {
                if hv == 0.0 {
                    continue;
                }
                let wrow = &w.data()[l * out_cols..(l + 1) * out_cols];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += hv * wv;
                }
            }
        }
        if layer + 1 < spec.num_layers() {
            match spec.activation {
                Activation::Tanh => out.iter_mut().for_each(|v| *v = v.tanh()),
                Activation::Relu => out.iter_mut().for_each(|v| *v = v.max(0.0)),
            }
        }
        h = out;
        h_cols = out_cols;
    }
    let out = Tensor::from_vec(&[n, h_cols], h)?;
    if !out.all_finite() {
        return Err(Error::numeric("mlp forward produced non-finite values"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_maps_to_zero() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Tanh).unwrap();
        let mut params = ParamSet::new();
        // add_mlp then zero everything
        let mut rng = Rng::new(0);
        params.add_mlp("net", &spec, &mut rng);
        for id in 0..params.len() {
            params.value_mut(id).fill(0.0);
        }
        let x = Tensor::from_vec(&[2, 3], vec![1., 2., 3., -1., 0., 4.]).unwrap();
        let y = mlp_forward_values(&params, "net", &spec, &x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_linear_layer() {
        let spec = MlpSpec::new(vec![3, 3], Activation::Tanh).unwrap();
        let mut params = ParamSet::new();
        let mut rng = Rng::new(0);
        params.add_mlp("net", &spec, &mut rng);
        let w = params.value_mut(params.id("net.w0").unwrap());
        w.fill(0.0);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_vec(&[1, 3], vec![0.5, -0.25, 2.0]).unwrap();
        let y = mlp_forward_values(&params, "net", &spec, &x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn tape_and_value_forward_agree() {
        let spec = MlpSpec::new(vec![4, 8, 3], Activation::Tanh).unwrap();
        let mut params = ParamSet::new();
        let mut rng = Rng::new(3);
        params.add_mlp("net", &spec, &mut rng);
        let x = Tensor::from_vec(&[5, 4], (0..20).map(|i| (i as f64) * 0.1 - 1.0).collect()).unwrap();
        let fast = mlp_forward_values(&params, "net", &spec, &x).unwrap();
        let mut g = Graph::new();
        let xv = g.constant(x).unwrap();
        let y = mlp_forward(&mut g, &params, "net", &spec, xv).unwrap();
        let taped = g.value(y);
        for (a, b) in fast.data().iter().zip(taped.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let spec = MlpSpec::new(vec![4, 2], Activation::Relu).unwrap();
        let mut params = ParamSet::new();
        let mut rng = Rng::new(3);
        params.add_mlp("net", &spec, &mut rng);
        let x = Tensor::from_vec(&[1, 3], vec![0.0; 3]).unwrap();
        assert!(mlp_forward_values(&params, "net", &spec, &x).is_err());
    }

    #[test]
    fn seeded_init_reproducible() {
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Tanh).unwrap();
        let build = || {
            let mut p = ParamSet::new();
            let mut rng = Rng::new(77);
            p.add_mlp("net", &spec, &mut rng);
            p
        };
        let (a, b) = (build(), build());
        for id in 0..a.len() {
            assert_eq!(a.value(id), b.value(id));
        }
    }
}
