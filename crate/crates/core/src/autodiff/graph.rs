//! Reverse-mode tape over dense tensors.
//!
//! A `Graph` records every forward op; `backward` walks the tape in reverse
//! accumulating vector-Jacobian products. Parameter nodes remember their
//! `ParamSet` slot so gradients can be drained back after the pass. Any op
//! that produces a non-finite value surfaces an error instead of silently
//! propagating NaN.

use crate::autodiff::mlp::ParamSet;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type Vjp = Box<dyn Fn(&Tensor) -> Tensor>;

struct ParentEdge {
    parent: usize,
    vjp: Vjp,
}

struct Node {
    value: Tensor,
    parents: Vec<ParentEdge>,
    param: Option<usize>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn matmul_raw(a: &[f64], n: usize, k: usize, b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (l, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[l * m..(l + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a[i * m + j];
        }
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Tensor, parents: Vec<ParentEdge>, param: Option<usize>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::numeric(
                "op produced a non-finite value".to_string(),
            ));
        }
        let idx = self.nodes.len();
        self.nodes.push(Node {
            value,
            parents,
            param,
        });
        self.grads.push(None);
        Ok(Var(idx))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Constant leaf: no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Vec::new(), None)
    }

    /// Parameter leaf bound to a `ParamSet` slot. The current value is
    /// cloned onto the tape, so later parameter mutation cannot corrupt it.
    pub fn param(&mut self, params: &ParamSet, id: usize) -> Result<Var> {
        self.push(params.value(id).clone(), Vec::new(), Some(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::shape(
                "matmul [n,k]x[k,m]".to_string(),
                format!("{:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let (n, k, m) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let out = Tensor::from_vec(&[n, m], matmul_raw(av.data(), n, k, bv.data(), m))?;
        let a_data = av.clone();
        let b_data = bv.clone();
        let b_for_a = b_data.clone();
        let edges = vec![
            ParentEdge {
                parent: a.0,
                // dA = up @ B^T
                vjp: Box::new(move |up: &Tensor| {
                    let bt = transpose_raw(b_for_a.data(), k, m);
                    Tensor::from_vec(&[n, k], matmul_raw(up.data(), n, m, &bt, k)).unwrap()
                }),
            },
            ParentEdge {
                parent: b.0,
                // dB = A^T @ up
                vjp: Box::new(move |up: &Tensor| {
                    let at = transpose_raw(a_data.data(), n, k);
                    Tensor::from_vec(&[k, m], matmul_raw(&at, k, n, up.data(), m)).unwrap()
                }),
            },
        ];
        self.push(out, edges, None)
    }

    fn elementwise_binary(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        vjp_a: impl Fn(f64, f64) -> f64 + 'static,
        vjp_b: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                format!("{:?}", av.shape()),
                format!("{:?}", bv.shape()),
            ));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::from_vec(av.shape(), data)?;
        let (ac, bc) = (av.clone(), bv.clone());
        let (ac2, bc2) = (ac.clone(), bc.clone());
        let edges = vec![
            ParentEdge {
                parent: a.0,
                vjp: Box::new(move |up: &Tensor| {
                    let data = up
                        .data()
                        .iter()
                        .zip(ac.data().iter().zip(bc.data()))
                        .map(|(&u, (&x, &y))| u * vjp_a(x, y))
                        .collect();
                    Tensor::from_vec(up.shape(), data).unwrap()
                }),
            },
            ParentEdge {
                parent: b.0,
                vjp: Box::new(move |up: &Tensor| {
                    let data = up
                        .data()
                        .iter()
                        .zip(ac2.data().iter().zip(bc2.data()))
                        .map(|(&u, (&x, &y))| u * vjp_b(x, y))
                        .collect();
                    Tensor::from_vec(up.shape(), data).unwrap()
                }),
            },
        ];
        self.push(out, edges, None)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_binary(a, b, |x, y| x + y, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_binary(a, b, |x, y| x - y, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_binary(a, b, |x, y| x * y, |_, y| y, |x, _| x)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let data = av.data().iter().map(|&x| c * x).collect();
        let out = Tensor::from_vec(av.shape(), data)?;
        let edges = vec![ParentEdge {
            parent: a.0,
            vjp: Box::new(move |up: &Tensor| {
                let data = up.data().iter().map(|&u| c * u).collect();
                Tensor::from_vec(up.shape(), data).unwrap()
            }),
        }];
        self.push(out, edges, None)
    }

    /// x + b with b broadcast over rows: x is [n, m], b is [m].
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (&self.nodes[x.0].value, &self.nodes[b.0].value);
        let (n, m) = (xv.rows(), xv.cols());
        if bv.len() != m {
            return Err(Error::shape(format!("bias[{m}]"), format!("{:?}", bv.shape())));
        }
        let mut data = xv.data().to_vec();
        for i in 0..n {
            for j in 0..m {
                data[i * m + j] += bv.data()[j];
            }
        }
        let out = Tensor::from_vec(xv.shape(), data)?;
        let bshape = bv.shape().to_vec();
        let edges = vec![
            ParentEdge {
                parent: x.0,
                vjp: Box::new(|up: &Tensor| up.clone()),
            },
            ParentEdge {
                parent: b.0,
                vjp: Box::new(move |up: &Tensor| {
                    let m = up.cols();
                    let mut acc = vec![0.0; m];
                    for i in 0..up.rows() {
                        for j in 0..m {
                            acc[j] += up.data()[i * m + j];
                        }
                    }
                    Tensor::from_vec(&bshape, acc).unwrap()
                }),
            },
        ];
        self.push(out, edges, None)
    }

    /// x * v with v broadcast over rows: x is [n, m], v is [m].
    pub fn mul_row(&mut self, x: Var, v: Var) -> Result<Var> {
        let (xv, vv) = (&self.nodes[x.0].value, &self.nodes[v.0].value);
        let (n, m) = (xv.rows(), xv.cols());
        if vv.len() != m {
            return Err(Error::shape(format!("row[{m}]"), format!("{:?}", vv.shape())));
        }
        let mut data = xv.data().to_vec();
        for i in 0..n {
            for j in 0..m {
                data[i * m + j] *= vv.data()[j];
            }
        }
        let out = Tensor::from_vec(xv.shape(), data)?;
        let xc = xv.clone();
        let vc = vv.clone();
        let vshape = vv.shape().to_vec();
        let edges = vec![
            ParentEdge {
                parent: x.0,
                vjp: Box::new(move |up: &Tensor| {
                    let m = up.cols();
                    let mut data = up.data().to_vec();
                    for i in 0..up.rows() {
                        for j in 0..m {
                            data[i * m + j] *= vc.data()[j];
                        }
                    }
                    Tensor::from_vec(up.shape(), data).unwrap()
                }),
            },
            ParentEdge {
                parent: v.0,
                vjp: Box::new(move |up: &Tensor| {
                    let m = up.cols();
                    let mut acc = vec![0.0; m];
                    for i in 0..up.rows() {
                        for j in 0..m {
                            acc[j] += up.data()[i * m + j] * xc.data()[i * m + j];
                        }
                    }
                    Tensor::from_vec(&vshape, acc).unwrap()
                }),
            },
        ];
        self.push(out, edges, None)
    }

    fn elementwise_unary(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        df_from_out: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let data: Vec<f64> = av.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::from_vec(av.shape(), data)?;
        let inputs = av.clone();
        let outputs = out.clone();
        let edges = vec![ParentEdge {
            parent: a.0,
            vjp: Box::new(move |up: &Tensor| {
                let data = up
                    .data()
                    .iter()
                    .zip(inputs.data().iter().zip(outputs.data()))
                    .map(|(&u, (&x, &y))| u * df_from_out(x, y))
                    .collect();
                Tensor::from_vec(up.shape(), data).unwrap()
            }),
        }];
        self.push(out, edges, None)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.elementwise_unary(a, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.elementwise_unary(a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.elementwise_unary(a, f64::exp, |_, y| y)
    }

    /// Concatenate along the last (column) axis; all inputs share the row
    /// count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("at least one input".to_string(), "0".to_string()));
        }
        let n = self.nodes[parts[0].0].value.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = &self.nodes[p.0].value;
            if v.rows() != n {
                return Err(Error::shape(format!("{n} rows"), format!("{}", v.rows())));
            }
            widths.push(v.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; n * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let v = &self.nodes[p.0].value;
            for i in 0..n {
                data[i * total + offset..i * total + offset + w].copy_from_slice(v.row(i));
            }
            offset += w;
        }
        let out = Tensor::from_vec(&[n, total], data)?;
        let mut edges = Vec::with_capacity(parts.len());
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let start = offset;
            edges.push(ParentEdge {
                parent: p.0,
                vjp: Box::new(move |up: &Tensor| {
                    let total = up.cols();
                    let n = up.rows();
                    let mut data = vec![0.0; n * w];
                    for i in 0..n {
                        data[i * w..(i + 1) * w]
                            .copy_from_slice(&up.data()[i * total + start..i * total + start + w]);
                    }
                    Tensor::from_vec(&[n, w], data).unwrap()
                }),
            });
            offset += w;
        }
        self.push(out, edges, None)
    }

    /// Metadata-only reshape.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let out = av.reshaped(shape)?;
        let old_shape = av.shape().to_vec();
        let edges = vec![ParentEdge {
            parent: a.0,
            vjp: Box::new(move |up: &Tensor| up.reshaped(&old_shape).unwrap()),
        }];
        self.push(out, edges, None)
    }

    /// Gather rows of `table` ([r, d]) at the given indices -> [len, d].
    /// Backward scatter-adds into the gathered rows.
    pub fn gather_rows(&mut self, table: Var, rows: Vec<usize>) -> Result<Var> {
        let tv = &self.nodes[table.0].value;
        if tv.shape().len() != 2 {
            return Err(Error::shape("rank-2 table".to_string(), format!("{:?}", tv.shape())));
        }
        let (r, d) = (tv.shape()[0], tv.shape()[1]);
        if rows.iter().any(|&i| i >= r) {
            return Err(Error::shape(format!("row < {r}"), "out-of-range gather".to_string()));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for &i in &rows {
            data.extend_from_slice(tv.row(i));
        }
        let out = Tensor::from_vec(&[rows.len(), d], data)?;
        let table_shape = tv.shape().to_vec();
        let edges = vec![ParentEdge {
            parent: table.0,
            vjp: Box::new(move |up: &Tensor| {
                let mut grad = Tensor::zeros(&table_shape);
                let d = table_shape[1];
                for (k, &i) in rows.iter().enumerate() {
                    let dst = &mut grad.data_mut()[i * d..(i + 1) * d];
                    for (g, &u) in dst.iter_mut().zip(&up.data()[k * d..(k + 1) * d]) {
                        *g += u;
                    }
                }
                grad
            }),
        }];
        self.push(out, edges, None)
    }

    /// Straight-through node: the forward value is `values`, the backward
    /// pass copies the upstream gradient into `e` unchanged.
    pub fn straight_through(&mut self, e: Var, values: Tensor) -> Result<Var> {
        let ev = &self.nodes[e.0].value;
        if ev.shape() != values.shape() {
            return Err(Error::shape(
                format!("{:?}", ev.shape()),
                format!("{:?}", values.shape()),
            ));
        }
        let edges = vec![ParentEdge {
            parent: e.0,
            vjp: Box::new(|up: &Tensor| up.clone()),
        }];
        self.push(values, edges, None)
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let total: f64 = av.data().iter().sum();
        let shape = av.shape().to_vec();
        let edges = vec![ParentEdge {
            parent: a.0,
            vjp: Box::new(move |up: &Tensor| {
                let mut g = Tensor::zeros(&shape);
                g.fill(up.item());
                g
            }),
        }];
        self.push(Tensor::scalar(total), edges, None)
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.nodes[a.0].value.len() as f64;
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Sum of squares -> scalar.
    pub fn sum_sq(&mut self, a: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let total: f64 = av.data().iter().map(|v| v * v).sum();
        let ac = av.clone();
        let edges = vec![ParentEdge {
            parent: a.0,
            vjp: Box::new(move |up: &Tensor| {
                let u = up.item();
                let data = ac.data().iter().map(|&x| 2.0 * u * x).collect();
                Tensor::from_vec(ac.shape(), data).unwrap()
            }),
        }];
        self.push(Tensor::scalar(total), edges, None)
    }

    /// Numerically stable ln(mean(exp(x))) over all entries.
    pub fn ln_mean_exp(&mut self, a: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let max = av.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = av.data().iter().map(|&x| (x - max).exp()).sum();
        let n = av.len() as f64;
        let value = max + (sum_exp / n).ln();
        // d/dx_i = exp(x_i - max) / sum_exp  (softmax weights)
        let weights: Vec<f64> = av.data().iter().map(|&x| (x - max).exp() / sum_exp).collect();
        let shape = av.shape().to_vec();
        let edges = vec![ParentEdge {
            parent: a.0,
            vjp: Box::new(move |up: &Tensor| {
                let u = up.item();
                let data = weights.iter().map(|&w| u * w).collect();
                Tensor::from_vec(&shape, data).unwrap()
            }),
        }];
        self.push(Tensor::scalar(value), edges, None)
    }

    /// Reverse pass from a scalar loss. Gradients land on the tape; drain
    /// parameter gradients with [`Graph::accumulate_param_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape(
                "scalar loss".to_string(),
                format!("{:?}", self.nodes[loss.0].value.shape()),
            ));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(up) = self.grads[idx].take() else {
                continue;
            };
            if !up.all_finite() {
                return Err(Error::numeric(format!(
                    "non-finite gradient at node {idx}"
                )));
            }
            for edge in &self.nodes[idx].parents {
                let contrib = (edge.vjp)(&up);
                match &mut self.grads[edge.parent] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            self.grads[idx] = Some(up);
        }
        Ok(())
    }

    /// Gradient of the last backward pass with respect to a node, if any
    /// gradient reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Add every parameter node's gradient into its `ParamSet` accumulator.
    pub fn accumulate_param_grads(&self, params: &mut ParamSet) -> Result<()> {
        for (node, grad) in self.nodes.iter().zip(&self.grads) {
            if let (Some(id), Some(g)) = (node.param, grad.as_ref()) {
                params.grad_mut(id).add_assign(g);
            }
        }
        Ok(())
    }
}
