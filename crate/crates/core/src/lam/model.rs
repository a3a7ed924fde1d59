//! The latent action model: encoder, vector quantizer, decoder, and the
//! self/cross-viewpoint reconstruction objectives.
//!
//! Gradient contract of the quantizer:
//!   - the decoder path sees the quantized embedding through a
//!     straight-through node, so d(loss)/d(e) equals d(loss)/d(z) exactly;
//!   - the quantization term |sg(e) - z|^2 updates only codebook entries;
//!   - the commitment term beta * |e - sg(z)|^2 updates only the encoder.
//! The decoder input is (o_t, z) and never includes a viewpoint identity.

use crate::autodiff::graph::{Graph, Var};
use crate::autodiff::mlp::{mlp_forward, mlp_forward_values, Activation, MlpSpec, ParamSet};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::lam::codebook::{Codebook, LatentCode};
use crate::rng::Rng;

/// Model geometry. Desk-scale defaults: D_obs 64, L=4 tokens, K=16 codes,
/// d=16 per token.
#[derive(Debug, Clone, PartialEq)]
pub struct LamDims {
    pub d_obs: usize,
    pub codebook: Codebook,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
}

impl LamDims {
    pub fn desk_default(d_obs: usize) -> Self {
        LamDims {
            d_obs,
            codebook: Codebook::new(16, 4, 16).unwrap(),
            enc_hidden: vec![96],
            dec_hidden: vec![96],
        }
    }

    pub fn enc_spec(&self) -> Result<MlpSpec> {
        let mut widths = vec![2 * self.d_obs];
        widths.extend(&self.enc_hidden);
        widths.push(self.codebook.latent_dim());
        MlpSpec::new(widths, Activation::Tanh)
    }

    pub fn dec_spec(&self) -> Result<MlpSpec> {
        let mut widths = vec![self.d_obs + self.codebook.latent_dim()];
        widths.extend(&self.dec_hidden);
        widths.push(self.d_obs);
        MlpSpec::new(widths, Activation::Tanh)
    }
}

pub const CODEBOOK_PARAM: &str = "codebook";

/// Encoder/decoder parameter sets plus the codebook, with the commitment
/// weight beta (default 0.25).
#[derive(Debug, Clone)]
pub struct LamModel {
    pub dims: LamDims,
    pub beta: f64,
    pub params: ParamSet,
    pub init_seed: u64,
    enc_spec: MlpSpec,
    dec_spec: MlpSpec,
    codebook_id: usize,
}

/// One view's batch: row-aligned (o_t, o_next) matrices.
#[derive(Debug, Clone)]
pub struct BatchViews {
    pub o_t: Tensor,
    pub o_next: Tensor,
}

/// Tape handles for one loss evaluation; all loss components are per-sample
/// scalars (sums over views and feature dims, mean over the batch).
pub struct LossVars {
    pub total: Var,
    pub l_self: Var,
    pub l_cross: Option<Var>,
    pub l_quant: Var,
    pub l_commit: Var,
    /// Per-view continuous latents e.
    pub e_vars: Vec<Var>,
    /// Per-view straight-through outputs (the decoder-side z).
    pub st_vars: Vec<Var>,
    /// Per-view, per-sample chosen code indices.
    pub indices: Vec<Vec<Vec<usize>>>,
}

/// Per-view quantizer pin for gradient checking: the code selection and all
/// stop-gradient constants frozen at a base point, which makes the pinned
/// loss a smooth function of the parameters whose exact gradient is the tape
/// gradient of the real loss at that point.
#[derive(Debug, Clone)]
pub struct QuantPin {
    pub indices: Vec<Vec<usize>>,
    /// z - e at the pin point (straight-through forward offset).
    pub offset: Tensor,
    /// e at the pin point (the sg(e) constant in the quantization term).
    pub e_pinned: Tensor,
    /// z at the pin point (the sg(z) constant in the commitment term).
    pub z_pinned: Tensor,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub l_self: f64,
    pub l_cross: f64,
    pub l_quant: f64,
    pub l_commit: f64,
}

impl LamModel {
    pub fn new(dims: LamDims, beta: f64, seed: u64) -> Result<Self> {
        let enc_spec = dims.enc_spec()?;
        let dec_spec = dims.dec_spec()?;
        let mut params = ParamSet::new();
        let mut rng = Rng::stream(seed, 0x1a11);
        params.add_mlp("enc", &enc_spec, &mut rng);
        params.add_mlp("dec", &dec_spec, &mut rng);
        let cb = &dims.codebook;
        let bound = 1.0 / (cb.code_dim as f64).sqrt();
        let mut table = Tensor::zeros(&[cb.table_rows(), cb.code_dim]);
        for v in table.data_mut() {
            *v = rng.range_f64(-bound, bound);
        }
        let codebook_id = params.insert(CODEBOOK_PARAM, table);
        Ok(LamModel {
            dims,
            beta,
            params,
            init_seed: seed,
            enc_spec,
            dec_spec,
            codebook_id,
        })
    }

    pub fn codebook_table(&self) -> &Tensor {
        self.params.value(self.codebook_id)
    }

    pub fn enc_spec(&self) -> &MlpSpec {
        &self.enc_spec
    }

    pub fn dec_spec(&self) -> &MlpSpec {
        &self.dec_spec
    }

    fn concat_pair(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.rows() != b.rows() {
            return Err(Error::shape(
                format!("{} rows", a.rows()),
                format!("{}", b.rows()),
            ));
        }
        let (n, wa, wb) = (a.rows(), a.cols(), b.cols());
        let mut data = Vec::with_capacity(n * (wa + wb));
        for i in 0..n {
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(i));
        }
        Tensor::from_vec(&[n, wa + wb], data)
    }

    /// Continuous latent e = E(o_t, o_next) without a tape.
    pub fn encode_batch(&self, o_t: &Tensor, o_next: &Tensor) -> Result<Tensor> {
        let x = Self::concat_pair(o_t, o_next)?;
        mlp_forward_values(&self.params, "enc", &self.enc_spec, &x)
    }

    /// Single-sample encode.
    pub fn encode(&self, o_t: &[f64], o_next: &[f64]) -> Result<Vec<f64>> {
        let o_t = Tensor::from_vec(&[1, o_t.len()], o_t.to_vec())?;
        let o_next = Tensor::from_vec(&[1, o_next.len()], o_next.to_vec())?;
        Ok(self.encode_batch(&o_t, &o_next)?.into_data())
    }

    /// Quantize a continuous latent against the current codebook.
    pub fn quantize(&self, e: &[f64]) -> Result<(LatentCode, f64, f64)> {
        self.dims
            .codebook
            .quantize_one(self.codebook_table(), e, self.beta)
    }

    /// Predicted next observation D(o_t, z) without a tape. The decoder
    /// accepts any latent of the right width; which view produced it is
    /// invisible by construction.
    pub fn decode_batch(&self, o_t: &Tensor, z: &Tensor) -> Result<Tensor> {
        let x = Self::concat_pair(o_t, z)?;
        mlp_forward_values(&self.params, "dec", &self.dec_spec, &x)
    }

    pub fn decode(&self, o_t: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let o_t = Tensor::from_vec(&[1, o_t.len()], o_t.to_vec())?;
        let z = Tensor::from_vec(&[1, z.len()], z.to_vec())?;
        Ok(self.decode_batch(&o_t, &z)?.into_data())
    }

    /// Encode + quantize one observation pair into a latent action.
    pub fn infer_code(&self, o_t: &[f64], o_next: &[f64]) -> Result<LatentCode> {
        let e = self.encode(o_t, o_next)?;
        Ok(self.quantize(&e)?.0)
    }

    fn check_views(&self, views: &[BatchViews]) -> Result<usize> {
        if views.is_empty() {
            return Err(Error::data("loss needs at least one view"));
        }
        let b = views[0].o_t.rows();
        for v in views {
            if v.o_t.rows() != b || v.o_next.rows() != b {
                return Err(Error::shape(format!("{b} rows"), "ragged views".to_string()));
            }
            if v.o_t.cols() != self.dims.d_obs || v.o_next.cols() != self.dims.d_obs {
                return Err(Error::shape(
                    format!("d_obs {}", self.dims.d_obs),
                    format!("{}x{}", v.o_t.cols(), v.o_next.cols()),
                ));
            }
        }
        Ok(b)
    }

    /// Build the full objective on a fresh tape:
    /// reconstruction (self, plus cross when `include_cross`), quantization,
    /// and commitment terms, per the gradient contract in the module docs.
    pub fn loss_graph(
        &self,
        params: &ParamSet,
        views: &[BatchViews],
        include_cross: bool,
    ) -> Result<(Graph, LossVars)> {
        let b = self.check_views(views)?;
        if include_cross && views.len() < 2 {
            return Err(Error::data(
                "cross-view loss requires >= 2 synchronized views per record",
            ));
        }
        let cb = &self.dims.codebook;
        let mut g = Graph::new();
        let codebook_var = g.param(params, self.codebook_id)?;
        let table = params.value(self.codebook_id).clone();

        let mut e_vars = Vec::with_capacity(views.len());
        let mut st_vars = Vec::with_capacity(views.len());
        let mut all_indices = Vec::with_capacity(views.len());
        let mut o_t_vars = Vec::with_capacity(views.len());
        let mut o_next_vals = Vec::with_capacity(views.len());

        let mut quant_sum: Option<Var> = None;
        let mut commit_sum: Option<Var> = None;

        for view in views {
            let o_t = g.constant(view.o_t.clone())?;
            let o_next_c = g.constant(view.o_next.clone())?;
            let x = g.concat_cols(&[o_t, o_next_c])?;
            let e = mlp_forward(&mut g, params, "enc", &self.enc_spec, x)?;
            let e_vals = g.value(e).clone();
            let (indices, z_embed) = cb.quantize_batch(&table, &e_vals)?;

            // Decoder-side latent: straight-through to the encoder.
            let st = g.straight_through(e, z_embed.clone())?;

            // Quantization: pulls codebook rows toward sg(e).
            let rows = cb.flat_rows(&indices);
            let gathered = g.gather_rows(codebook_var, rows)?;
            let zq = g.reshape(gathered, &[b, cb.latent_dim()])?;
            let e_const = g.constant(e_vals)?;
            let dq = g.sub(zq, e_const)?;
            let lq = g.sum_sq(dq)?;
            quant_sum = Some(match quant_sum {
                Some(acc) => g.add(acc, lq)?,
                None => lq,
            });

            // Commitment: pulls the encoder toward sg(z).
            let z_const = g.constant(z_embed)?;
            let dc = g.sub(e, z_const)?;
            let lc = g.sum_sq(dc)?;
            commit_sum = Some(match commit_sum {
                Some(acc) => g.add(acc, lc)?,
                None => lc,
            });

            e_vars.push(e);
            st_vars.push(st);
            all_indices.push(indices);
            o_t_vars.push(o_t);
            o_next_vals.push(o_next_c);
        }

        // Self-viewpoint reconstruction.
        let mut self_sum: Option<Var> = None;
        for v in 0..views.len() {
            let dec_in = g.concat_cols(&[o_t_vars[v], st_vars[v]])?;
            let recon = mlp_forward(&mut g, params, "dec", &self.dec_spec, dec_in)?;
            let diff = g.sub(o_next_vals[v], recon)?;
            let l = g.sum_sq(diff)?;
            self_sum = Some(match self_sum {
                Some(acc) => g.add(acc, l)?,
                None => l,
            });
        }
        let l_self = self_sum.expect("at least one view");

        // Cross-viewpoint reconstruction over ordered pairs v != v~.
        let l_cross = if include_cross {
            let mut acc: Option<Var> = None;
            for v in 0..views.len() {
                for v_src in 0..views.len() {
                    if v == v_src {
                        continue;
                    }
                    let dec_in = g.concat_cols(&[o_t_vars[v], st_vars[v_src]])?;
                    let recon = mlp_forward(&mut g, params, "dec", &self.dec_spec, dec_in)?;
                    let diff = g.sub(o_next_vals[v], recon)?;
                    let l = g.sum_sq(diff)?;
                    acc = Some(match acc {
                        Some(a) => g.add(a, l)?,
                        None => l,
                    });
                }
            }
            acc
        } else {
            None
        };

        let l_quant = quant_sum.expect("at least one view");
        let l_commit_raw = commit_sum.expect("at least one view");
        let l_commit = g.scale(l_commit_raw, self.beta)?;

        let mut total = g.add(l_self, l_quant)?;
        total = g.add(total, l_commit)?;
        if let Some(lc) = l_cross {
            total = g.add(total, lc)?;
        }
        // Mean over the batch so magnitudes are batch-size invariant.
        let inv_b = 1.0 / b as f64;
        let total = g.scale(total, inv_b)?;
        let l_self = g.scale(l_self, inv_b)?;
        let l_cross = match l_cross {
            Some(lc) => Some(g.scale(lc, inv_b)?),
            None => None,
        };
        let l_quant = g.scale(l_quant, inv_b)?;
        let l_commit = g.scale(l_commit, inv_b)?;

        Ok((
            g,
            LossVars {
                total,
                l_self,
                l_cross,
                l_quant,
                l_commit,
                e_vars,
                st_vars,
                indices: all_indices,
            },
        ))
    }

    pub fn breakdown(&self, g: &Graph, vars: &LossVars) -> LossBreakdown {
        LossBreakdown {
            total: g.value(vars.total).item(),
            l_self: g.value(vars.l_self).item(),
            l_cross: vars.l_cross.map(|v| g.value(v).item()).unwrap_or(0.0),
            l_quant: g.value(vars.l_quant).item(),
            l_commit: g.value(vars.l_commit).item(),
        }
    }

    /// Single-view VQ-VAE objective (reconstruction + quantizer terms).
    pub fn loss_vqvae(&self, params: &ParamSet, batch: &BatchViews) -> Result<(Graph, LossVars)> {
        self.loss_graph(params, std::slice::from_ref(batch), false)
    }

    /// Capture the quantizer state at the current parameters for pinned
    /// gradient checking.
    pub fn pin_quantizer(&self, params: &ParamSet, views: &[BatchViews]) -> Result<Vec<QuantPin>> {
        let b = self.check_views(views)?;
        let cb = &self.dims.codebook;
        let table = params.value(self.codebook_id);
        let mut pins = Vec::with_capacity(views.len());
        for view in views {
            let x = Self::concat_pair(&view.o_t, &view.o_next)?;
            let e = mlp_forward_values(params, "enc", &self.enc_spec, &x)?;
            let (indices, z) = cb.quantize_batch(table, &e)?;
            let mut offset = z.clone();
            for (o, ev) in offset.data_mut().iter_mut().zip(e.data()) {
                *o -= ev;
            }
            debug_assert_eq!(offset.rows(), b);
            pins.push(QuantPin {
                indices,
                offset,
                e_pinned: e,
                z_pinned: z,
            });
        }
        Ok(pins)
    }

    /// The objective with the quantizer pinned: code selections and all
    /// stop-gradient constants are frozen at the pin point, which makes this
    /// a smooth function of the parameters suitable for finite differencing.
    /// At the pin point its value and exact gradient coincide with the real
    /// objective's value and tape gradient.
    pub fn loss_pinned_value(
        &self,
        params: &ParamSet,
        views: &[BatchViews],
        include_cross: bool,
        pins: &[QuantPin],
    ) -> Result<f64> {
        let b = self.check_views(views)?;
        if pins.len() != views.len() {
            return Err(Error::data("one quantizer pin per view required"));
        }
        let cb = &self.dims.codebook;
        let table = params.value(self.codebook_id);

        let mut total = 0.0;
        let mut st_values = Vec::with_capacity(views.len());
        for (view, pin) in views.iter().zip(pins) {
            let x = Self::concat_pair(&view.o_t, &view.o_next)?;
            let e = mlp_forward_values(params, "enc", &self.enc_spec, &x)?;

            // Straight-through surrogate: st = e + (z - e)_pinned.
            let mut st = e.clone();
            for (s, o) in st.data_mut().iter_mut().zip(pin.offset.data()) {
                *s += o;
            }
            st_values.push(st);

            // Quantization term against the pinned sg(e).
            for (r, idx) in pin.indices.iter().enumerate() {
                let e_row = pin.e_pinned.row(r);
                let z_row = cb.embed(table, idx);
                total += e_row
                    .iter()
                    .zip(&z_row)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>();
            }

            // Commitment term against the pinned sg(z).
            let commit: f64 = e
                .data()
                .iter()
                .zip(pin.z_pinned.data())
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            total += self.beta * commit;
        }

        for v in 0..views.len() {
            let recon = self.decode_with(params, &views[v].o_t, &st_values[v])?;
            total += sq_diff(&views[v].o_next, &recon);
            if include_cross {
                for v_src in 0..views.len() {
                    if v_src == v {
                        continue;
                    }
                    let recon = self.decode_with(params, &views[v].o_t, &st_values[v_src])?;
                    total += sq_diff(&views[v].o_next, &recon);
                }
            }
        }
        Ok(total / b as f64)
    }

    fn decode_with(&self, params: &ParamSet, o_t: &Tensor, z: &Tensor) -> Result<Tensor> {
        let x = Self::concat_pair(o_t, z)?;
        mlp_forward_values(params, "dec", &self.dec_spec, &x)
    }
}

fn sq_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}
