//! Training loop, latent extraction, and checkpoint IO for the LAM.

use std::collections::VecDeque;
use std::path::Path;

use crate::autodiff::adamw::{optimizer_step, AdamConfig, AdamState};
use crate::autodiff::tensor::Tensor;
use crate::autodiff::{read_params, write_params};
use crate::error::{Error, Result};
use crate::io::Manifest;
use crate::lam::codebook::{Codebook, LatentCode};
use crate::lam::model::{BatchViews, LamDims, LamModel, LossBreakdown};
use crate::rng::Rng;
use crate::worldgen::dataset::{HiddenSet, ObservationSet};
use crate::worldgen::state::{Source, WorldState};

/// Training regime. Single-view trains the plain VQ-VAE objective on one
/// declared view; the multi-view modes require a dataset with >= 2 views and
/// differ only in whether the cross-view term is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    SingleView,
    MultiViewSelfOnly,
    Mvp,
}

impl TrainMode {
    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::SingleView => "single_view",
            TrainMode::MultiViewSelfOnly => "multi_view_self_only",
            TrainMode::Mvp => "mvp",
        }
    }

    pub fn parse(s: &str) -> Result<TrainMode> {
        match s {
            "single_view" => Ok(TrainMode::SingleView),
            "multi_view_self_only" => Ok(TrainMode::MultiViewSelfOnly),
            "mvp" => Ok(TrainMode::Mvp),
            other => Err(Error::config(format!(
                "unknown mode `{other}` (expected single_view | multi_view_self_only | mvp)"
            ))),
        }
    }

    pub fn include_cross(&self) -> bool {
        matches!(self, TrainMode::Mvp)
    }

    pub fn multi_view(&self) -> bool {
        !matches!(self, TrainMode::SingleView)
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// View consumed in single-view mode.
    pub view_index: usize,
    pub log_every: usize,
    /// Collapse guard: warn when one code covers more than this fraction of
    /// recent usage in any sub-book.
    pub collapse_threshold: f64,
    /// Number of recent samples in the usage window.
    pub collapse_window: usize,
    /// Steps before the collapse guard starts checking.
    pub collapse_warmup: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Mvp,
            lr: 2e-3,
            weight_decay: 1e-4,
            grad_clip: 1.0,
            batch_size: 64,
            steps: 1500,
            seed: 0,
            view_index: 0,
            log_every: 25,
            collapse_threshold: 0.95,
            collapse_window: 1000,
            collapse_warmup: 400,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossRow {
    pub step: usize,
    pub l_self: f64,
    pub l_cross: f64,
    pub l_quant: f64,
    pub l_commit: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub history: Vec<LossRow>,
    pub collapse_warnings: Vec<String>,
}

impl TrainReport {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,l_recon_self,l_cross,l_quant,l_commit,total\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step, r.l_self, r.l_cross, r.l_quant, r.l_commit, r.total
            ));
        }
        out
    }
}

fn mode_views(model: &LamModel, data: &ObservationSet, cfg: &TrainConfig) -> Result<Vec<usize>> {
    if data.d_obs() != model.dims.d_obs {
        return Err(Error::data(format!(
            "dataset d_obs {} does not match model {}",
            data.d_obs(),
            model.dims.d_obs
        )));
    }
    match cfg.mode {
        TrainMode::SingleView => {
            if cfg.view_index >= data.num_views() {
                return Err(Error::config(format!(
                    "view_index {} out of range for {} views",
                    cfg.view_index,
                    data.num_views()
                )));
            }
            Ok(vec![cfg.view_index])
        }
        TrainMode::MultiViewSelfOnly | TrainMode::Mvp => {
            if data.num_views() < 2 {
                return Err(Error::data(format!(
                    "mode {} requires a multi-view dataset (>= 2 views), got {}",
                    cfg.mode.name(),
                    data.num_views()
                )));
            }
            Ok((0..data.num_views()).collect())
        }
    }
}

fn assemble_batch(data: &ObservationSet, rows: &[usize], views: &[usize]) -> Result<Vec<BatchViews>> {
    let d = data.d_obs();
    views
        .iter()
        .map(|&v| {
            let mut o_t = Vec::with_capacity(rows.len() * d);
            let mut o_next = Vec::with_capacity(rows.len() * d);
            for &r in rows {
                o_t.extend_from_slice(&data.records[r][v].0);
                o_next.extend_from_slice(&data.records[r][v].1);
            }
            Ok(BatchViews {
                o_t: Tensor::from_vec(&[rows.len(), d], o_t)?,
                o_next: Tensor::from_vec(&[rows.len(), d], o_next)?,
            })
        })
        .collect()
}

/// Train in place. Deterministic for a fixed (config, dataset): batch order,
/// init, and all arithmetic are seeded and single-threaded. A non-finite
/// loss aborts with the failing step index.
pub fn train(model: &mut LamModel, data: &ObservationSet, cfg: &TrainConfig) -> Result<TrainReport> {
    let views = mode_views(model, data, cfg)?;
    if data.is_empty() {
        return Err(Error::data("empty dataset"));
    }
    let mut report = TrainReport::default();
    if cfg.steps == 0 {
        return Ok(report);
    }

    let adam_cfg = AdamConfig::new(cfg.lr, cfg.weight_decay, cfg.grad_clip);
    let mut adam = AdamState::new(&model.params);
    let mut order_rng = Rng::stream(cfg.seed, 0xbac1);
    let mut order: Vec<usize> = order_rng.permutation(data.len());
    let mut cursor = 0usize;

    let cb = model.dims.codebook;
    let mut usage: Vec<VecDeque<usize>> = vec![VecDeque::new(); cb.code_len];
    let mut warned: Vec<bool> = vec![false; cb.code_len];

    for step in 0..cfg.steps {
        let mut rows = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor >= order.len() {
                order = order_rng.permutation(data.len());
                cursor = 0;
            }
            rows.push(order[cursor]);
            cursor += 1;
        }

        let batch = assemble_batch(data, &rows, &views)?;
        let (mut g, vars) = model
            .loss_graph(&model.params, &batch, cfg.mode.include_cross())
            .map_err(|e| match e {
                Error::Numeric(msg) => Error::numeric(format!("step {step}: {msg}")),
                other => other,
            })?;
        let breakdown = model.breakdown(&g, &vars);
        if !breakdown.total.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite loss at step {step}: {breakdown:?}"
            )));
        }

        g.backward(vars.total)
            .map_err(|e| Error::numeric(format!("step {step}: {e}")))?;
        model.params.zero_grads();
        g.accumulate_param_grads(&mut model.params)?;
        optimizer_step(&mut model.params, &mut adam, &adam_cfg)
            .map_err(|e| Error::numeric(format!("step {step}: {e}")))?;

        // Collapse guard over recent code usage.
        for per_view in &vars.indices {
            for sample in per_view {
                for (l, &k) in sample.iter().enumerate() {
                    usage[l].push_back(k);
                    if usage[l].len() > cfg.collapse_window {
                        usage[l].pop_front();
                    }
                }
            }
        }
        if step >= cfg.collapse_warmup && step % cfg.log_every == 0 {
            for (l, window) in usage.iter().enumerate() {
                if warned[l] || window.len() < cfg.collapse_window {
                    continue;
                }
                let mut counts = vec![0usize; cb.num_codes];
                for &k in window {
                    counts[k] += 1;
                }
                let max = *counts.iter().max().unwrap() as f64;
                let frac = max / window.len() as f64;
                if frac > cfg.collapse_threshold {
                    warned[l] = true;
                    report.collapse_warnings.push(format!(
                        "step {step}: sub-book {l} uses one code for {:.1}% of the last {} samples",
                        frac * 100.0,
                        window.len()
                    ));
                }
            }
        }

        if step % cfg.log_every == 0 || step + 1 == cfg.steps {
            report.history.push(LossRow {
                step,
                l_self: breakdown.l_self,
                l_cross: breakdown.l_cross,
                l_quant: breakdown.l_quant,
                l_commit: breakdown.l_commit,
                total: breakdown.total,
            });
        }
    }
    Ok(report)
}

/// Evaluate the mean loss components over a full dataset without updating
/// parameters.
pub fn eval_loss(model: &LamModel, data: &ObservationSet, mode: TrainMode, view_index: usize) -> Result<LossBreakdown> {
    let cfg = TrainConfig {
        mode,
        view_index,
        ..TrainConfig::default()
    };
    let views = mode_views(model, data, &cfg)?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut acc = LossBreakdown::default();
    for chunk in rows.chunks(256) {
        let batch = assemble_batch(data, chunk, &views)?;
        let (g, vars) = model.loss_graph(&model.params, &batch, mode.include_cross())?;
        let b = model.breakdown(&g, &vars);
        let w = chunk.len() as f64 / rows.len() as f64;
        acc.total += w * b.total;
        acc.l_self += w * b.l_self;
        acc.l_cross += w * b.l_cross;
        acc.l_quant += w * b.l_quant;
        acc.l_commit += w * b.l_commit;
    }
    Ok(acc)
}

/// Which views to extract latents from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewSelector {
    Single(usize),
    All,
}

/// Order-stable latent extraction aligned with the hidden evaluation labels.
#[derive(Debug, Clone)]
pub struct LatentExtraction {
    pub codes: Vec<LatentCode>,
    pub record_idx: Vec<usize>,
    pub view_ids: Vec<usize>,
    pub a_net_raw: Vec<[f64; 7]>,
    pub s_t: Vec<WorldState>,
    pub s_next: Vec<WorldState>,
    pub source: Vec<Source>,
}

impl LatentExtraction {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Latent embeddings as an [N, L*d] matrix.
    pub fn embedding_matrix(&self) -> Result<Tensor> {
        let d = self.codes.first().map(|c| c.embedding.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(self.codes.len() * d);
        for c in &self.codes {
            data.extend_from_slice(&c.embedding);
        }
        Tensor::from_vec(&[self.codes.len(), d], data)
    }
}

pub fn infer_latents(
    model: &LamModel,
    obs: &ObservationSet,
    hidden: &HiddenSet,
    selector: ViewSelector,
) -> Result<LatentExtraction> {
    if hidden.s_t.len() != obs.len() {
        return Err(Error::data("hidden labels not aligned with observations"));
    }
    let views: Vec<usize> = match selector {
        ViewSelector::Single(v) => {
            if v >= obs.num_views() {
                return Err(Error::config(format!(
                    "view {v} out of range for {} views",
                    obs.num_views()
                )));
            }
            vec![v]
        }
        ViewSelector::All => (0..obs.num_views()).collect(),
    };

    let mut out = LatentExtraction {
        codes: Vec::new(),
        record_idx: Vec::new(),
        view_ids: Vec::new(),
        a_net_raw: Vec::new(),
        s_t: Vec::new(),
        s_next: Vec::new(),
        source: Vec::new(),
    };
    let all_rows: Vec<usize> = (0..obs.len()).collect();
    for &v in &views {
        for chunk in all_rows.chunks(512) {
            let batch = assemble_batch(obs, chunk, &[v])?;
            let e = model.encode_batch(&batch[0].o_t, &batch[0].o_next)?;
            let (indices, embed) = model
                .dims
                .codebook
                .quantize_batch(model.codebook_table(), &e)?;
            for (j, &r) in chunk.iter().enumerate() {
                out.codes.push(LatentCode {
                    indices: indices[j].clone(),
                    embedding: embed.row(j).to_vec(),
                });
                out.record_idx.push(r);
                out.view_ids.push(v);
                out.a_net_raw.push(hidden.a_net_raw[r]);
                out.s_t.push(hidden.s_t[r]);
                out.s_next.push(hidden.s_next[r]);
                out.source.push(hidden.source[r]);
            }
        }
    }
    Ok(out)
}

/// Write a model checkpoint: manifest + f32 LE parameter blob.
pub fn save_lam(dir: &Path, name: &str, model: &LamModel) -> Result<()> {
    let mut extra = Manifest::new();
    extra.set("kind", "lam_checkpoint");
    extra.set("d_obs", model.dims.d_obs);
    extra.set("codebook_size", model.dims.codebook.num_codes);
    extra.set("code_len", model.dims.codebook.code_len);
    extra.set("code_dim", model.dims.codebook.code_dim);
    extra.set(
        "enc_hidden",
        model
            .dims
            .enc_hidden
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    extra.set(
        "dec_hidden",
        model
            .dims
            .dec_hidden
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    extra.set_f64s("beta", &[model.beta]);
    extra.set("init_seed", model.init_seed);
    write_params(dir, name, &model.params, &extra)
}

fn parse_widths(raw: &str) -> Result<Vec<usize>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| Error::data(format!("bad width `{tok}` in checkpoint")))
        })
        .collect()
}

/// Load a checkpoint written by [`save_lam`].
pub fn load_lam(dir: &Path, name: &str) -> Result<LamModel> {
    let (params, m) = read_params(dir, name)?;
    if m.get("kind") != Some("lam_checkpoint") {
        return Err(Error::data("not a lam checkpoint"));
    }
    let dims = LamDims {
        d_obs: m.parse_value("d_obs")?,
        codebook: Codebook::new(
            m.parse_value("codebook_size")?,
            m.parse_value("code_len")?,
            m.parse_value("code_dim")?,
        )?,
        enc_hidden: parse_widths(m.require("enc_hidden")?)?,
        dec_hidden: parse_widths(m.require("dec_hidden")?)?,
    };
    let beta = m.parse_f64s("beta")?[0];
    let seed: u64 = m.parse_value("init_seed")?;
    let mut model = LamModel::new(dims, beta, seed)?;
    // Replace the freshly initialized parameters with the checkpointed ones.
    for id in params.ids() {
        let dst = model.params.require(params.name(id))?;
        if model.params.value(dst).shape() != params.value(id).shape() {
            return Err(Error::data(format!(
                "checkpoint shape mismatch for `{}`",
                params.name(id)
            )));
        }
        *model.params.value_mut(dst) = params.value(id).clone();
    }
    Ok(model)
}
