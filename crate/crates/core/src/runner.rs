//! Pipeline stages behind the CLI: dataset generation, LAM training, MI
//! evaluation, probing, viewpoint-perturbation evaluation, the ablation
//! matrix, and report aggregation.
//!
//! Every stage writes its resolved configuration next to its outputs as a
//! `key: value` file; re-running a stage from the same configuration
//! reproduces its outputs byte-identically (no timestamps, seeded RNG
//! everywhere).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::Manifest;
use crate::lam::{
    infer_latents, save_lam, train, Codebook, LamDims, LamModel, TrainConfig, TrainMode,
    ViewSelector,
};
use crate::mi::{
    estimate, permutation_control, EstimatorKind, MiEstimate, MiProtocol, PairedSamples,
};
use crate::probe::{
    nmse, nmse_per_dim, pca_reduce, train_probe_closed, train_probe_gd, ActionStats,
    ProbeGdSchedule,
};
use crate::rng::Rng;
use crate::vpeval::{net_action_targets, vp_eval, PerturbConfig, VpReport};
use crate::worldgen::dataset::{
    generate_dataset, load_hidden, load_observations, write_dataset, DatasetConfig, HiddenSet,
    ObservationSet,
};

/// Write the resolved stage configuration next to its outputs.
fn write_config_record(dir: &Path, name: &str, entries: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut m = Manifest::new();
    for (k, v) in entries {
        m.set(k, v);
    }
    m.write(&dir.join(format!("{name}.config")))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-data

#[derive(Debug, Clone)]
pub struct GenDataConfig {
    pub out_dir: PathBuf,
    pub name: String,
    pub dataset: DatasetConfig,
}

pub struct GenDataOutputs {
    pub manifest_path: PathBuf,
    pub record_count: usize,
}

pub fn run_gen_data(cfg: &GenDataConfig) -> Result<GenDataOutputs> {
    let (manifest, records) = generate_dataset(&cfg.dataset)?;
    write_dataset(&cfg.out_dir, &cfg.name, &manifest, &records)?;
    let d = &cfg.dataset;
    write_config_record(
        &cfg.out_dir,
        &cfg.name,
        &[
            ("stage", "gen-data".to_string()),
            ("name", cfg.name.clone()),
            ("views", d.num_views.to_string()),
            ("trajectories", d.trajectories.to_string()),
            ("len", d.traj_len.to_string()),
            ("stride", d.stride.to_string()),
            (
                "mixture",
                format!("{}:{}", d.mixture_expert, 1.0 - d.mixture_expert),
            ),
            ("seed", d.seed.to_string()),
            ("d_obs", d.d_obs.to_string()),
            ("render_seed", d.render_seed.to_string()),
            ("camera_jitter", d.camera_jitter.to_string()),
            ("jitter_sigma_theta", format!("{:?}", d.jitter_sigma_theta)),
            ("jitter_sigma_pos", format!("{:?}", d.jitter_sigma_pos)),
            (
                "cam_motion_sigma_theta",
                format!("{:?}", d.cam_motion_sigma_theta),
            ),
            (
                "cam_motion_sigma_pos",
                format!("{:?}", d.cam_motion_sigma_pos),
            ),
        ],
    )?;
    Ok(GenDataOutputs {
        manifest_path: cfg.out_dir.join(format!("{}.manifest", cfg.name)),
        record_count: manifest.record_count,
    })
}

// ---------------------------------------------------------------------------
// train-lam

#[derive(Debug, Clone)]
pub struct TrainLamConfig {
    pub data_dir: PathBuf,
    pub data_name: String,
    pub out_dir: PathBuf,
    pub name: String,
    pub codebook_size: usize,
    pub code_len: usize,
    pub code_dim: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    pub beta: f64,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl TrainLamConfig {
    pub fn desk_default(data_dir: PathBuf, data_name: String, out_dir: PathBuf, name: String) -> Self {
        TrainLamConfig {
            data_dir,
            data_name,
            out_dir,
            name,
            codebook_size: 16,
            code_len: 4,
            code_dim: 16,
            enc_hidden: vec![96],
            dec_hidden: vec![96],
            beta: 0.25,
            init_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

pub struct TrainOutputs {
    pub model: LamModel,
    pub checkpoint_manifest: PathBuf,
    pub loss_csv: PathBuf,
    pub collapse_warnings: Vec<String>,
}

pub fn run_train_lam(cfg: &TrainLamConfig) -> Result<TrainOutputs> {
    let obs = load_observations(&cfg.data_dir, &cfg.data_name)?;
    let dims = LamDims {
        d_obs: obs.d_obs(),
        codebook: Codebook::new(cfg.codebook_size, cfg.code_len, cfg.code_dim)?,
        enc_hidden: cfg.enc_hidden.clone(),
        dec_hidden: cfg.dec_hidden.clone(),
    };
    let mut model = LamModel::new(dims, cfg.beta, cfg.init_seed)?;
    let report = train(&mut model, &obs, &cfg.train)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    save_lam(&cfg.out_dir, &cfg.name, &model)?;
    let loss_csv = cfg.out_dir.join(format!("{}.loss.csv", cfg.name));
    std::fs::write(&loss_csv, report.loss_csv())?;

    write_config_record(
        &cfg.out_dir,
        &cfg.name,
        &[
            ("stage", "train-lam".to_string()),
            ("data", format!("{}/{}", cfg.data_dir.display(), cfg.data_name)),
            ("mode", cfg.train.mode.name().to_string()),
            ("codebook_size", cfg.codebook_size.to_string()),
            ("code_len", cfg.code_len.to_string()),
            ("code_dim", cfg.code_dim.to_string()),
            ("beta", format!("{:?}", cfg.beta)),
            ("lr", format!("{:?}", cfg.train.lr)),
            ("weight_decay", format!("{:?}", cfg.train.weight_decay)),
            ("grad_clip", format!("{:?}", cfg.train.grad_clip)),
            ("batch_size", cfg.train.batch_size.to_string()),
            ("steps", cfg.train.steps.to_string()),
            ("seed", cfg.train.seed.to_string()),
            ("init_seed", cfg.init_seed.to_string()),
            ("view_index", cfg.train.view_index.to_string()),
        ],
    )?;
    Ok(TrainOutputs {
        model,
        checkpoint_manifest: cfg.out_dir.join(format!("{}.manifest", cfg.name)),
        loss_csv,
        collapse_warnings: report.collapse_warnings,
    })
}

// ---------------------------------------------------------------------------
// shared evaluation plumbing

/// Extract latents for `view`, pair them with net-normalized actions, cap
/// the sample count (seeded subsample), and tag splits.
pub fn latent_action_samples(
    model: &LamModel,
    obs: &ObservationSet,
    hidden: &HiddenSet,
    view: usize,
    max_samples: usize,
    seed: u64,
) -> Result<PairedSamples> {
    let extraction = infer_latents(model, obs, hidden, ViewSelector::Single(view))?;
    let stats = ActionStats::from_manifest(&obs.manifest);
    let stride = obs.manifest.config.stride;
    let z_full = extraction.embedding_matrix()?;
    let targets_full = net_action_targets(&extraction.a_net_raw, &stats, stride)?;

    let n = z_full.rows();
    let keep = max_samples.min(n);
    let rows: Vec<usize> = if keep < n {
        let mut rng = Rng::stream(seed, 0x5b);
        let mut perm = rng.permutation(n);
        perm.truncate(keep);
        perm.sort_unstable();
        perm
    } else {
        (0..n).collect()
    };
    let dz = z_full.cols();
    let mut zd = Vec::with_capacity(rows.len() * dz);
    let mut ad = Vec::with_capacity(rows.len() * 7);
    for &r in &rows {
        zd.extend_from_slice(z_full.row(r));
        ad.extend_from_slice(targets_full.row(r));
    }
    PairedSamples::with_splits(
        crate::autodiff::Tensor::from_vec(&[rows.len(), dz], zd)?,
        crate::autodiff::Tensor::from_vec(&[rows.len(), 7], ad)?,
        (0.6, 0.2, 0.2),
        seed,
    )
}

// ---------------------------------------------------------------------------
// eval-mi

#[derive(Debug, Clone)]
pub struct EvalMiConfig {
    pub model_dir: PathBuf,
    pub model_name: String,
    pub data_dir: PathBuf,
    pub data_name: String,
    pub view: usize,
    pub estimators: Vec<EstimatorKind>,
    pub seeds: Vec<u64>,
    pub max_samples: usize,
    pub project_dim: Option<usize>,
    pub with_permutation: bool,
    pub out_dir: PathBuf,
    pub name: String,
}

pub struct EvalMiRow {
    pub estimator: String,
    pub seed: u64,
    pub split: String,
    pub bits: f64,
    pub preprocessing: String,
    pub permuted: bool,
}

pub struct EvalMiOutputs {
    pub rows: Vec<EvalMiRow>,
    pub csv_path: PathBuf,
    pub md_path: PathBuf,
}

fn protocol_for_seed(project_dim: Option<usize>, seed: u64) -> MiProtocol {
    let mut protocol = MiProtocol::default();
    protocol.project_dim = project_dim;
    protocol.projection_seed = seed.wrapping_add(101);
    protocol.ksg.jitter_seed = seed;
    protocol.mine.seed = seed;
    protocol.ba.seed = seed;
    protocol
}

fn mi_csv(rows: &[EvalMiRow]) -> String {
    let mut out = String::from("estimator,seed,split,bits,preprocessing,permuted\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.estimator, r.seed, r.split, r.bits, r.preprocessing, r.permuted
        );
    }
    out
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn mi_markdown(rows: &[EvalMiRow], estimators: &[EstimatorKind]) -> String {
    let mut out = String::from("| estimator | MI (bits, mean±std) | permutation control |\n");
    out.push_str("|---|---|---|\n");
    for kind in estimators {
        let name = kind.name();
        let plain: Vec<f64> = rows
            .iter()
            .filter(|r| r.estimator == name && !r.permuted)
            .map(|r| r.bits)
            .collect();
        let perm: Vec<f64> = rows
            .iter()
            .filter(|r| r.estimator == name && r.permuted)
            .map(|r| r.bits)
            .collect();
        let (m, s) = mean_std(&plain);
        let control = if perm.is_empty() {
            "n/a".to_string()
        } else {
            let (pm, ps) = mean_std(&perm);
            format!("{pm:.3} ± {ps:.3}")
        };
        let _ = writeln!(out, "| {name} | {m:.3} ± {s:.3} | {control} |");
    }
    out
}

pub fn run_eval_mi(cfg: &EvalMiConfig) -> Result<EvalMiOutputs> {
    let model = crate::lam::load_lam(&cfg.model_dir, &cfg.model_name)?;
    let obs = load_observations(&cfg.data_dir, &cfg.data_name)?;
    let hidden = load_hidden(&cfg.data_dir, &cfg.data_name)?;

    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let samples = latent_action_samples(&model, &obs, &hidden, cfg.view, cfg.max_samples, seed)?;
        let protocol = protocol_for_seed(cfg.project_dim, seed);
        for &kind in &cfg.estimators {
            let est = estimate(&samples, kind, &protocol)?;
            rows.push(to_row(&est, seed));
            if cfg.with_permutation {
                let control = permutation_control(&samples, kind, &protocol, seed.wrapping_add(7))?;
                rows.push(to_row(&control, seed));
            }
        }
    }

    std::fs::create_dir_all(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join(format!("{}.mi.csv", cfg.name));
    std::fs::write(&csv_path, mi_csv(&rows))?;
    let md_path = cfg.out_dir.join(format!("{}.mi.md", cfg.name));
    std::fs::write(&md_path, mi_markdown(&rows, &cfg.estimators))?;
    write_config_record(
        &cfg.out_dir,
        &format!("{}.mi", cfg.name),
        &[
            ("stage", "eval-mi".to_string()),
            ("model", format!("{}/{}", cfg.model_dir.display(), cfg.model_name)),
            ("data", format!("{}/{}", cfg.data_dir.display(), cfg.data_name)),
            ("view", cfg.view.to_string()),
            (
                "estimators",
                cfg.estimators
                    .iter()
                    .map(|e| e.name())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "seeds",
                cfg.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("max_samples", cfg.max_samples.to_string()),
            (
                "project_dim",
                cfg.project_dim.map_or("none".to_string(), |d| d.to_string()),
            ),
            ("with_permutation", cfg.with_permutation.to_string()),
        ],
    )?;
    Ok(EvalMiOutputs {
        rows,
        csv_path,
        md_path,
    })
}

fn to_row(est: &MiEstimate, seed: u64) -> EvalMiRow {
    EvalMiRow {
        estimator: est.estimator.name().to_string(),
        seed,
        split: est.split.clone(),
        bits: est.bits,
        preprocessing: est.preprocessing.clone(),
        permuted: est.permuted,
    }
}

// ---------------------------------------------------------------------------
// probe

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeSolver {
    Closed,
    Gd,
}

impl ProbeSolver {
    pub fn name(&self) -> &'static str {
        match self {
            ProbeSolver::Closed => "closed",
            ProbeSolver::Gd => "gd",
        }
    }

    pub fn parse(s: &str) -> Result<ProbeSolver> {
        match s {
            "closed" => Ok(ProbeSolver::Closed),
            "gd" => Ok(ProbeSolver::Gd),
            other => Err(Error::config(format!("unknown probe solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeRunConfig {
    pub model_dir: PathBuf,
    pub model_name: String,
    pub data_dir: PathBuf,
    pub data_name: String,
    pub view: usize,
    pub keep_d: usize,
    pub seeds: Vec<u64>,
    pub solver: ProbeSolver,
    pub max_samples: usize,
    pub out_dir: PathBuf,
    pub name: String,
}

pub struct ProbeRow {
    pub model: String,
    pub dataset: String,
    pub seed: u64,
    pub split: String,
    pub nmse_total: f64,
    pub nmse_dims: Vec<f64>,
}

pub struct ProbeOutputs {
    pub rows: Vec<ProbeRow>,
    pub csv_path: PathBuf,
}

/// Probe protocol: PCA-reduce latents, fit on train+val rows, report NMSE on
/// train and test splits. Components whose eigenvalue is numerically zero
/// relative to the leading one are dropped; a degenerate direction carries
/// no signal and only destabilizes the least-squares fit.
pub fn probe_metrics(
    samples: &PairedSamples,
    keep_d: usize,
    solver: ProbeSolver,
    seed: u64,
) -> Result<Vec<(String, f64, Vec<f64>)>> {
    use crate::mi::Split;
    let keep = keep_d.min(samples.z.cols()).min(samples.len());
    let (projected_full, pca) = pca_reduce(&samples.z, keep)?;
    let lead = pca.eigenvalues.first().copied().unwrap_or(0.0).max(1e-300);
    let effective = pca
        .eigenvalues
        .iter()
        .take(keep)
        .take_while(|&&e| e > 1e-9 * lead)
        .count()
        .max(1);
    let projected = if effective < keep {
        let n = projected_full.rows();
        let mut data = Vec::with_capacity(n * effective);
        for i in 0..n {
            data.extend_from_slice(&projected_full.row(i)[..effective]);
        }
        crate::autodiff::Tensor::from_vec(&[n, effective], data)?
    } else {
        projected_full
    };

    let mut fit_rows = samples.rows_of(Split::Train);
    fit_rows.extend(samples.rows_of(Split::Val));
    fit_rows.sort_unstable();
    let test_rows = samples.rows_of(Split::Test);

    let gather = |rows: &[usize], m: &crate::autodiff::Tensor| {
        let d = m.cols();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            data.extend_from_slice(m.row(r));
        }
        crate::autodiff::Tensor::from_vec(&[rows.len(), d], data).unwrap()
    };
    let z_fit = gather(&fit_rows, &projected);
    let a_fit = gather(&fit_rows, &samples.a);
    let z_test = gather(&test_rows, &projected);
    let a_test = gather(&test_rows, &samples.a);

    let probe = match solver {
        ProbeSolver::Closed => train_probe_closed(&z_fit, &a_fit, 1e-8)?,
        ProbeSolver::Gd => train_probe_gd(
            &z_fit,
            &a_fit,
            &ProbeGdSchedule {
                seed,
                ..ProbeGdSchedule::default()
            },
        )?,
    };

    let mut out = Vec::new();
    for (split_name, z, a) in [("train", &z_fit, &a_fit), ("test", &z_test, &a_test)] {
        out.push((
            split_name.to_string(),
            nmse(&probe, z, a)?,
            nmse_per_dim(&probe, z, a)?,
        ));
    }
    Ok(out)
}

pub fn run_probe(cfg: &ProbeRunConfig) -> Result<ProbeOutputs> {
    let model = crate::lam::load_lam(&cfg.model_dir, &cfg.model_name)?;
    let obs = load_observations(&cfg.data_dir, &cfg.data_name)?;
    let hidden = load_hidden(&cfg.data_dir, &cfg.data_name)?;

    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let samples = latent_action_samples(&model, &obs, &hidden, cfg.view, cfg.max_samples, seed)?;
        for (split, total, dims) in probe_metrics(&samples, cfg.keep_d, cfg.solver, seed)? {
            rows.push(ProbeRow {
                model: cfg.model_name.clone(),
                dataset: cfg.data_name.clone(),
                seed,
                split,
                nmse_total: total,
                nmse_dims: dims,
            });
        }
    }

    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut csv = String::from(
        "model,dataset,seed,split,nmse_total,nmse_d1,nmse_d2,nmse_d3,nmse_d4,nmse_d5,nmse_d6,nmse_d7\n",
    );
    for r in &rows {
        let dims = r
            .nmse_dims
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.model, r.dataset, r.seed, r.split, r.nmse_total, dims
        );
    }
    let csv_path = cfg.out_dir.join(format!("{}.probe.csv", cfg.name));
    std::fs::write(&csv_path, csv)?;
    write_config_record(
        &cfg.out_dir,
        &format!("{}.probe", cfg.name),
        &[
            ("stage", "probe".to_string()),
            ("model", format!("{}/{}", cfg.model_dir.display(), cfg.model_name)),
            ("data", format!("{}/{}", cfg.data_dir.display(), cfg.data_name)),
            ("view", cfg.view.to_string()),
            ("keep_d", cfg.keep_d.to_string()),
            ("solver", cfg.solver.name().to_string()),
            (
                "seeds",
                cfg.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("max_samples", cfg.max_samples.to_string()),
        ],
    )?;
    Ok(ProbeOutputs { rows, csv_path })
}

// ---------------------------------------------------------------------------
// vp-eval

#[derive(Debug, Clone)]
pub struct VpEvalRunConfig {
    pub model_dir: PathBuf,
    pub model_name: String,
    pub data_dir: PathBuf,
    pub data_name: String,
    pub view: usize,
    pub sigmas_theta: Vec<f64>,
    pub sigma_pos: f64,
    pub per_step: usize,
    pub seed: u64,
    pub max_records: Option<usize>,
    pub project_dim: Option<usize>,
    pub out_dir: PathBuf,
    pub name: String,
}

pub struct VpEvalOutputs {
    pub reports: Vec<VpReport>,
    pub csv_path: PathBuf,
}

pub fn run_vp_eval(cfg: &VpEvalRunConfig) -> Result<VpEvalOutputs> {
    let model = crate::lam::load_lam(&cfg.model_dir, &cfg.model_name)?;
    let obs = load_observations(&cfg.data_dir, &cfg.data_name)?;
    let hidden = load_hidden(&cfg.data_dir, &cfg.data_name)?;
    let protocol = protocol_for_seed(cfg.project_dim, cfg.seed);

    let mut reports = Vec::new();
    for &sigma in &cfg.sigmas_theta {
        let perturb = PerturbConfig {
            sigma_theta: sigma,
            sigma_pos: cfg.sigma_pos,
            per_step: cfg.per_step,
            perturb_both: false,
        };
        reports.push(vp_eval(
            &model,
            &obs,
            &hidden,
            cfg.view,
            &perturb,
            &protocol,
            cfg.seed,
            cfg.max_records,
        )?);
    }

    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut csv = String::from(
        "model,sigma_theta,sigma_p,mse_mean,mse_tilde_mean,ksg_bits,probe_nmse,seed\n",
    );
    for r in &reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            cfg.model_name,
            r.sigma_theta,
            r.sigma_pos,
            r.mse_mean,
            r.mse_tilde_mean,
            r.ksg_bits,
            r.probe_nmse,
            cfg.seed
        );
    }
    let csv_path = cfg.out_dir.join(format!("{}.vp.csv", cfg.name));
    std::fs::write(&csv_path, csv)?;
    write_config_record(
        &cfg.out_dir,
        &format!("{}.vp", cfg.name),
        &[
            ("stage", "vp-eval".to_string()),
            ("model", format!("{}/{}", cfg.model_dir.display(), cfg.model_name)),
            ("data", format!("{}/{}", cfg.data_dir.display(), cfg.data_name)),
            ("view", cfg.view.to_string()),
            (
                "sigmas_theta",
                cfg.sigmas_theta
                    .iter()
                    .map(|s| format!("{s:?}"))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("sigma_pos", format!("{:?}", cfg.sigma_pos)),
            ("per_step", cfg.per_step.to_string()),
            ("seed", cfg.seed.to_string()),
        ],
    )?;
    Ok(VpEvalOutputs { reports, csv_path })
}

// ---------------------------------------------------------------------------
// ablate + report

/// The three-row ablation matrix: cross-view loss on expert-only data,
/// self-only loss on mixed data, and the full configuration (mixed data
/// with cross-view loss); each trained over the seed list and scored on a
/// shared held-out expert evaluation set.
#[derive(Debug, Clone)]
pub struct AblateConfig {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub train_trajectories: usize,
    pub eval_trajectories: usize,
    pub traj_len: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub d_obs: usize,
    pub eval_seed: u64,
    pub max_samples: usize,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            out_dir: PathBuf::from("ablation_out"),
            seeds: vec![0, 1, 2, 3],
            train_trajectories: 160,
            eval_trajectories: 150,
            traj_len: 24,
            steps: 2500,
            batch_size: 64,
            lr: 2e-3,
            d_obs: 64,
            eval_seed: 9000,
            max_samples: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationRowKind {
    ExpertCross,
    MixedSelfOnly,
    MixedCross,
}

impl AblationRowKind {
    pub fn name(&self) -> &'static str {
        match self {
            AblationRowKind::ExpertCross => "expert_cross",
            AblationRowKind::MixedSelfOnly => "mixed_self_only",
            AblationRowKind::MixedCross => "mixed_cross",
        }
    }

    pub fn mixture_expert(&self) -> f64 {
        match self {
            AblationRowKind::ExpertCross => 1.0,
            _ => 0.5,
        }
    }

    pub fn mode(&self) -> TrainMode {
        match self {
            AblationRowKind::MixedSelfOnly => TrainMode::MultiViewSelfOnly,
            _ => TrainMode::Mvp,
        }
    }

    pub const ALL: [AblationRowKind; 3] = [
        AblationRowKind::ExpertCross,
        AblationRowKind::MixedSelfOnly,
        AblationRowKind::MixedCross,
    ];
}

pub struct AblationCell {
    pub row: AblationRowKind,
    pub seed: u64,
    pub probe_nmse: f64,
    pub ksg_bits: f64,
}

pub struct AblateOutputs {
    pub cells: Vec<AblationCell>,
    pub csv_path: PathBuf,
}

/// Train one configuration and score it on the shared evaluation set.
pub fn train_and_score(
    cfg: &AblateConfig,
    row: AblationRowKind,
    seed: u64,
    eval_obs: &ObservationSet,
    eval_hidden: &HiddenSet,
) -> Result<AblationCell> {
    let data_cfg = DatasetConfig {
        num_views: 2,
        trajectories: cfg.train_trajectories,
        traj_len: cfg.traj_len,
        mixture_expert: row.mixture_expert(),
        seed: 1000 + seed,
        d_obs: cfg.d_obs,
        ..DatasetConfig::default()
    };
    let (manifest, records) = generate_dataset(&data_cfg)?;
    let obs = ObservationSet {
        manifest,
        records: records
            .iter()
            .map(|r| {
                r.views
                    .iter()
                    .map(|v| (v.o_t.clone(), v.o_next.clone()))
                    .collect()
            })
            .collect(),
    };

    let dims = LamDims::desk_default(cfg.d_obs);
    let mut model = LamModel::new(dims, 0.25, seed)?;
    let train_cfg = TrainConfig {
        mode: row.mode(),
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        steps: cfg.steps,
        seed,
        ..TrainConfig::default()
    };
    train(&mut model, &obs, &train_cfg)?;
    score_model(&model, eval_obs, eval_hidden, seed, cfg.max_samples, Some(32)).map(
        |(probe_nmse, ksg_bits)| AblationCell {
            row,
            seed,
            probe_nmse,
            ksg_bits,
        },
    )
}

/// Evaluation-protocol scores for one trained model: test-split probe NMSE
/// and KSG MI on view-0 latents of the evaluation set.
pub fn score_model(
    model: &LamModel,
    eval_obs: &ObservationSet,
    eval_hidden: &HiddenSet,
    seed: u64,
    max_samples: usize,
    project_dim: Option<usize>,
) -> Result<(f64, f64)> {
    let samples = latent_action_samples(model, eval_obs, eval_hidden, 0, max_samples, seed)?;
    let protocol = protocol_for_seed(project_dim, seed);
    let keep_d = project_dim.unwrap_or(32);
    let probe = probe_metrics(&samples, keep_d, ProbeSolver::Closed, seed)?;
    let nmse_test = probe
        .iter()
        .find(|(split, _, _)| split == "test")
        .map(|(_, v, _)| *v)
        .expect("test split present");
    let ksg = estimate(&samples, EstimatorKind::Ksg, &protocol)?;
    Ok((nmse_test, ksg.bits))
}

/// Generate the shared evaluation dataset for ablations: held-out
/// expert-only trajectories (the robot-data analog), views and jitter as in
/// the default world.
pub fn ablation_eval_set(cfg: &AblateConfig) -> Result<(ObservationSet, HiddenSet)> {
    let eval_cfg = DatasetConfig {
        num_views: 2,
        trajectories: cfg.eval_trajectories,
        traj_len: cfg.traj_len,
        mixture_expert: 1.0,
        seed: cfg.eval_seed,
        d_obs: cfg.d_obs,
        ..DatasetConfig::default()
    };
    let (manifest, records) = generate_dataset(&eval_cfg)?;
    let dir = cfg.out_dir.join("eval_data");
    write_dataset(&dir, "eval", &manifest, &records)?;
    Ok((load_observations(&dir, "eval")?, load_hidden(&dir, "eval")?))
}

pub fn run_ablate(cfg: &AblateConfig) -> Result<AblateOutputs> {
    let (eval_obs, eval_hidden) = ablation_eval_set(cfg)?;
    let mut cells = Vec::new();
    for &row in &AblationRowKind::ALL {
        for &seed in &cfg.seeds {
            cells.push(train_and_score(cfg, row, seed, &eval_obs, &eval_hidden)?);
        }
    }

    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut csv = String::from("config,seed,probe_nmse,ksg_bits\n");
    for c in &cells {
        let _ = writeln!(csv, "{},{},{},{}", c.row.name(), c.seed, c.probe_nmse, c.ksg_bits);
    }
    let csv_path = cfg.out_dir.join("ablation.csv");
    std::fs::write(&csv_path, csv)?;
    write_config_record(
        &cfg.out_dir,
        "ablation",
        &[
            ("stage", "ablate".to_string()),
            (
                "seeds",
                cfg.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("train_trajectories", cfg.train_trajectories.to_string()),
            ("eval_trajectories", cfg.eval_trajectories.to_string()),
            ("traj_len", cfg.traj_len.to_string()),
            ("steps", cfg.steps.to_string()),
            ("batch_size", cfg.batch_size.to_string()),
            ("lr", format!("{:?}", cfg.lr)),
            ("d_obs", cfg.d_obs.to_string()),
            ("eval_seed", cfg.eval_seed.to_string()),
        ],
    )?;
    Ok(AblateOutputs { cells, csv_path })
}

/// Aggregate an ablation CSV into a Markdown table with mean±std over
/// seeds. Never recomputes: a missing CSV is a hard error.
pub fn run_report(in_dir: &Path, out_md: &Path) -> Result<String> {
    let csv_path = in_dir.join("ablation.csv");
    let text = std::fs::read_to_string(&csv_path).map_err(|e| {
        Error::data(format!(
            "missing ablation results at {}: {e} (run `ablate` first; `report` only aggregates)",
            csv_path.display()
        ))
    })?;
    let mut by_config: std::collections::BTreeMap<String, (Vec<f64>, Vec<f64>)> =
        std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::data(format!("malformed ablation row {i}: `{line}`")));
        }
        let entry = by_config.entry(fields[0].to_string()).or_default();
        entry.0.push(
            fields[2]
                .parse()
                .map_err(|_| Error::data(format!("bad nmse in row {i}")))?,
        );
        entry.1.push(
            fields[3]
                .parse()
                .map_err(|_| Error::data(format!("bad ksg in row {i}")))?,
        );
    }

    let mut md = String::from("| config | seeds | NMSE (probe) ↓ | MI (KSG, bits) ↑ |\n|---|---|---|---|\n");
    for (config, (nmses, ksgs)) in &by_config {
        let (nm, ns) = mean_std(nmses);
        let (km, ks) = mean_std(ksgs);
        let _ = writeln!(
            md,
            "| {config} | {} | {nm:.3} ± {ns:.3} | {km:.3} ± {ks:.3} |",
            nmses.len()
        );
    }
    if let Some(dir) = out_md.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out_md, &md)?;
    Ok(md)
}
