//! Viewpoint-perturbation evaluation.
//!
//! Perturbed transitions pair the original o_t with an o_next re-rendered
//! from the true next state under a Gaussian-perturbed camera pose (exact
//! re-rendering stands in for novel-view synthesis, so the perturbed
//! observation is exactly consistent with (S, V~)). Reported metrics:
//! next-observation MSE with the original latent vs the perturbed latent,
//! KSG mutual information of perturbed latents with actions, and the NMSE
//! of a probe trained on original-view latents evaluated on perturbed
//! latents without refitting.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::lam::{infer_latents, LamModel, ViewSelector};
use crate::mi::{estimate, EstimatorKind, MiProtocol, PairedSamples};
use crate::probe::{
    normalize_net_raw, pca_reduce, train_probe_closed, ActionStats, LinearProbe, Pca, DEFAULT_EPS,
};
use crate::rng::Rng;
use crate::worldgen::camera::{perturb_pose, CameraPose};
use crate::worldgen::dataset::{HiddenSet, ObservationSet};
use crate::worldgen::render::{render_view_stored, RenderParams};
use crate::worldgen::state::WorldState;

/// Perturbation settings; defaults follow the evaluation protocol
/// (sigma_theta 0.075 rad, sigma_p 0.03 m, 5 perturbations per step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbConfig {
    pub sigma_theta: f64,
    pub sigma_pos: f64,
    pub per_step: usize,
    /// Also perturb the o_t frame (the default pairs the original o_t with
    /// a perturbed o_next only).
    pub perturb_both: bool,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            sigma_theta: crate::worldgen::camera::DEFAULT_SIGMA_THETA,
            sigma_pos: crate::worldgen::camera::DEFAULT_SIGMA_P,
            per_step: 5,
            perturb_both: false,
        }
    }
}

/// One perturbed transition (o_t, o_next~) in the dataset's stored f32
/// feature encoding: o_next~ is re-rendered from the true next state under
/// a perturbed copy of the camera pose that produced o_next. Zero sigmas
/// reproduce the originals bit-identically.
pub fn perturbed_transition(
    render: &RenderParams,
    s_t: &WorldState,
    s_next: &WorldState,
    pose_t: &CameraPose,
    pose_next: &CameraPose,
    cfg: &PerturbConfig,
    rng: &mut Rng,
) -> (Vec<f64>, Vec<f64>) {
    let perturbed_next = perturb_pose(pose_next, cfg.sigma_theta, cfg.sigma_pos, rng);
    let o_next = render_view_stored(s_next, &perturbed_next, render);
    let o_t = if cfg.perturb_both {
        let perturbed_t = perturb_pose(pose_t, cfg.sigma_theta, cfg.sigma_pos, rng);
        render_view_stored(s_t, &perturbed_t, render)
    } else {
        render_view_stored(s_t, pose_t, render)
    };
    (o_t, o_next)
}

/// (MSE, MSE~) for one record: both reconstruct the original o_next from
/// o_t, with the latent inferred from the original transition vs the
/// perturbed one.
pub fn mse_pair(
    model: &LamModel,
    o_t: &[f64],
    o_next: &[f64],
    o_next_perturbed: &[f64],
) -> Result<(f64, f64)> {
    let z = model.infer_code(o_t, o_next)?;
    let z_tilde = model.infer_code(o_t, o_next_perturbed)?;
    let recon = model.decode(o_t, &z.embedding)?;
    let recon_tilde = model.decode(o_t, &z_tilde.embedding)?;
    let mse = sq_err(o_next, &recon);
    let mse_tilde = sq_err(o_next, &recon_tilde);
    Ok((mse, mse_tilde))
}

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct VpReport {
    pub sigma_theta: f64,
    pub sigma_pos: f64,
    pub mse_mean: f64,
    pub mse_tilde_mean: f64,
    pub mse_tilde_median: f64,
    /// KSG MI (bits) between perturbed latents and net actions.
    pub ksg_bits: f64,
    /// NMSE of the original-view probe evaluated on perturbed latents.
    pub probe_nmse: f64,
    pub records_used: usize,
}

/// Probe fitted on original-view latents: PCA basis plus linear readout,
/// reused unchanged on perturbed latents.
pub struct FittedProbe {
    pub pca: Pca,
    pub probe: LinearProbe,
    pub keep_d: usize,
}

/// Fit PCA + closed-form probe on the given latent matrix and targets.
pub fn fit_latent_probe(z: &Tensor, targets: &Tensor, keep_d: usize) -> Result<FittedProbe> {
    let keep = keep_d.min(z.cols()).min(z.rows());
    let (projected, pca) = pca_reduce(z, keep)?;
    let probe = train_probe_closed(&projected, targets, 1e-8)?;
    Ok(FittedProbe {
        pca,
        probe,
        keep_d: keep,
    })
}

/// Net-normalized action targets for a set of extraction rows.
pub fn net_action_targets(
    a_net_raw: &[[f64; 7]],
    stats: &ActionStats,
    stride: usize,
) -> Result<Tensor> {
    let mut data = Vec::with_capacity(a_net_raw.len() * 7);
    for a in a_net_raw {
        data.extend_from_slice(&normalize_net_raw(a, stats, stride, DEFAULT_EPS).0);
    }
    Tensor::from_vec(&[a_net_raw.len(), 7], data)
}

/// Full viewpoint-perturbation evaluation of one model on one view of an
/// evaluation dataset. Per-record RNG streams are derived from
/// (seed, record, perturbation index), so sweeps over sigma reuse common
/// random numbers.
pub fn vp_eval(
    model: &LamModel,
    obs: &ObservationSet,
    hidden: &HiddenSet,
    view: usize,
    perturb: &PerturbConfig,
    protocol: &MiProtocol,
    seed: u64,
    max_records: Option<usize>,
) -> Result<VpReport> {
    if view >= obs.num_views() {
        return Err(Error::config(format!(
            "view {view} out of range for {} views",
            obs.num_views()
        )));
    }
    let n_records = max_records.unwrap_or(obs.len()).min(obs.len());
    if n_records == 0 {
        return Err(Error::data("empty evaluation set"));
    }
    let render = RenderParams::new(obs.manifest.config.render_seed, obs.manifest.config.d_obs);
    let stats = ActionStats::from_manifest(&obs.manifest);
    let stride = obs.manifest.config.stride;

    // Original-view latents for probe fitting.
    let extraction = infer_latents(model, obs, hidden, ViewSelector::Single(view))?;
    let z_orig = extraction.embedding_matrix()?;
    let targets_orig = net_action_targets(&extraction.a_net_raw, &stats, stride)?;
    let keep_d = protocol.project_dim.unwrap_or(32).min(z_orig.cols());
    let fitted = fit_latent_probe(&z_orig, &targets_orig, keep_d)?;

    let mut mse_sum = 0.0;
    let mut tilde_sum = 0.0;
    let mut tilde_all = Vec::with_capacity(n_records * perturb.per_step);
    let mut z_tilde_rows = Vec::with_capacity(n_records * perturb.per_step);
    let mut action_rows = Vec::with_capacity(n_records * perturb.per_step);
    let mut count = 0usize;

    for r in 0..n_records {
        let o_t = &obs.records[r][view].0;
        let o_next = &obs.records[r][view].1;
        let z = model.infer_code(o_t, o_next)?;
        let recon = model.decode(o_t, &z.embedding)?;
        let mse = sq_err(o_next, &recon);
        for p in 0..perturb.per_step {
            let mut rng = Rng::stream(seed, (r * perturb.per_step + p) as u64);
            let (o_t_used, o_next_tilde) = perturbed_transition(
                &render,
                &hidden.s_t[r],
                &hidden.s_next[r],
                &hidden.poses_t[r][view],
                &hidden.poses_next[r][view],
                perturb,
                &mut rng,
            );
            let z_tilde = model.infer_code(&o_t_used, &o_next_tilde)?;
            let recon_tilde = model.decode(&o_t_used, &z_tilde.embedding)?;
            let mse_tilde = sq_err(o_next, &recon_tilde);
            mse_sum += mse;
            tilde_sum += mse_tilde;
            tilde_all.push(mse_tilde);
            z_tilde_rows.extend_from_slice(&z_tilde.embedding);
            action_rows.push(hidden.a_net_raw[r]);
            count += 1;
        }
    }

    let latent_dim = model.dims.codebook.latent_dim();
    let z_tilde = Tensor::from_vec(&[count, latent_dim], z_tilde_rows)?;
    let targets = net_action_targets(&action_rows, &stats, stride)?;

    // KSG under the standard protocol.
    let samples = PairedSamples::with_splits(z_tilde.clone(), targets.clone(), (0.6, 0.2, 0.2), seed)?;
    let ksg = estimate(&samples, EstimatorKind::Ksg, protocol)?;

    // Cross-evaluation of the original-view probe on perturbed latents.
    let projected = fitted.pca.project(&z_tilde)?;
    let probe_nmse = crate::probe::nmse(&fitted.probe, &projected, &targets)?;

    tilde_all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = tilde_all[tilde_all.len() / 2];

    Ok(VpReport {
        sigma_theta: perturb.sigma_theta,
        sigma_pos: perturb.sigma_pos,
        mse_mean: mse_sum / count as f64,
        mse_tilde_mean: tilde_sum / count as f64,
        mse_tilde_median: median,
        ksg_bits: ksg.bits,
        probe_nmse,
        records_used: n_records,
    })
}

/// Median MSE~ across a sigma_theta grid with common random numbers.
pub fn stress_grid(
    model: &LamModel,
    obs: &ObservationSet,
    hidden: &HiddenSet,
    view: usize,
    sigmas_theta: &[f64],
    sigma_pos: f64,
    per_step: usize,
    seed: u64,
    max_records: Option<usize>,
) -> Result<Vec<(f64, f64)>> {
    let render = RenderParams::new(obs.manifest.config.render_seed, obs.manifest.config.d_obs);
    let n_records = max_records.unwrap_or(obs.len()).min(obs.len());
    let mut out = Vec::with_capacity(sigmas_theta.len());
    for &sigma in sigmas_theta {
        let cfg = PerturbConfig {
            sigma_theta: sigma,
            sigma_pos,
            per_step,
            perturb_both: false,
        };
        let mut values = Vec::with_capacity(n_records * per_step);
        for r in 0..n_records {
            let o_next = &obs.records[r][view].1;
            for p in 0..per_step {
                let mut rng = Rng::stream(seed, (r * per_step + p) as u64);
                let (o_t_used, o_next_tilde) = perturbed_transition(
                    &render,
                    &hidden.s_t[r],
                    &hidden.s_next[r],
                    &hidden.poses_t[r][view],
                    &hidden.poses_next[r][view],
                    &cfg,
                    &mut rng,
                );
                let z_tilde = model.infer_code(&o_t_used, &o_next_tilde)?;
                let recon_tilde = model.decode(&o_t_used, &z_tilde.embedding)?;
                values.push(sq_err(o_next, &recon_tilde));
            }
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push((sigma, values[values.len() / 2]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lam::{LamDims, LamModel};
    use crate::worldgen::dataset::{generate_dataset, load_hidden, load_observations, write_dataset, DatasetConfig};

    fn small_setup() -> (LamModel, ObservationSet, HiddenSet, tempdir::Dir) {
        let cfg = DatasetConfig {
            num_views: 2,
            trajectories: 6,
            traj_len: 8,
            d_obs: 16,
            ..DatasetConfig::default()
        };
        let (manifest, records) = generate_dataset(&cfg).unwrap();
        let dir = tempdir::Dir::new("lamlab_vpeval");
        write_dataset(dir.path(), "ev", &manifest, &records).unwrap();
        let obs = load_observations(dir.path(), "ev").unwrap();
        let hidden = load_hidden(dir.path(), "ev").unwrap();
        let model = LamModel::new(LamDims::desk_default(16), 0.25, 3).unwrap();
        (model, obs, hidden, dir)
    }

    mod tempdir {
        use std::path::{Path, PathBuf};

        pub struct Dir(PathBuf);

        impl Dir {
            pub fn new(tag: &str) -> Dir {
                let path = std::env::temp_dir().join(format!("{}_{}", tag, std::process::id()));
                std::fs::create_dir_all(&path).unwrap();
                Dir(path)
            }

            pub fn path(&self) -> &Path {
                &self.0
            }
        }

        impl Drop for Dir {
            fn drop(&mut self) {
                std::fs::remove_dir_all(&self.0).ok();
            }
        }
    }

    #[test]
    fn zero_sigma_reproduces_original_bitwise() {
        let (_, obs, hidden, _dir) = small_setup();
        let render = RenderParams::new(obs.manifest.config.render_seed, obs.manifest.config.d_obs);
        let cfg = PerturbConfig {
            sigma_theta: 0.0,
            sigma_pos: 0.0,
            ..PerturbConfig::default()
        };
        for r in [0usize, 3, 10] {
            let mut rng = Rng::stream(9, r as u64);
            let (o_t, o_next_tilde) = perturbed_transition(
                &render,
                &hidden.s_t[r],
                &hidden.s_next[r],
                &hidden.poses_t[r][0],
                &hidden.poses_next[r][0],
                &cfg,
                &mut rng,
            );
            assert_eq!(o_t, obs.records[r][0].0);
            assert_eq!(o_next_tilde, obs.records[r][0].1);
        }
    }

    #[test]
    fn zero_sigma_mse_pair_is_equal() {
        let (model, obs, hidden, _dir) = small_setup();
        let render = RenderParams::new(obs.manifest.config.render_seed, obs.manifest.config.d_obs);
        let cfg = PerturbConfig {
            sigma_theta: 0.0,
            sigma_pos: 0.0,
            ..PerturbConfig::default()
        };
        let mut rng = Rng::stream(1, 0);
        let (o_t, o_next_tilde) = perturbed_transition(
            &render,
            &hidden.s_t[0],
            &hidden.s_next[0],
            &hidden.poses_t[0][0],
            &hidden.poses_next[0][0],
            &cfg,
            &mut rng,
        );
        let (mse, mse_tilde) = mse_pair(&model, &o_t, &obs.records[0][0].1, &o_next_tilde).unwrap();
        assert_eq!(mse, mse_tilde);
    }

    #[test]
    fn forced_equal_latent_gives_equal_mse() {
        let (model, obs, _, _dir) = small_setup();
        let o_t = &obs.records[0][0].0;
        let o_next = &obs.records[0][0].1;
        // Test hook: passing the original transition as "perturbed" forces
        // z~ = z.
        let (mse, mse_tilde) = mse_pair(&model, o_t, o_next, o_next).unwrap();
        assert_eq!(mse, mse_tilde);
    }

    #[test]
    fn default_sigmas_perturb_with_probability_one() {
        let (_, obs, hidden, _dir) = small_setup();
        let render = RenderParams::new(obs.manifest.config.render_seed, obs.manifest.config.d_obs);
        let cfg = PerturbConfig::default();
        let mut distinct = 0usize;
        let total = 200.min(obs.len());
        for r in 0..total {
            let mut rng = Rng::stream(33, r as u64);
            let (_, o_next_tilde) = perturbed_transition(
                &render,
                &hidden.s_t[r],
                &hidden.s_next[r],
                &hidden.poses_t[r][0],
                &hidden.poses_next[r][0],
                &cfg,
                &mut rng,
            );
            let l2 = sq_err(&o_next_tilde, &obs.records[r][0].1);
            if l2 > 0.0 {
                distinct += 1;
            }
        }
        assert_eq!(distinct, total);
    }

    #[test]
    fn probe_transfers_across_views_when_dims_match() {
        // The cross-view probing protocol: fit on view-0 latents, evaluate
        // on view-1 latents of the same records without refitting.
        let (model, obs, hidden, _dir) = small_setup();
        let stats = ActionStats::from_manifest(&obs.manifest);
        let v0 = infer_latents(&model, &obs, &hidden, ViewSelector::Single(0)).unwrap();
        let v1 = infer_latents(&model, &obs, &hidden, ViewSelector::Single(1)).unwrap();
        let targets = net_action_targets(&v0.a_net_raw, &stats, 1).unwrap();
        let fitted = fit_latent_probe(&v0.embedding_matrix().unwrap(), &targets, 8).unwrap();
        let projected = fitted.pca.project(&v1.embedding_matrix().unwrap()).unwrap();
        let score = crate::probe::nmse(&fitted.probe, &projected, &targets).unwrap();
        assert!(score.is_finite() && score > 0.0);
    }

    #[test]
    fn vp_eval_runs_and_zero_sigma_matches_unperturbed_metrics() {
        let (model, obs, hidden, _dir) = small_setup();
        let protocol = MiProtocol {
            project_dim: Some(8),
            ..MiProtocol::default()
        };
        let zero = PerturbConfig {
            sigma_theta: 0.0,
            sigma_pos: 0.0,
            per_step: 1,
            perturb_both: false,
        };
        let report = vp_eval(&model, &obs, &hidden, 0, &zero, &protocol, 7, None).unwrap();
        assert_eq!(report.mse_mean, report.mse_tilde_mean);

        // The unperturbed pipeline metrics computed directly.
        let extraction = infer_latents(&model, &obs, &hidden, ViewSelector::Single(0)).unwrap();
        let stats = ActionStats::from_manifest(&obs.manifest);
        let z = extraction.embedding_matrix().unwrap();
        let targets = net_action_targets(&extraction.a_net_raw, &stats, 1).unwrap();
        let samples = PairedSamples::with_splits(z.clone(), targets.clone(), (0.6, 0.2, 0.2), 7).unwrap();
        let ksg = estimate(&samples, EstimatorKind::Ksg, &protocol).unwrap();
        assert!((report.ksg_bits - ksg.bits).abs() < 1e-12);

        let fitted = fit_latent_probe(&z, &targets, 8).unwrap();
        let projected = fitted.pca.project(&z).unwrap();
        let nm = crate::probe::nmse(&fitted.probe, &projected, &targets).unwrap();
        assert!((report.probe_nmse - nm).abs() < 1e-12);
    }

    #[test]
    fn stress_grid_is_monotone_for_trained_model() {
        // Median MSE~ must be non-decreasing in sigma_theta for a trained
        // model under common random numbers.
        let cfg = DatasetConfig {
            num_views: 2,
            trajectories: 30,
            traj_len: 12,
            d_obs: 16,
            ..DatasetConfig::default()
        };
        let (manifest, records) = generate_dataset(&cfg).unwrap();
        let dir = tempdir::Dir::new("lamlab_vpeval_stress");
        write_dataset(dir.path(), "st", &manifest, &records).unwrap();
        let obs = load_observations(dir.path(), "st").unwrap();
        let hidden = load_hidden(dir.path(), "st").unwrap();
        let mut model = LamModel::new(LamDims::desk_default(16), 0.25, 3).unwrap();
        let tcfg = crate::lam::TrainConfig {
            mode: crate::lam::TrainMode::Mvp,
            steps: 300,
            batch_size: 32,
            ..crate::lam::TrainConfig::default()
        };
        crate::lam::train(&mut model, &obs, &tcfg).unwrap();
        let grid = stress_grid(
            &model,
            &obs,
            &hidden,
            0,
            &[0.0, 0.075, 0.15, 0.3],
            0.03,
            3,
            11,
            Some(80),
        )
        .unwrap();
        for w in grid.windows(2) {
            assert!(
                w[1].1 >= w[0].1,
                "median MSE~ must be non-decreasing: {grid:?}"
            );
        }
    }
}
