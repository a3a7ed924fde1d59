//! Multi-view transition dataset: generation, serialization, loading.
//!
//! A dataset is three files sharing a base name:
//!   `<name>.manifest` — text key:value metadata, field order, byte offsets
//!   `<name>.obs`      — f32 LE observation features, training-visible
//!   `<name>.hidden`   — f32 LE ground-truth labels, evaluation-only
//!
//! The split into `.obs`/`.hidden` is deliberate: code that trains from the
//! dataset takes an [`ObservationSet`] and never sees the hidden labels.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{read_f32_le, write_f32_le, Manifest};
use crate::rng::Rng;
use crate::worldgen::camera::{perturb_pose, CameraPose};
use crate::worldgen::render::{
    quantize_f32, quantize_pose_f32, quantize_state_f32, render_view_stored, RenderParams,
};
use crate::worldgen::state::{
    expert_action, play_action, sample_initial_state, step_world, ActionVec, Source, WorldConfig,
    WorldState, TAU,
};

pub const FORMAT_VERSION: u32 = 1;
pub const STATE_FLOATS: usize = 6;
pub const ACTION_FLOATS: usize = 7;
pub const POSE_FLOATS: usize = 7;

/// One synchronized multi-view transition. All views share the same hidden
/// (s_t, s_next, a_net_raw); each view contributes its own observation pair.
#[derive(Debug, Clone)]
pub struct TransitionRecord {
    pub views: Vec<ViewObservation>,
    pub hidden: HiddenLabels,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct ViewObservation {
    pub view_id: usize,
    pub o_t: Vec<f64>,
    pub o_next: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HiddenLabels {
    pub s_t: WorldState,
    pub s_next: WorldState,
    /// Net raw action over the stride window: dims 1-6 summed per step,
    /// dim 7 taken from the final step.
    pub a_net_raw: [f64; 7],
    /// Camera pose per view at time t. Cameras drift step to step
    /// (independently per view), so the pose pair is part of the label.
    pub poses_t: Vec<CameraPose>,
    /// Camera pose per view at time t + stride.
    pub poses_next: Vec<CameraPose>,
    pub source: Source,
    pub traj: usize,
    pub step: usize,
}

/// Generation configuration; everything needed to reproduce the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub num_views: usize,
    pub trajectories: usize,
    /// States per trajectory; yields `traj_len - stride` records each.
    pub traj_len: usize,
    pub stride: usize,
    /// Fraction of trajectories driven by the scripted expert; the rest are
    /// random play. Must lie in [0, 1].
    pub mixture_expert: f64,
    pub seed: u64,
    pub d_obs: usize,
    pub render_seed: u64,
    /// Per-trajectory camera jitter around the canonical rig. This is the
    /// viewpoint-variation knob: with it on, camera pose is a nuisance
    /// variable that differs across trajectories.
    pub camera_jitter: bool,
    pub jitter_sigma_theta: f64,
    pub jitter_sigma_pos: f64,
    /// Per-step camera motion (Gaussian pose noise around the trajectory's
    /// rig, independent across views and steps). Frame-to-frame visual
    /// change then mixes agent motion with camera motion, the exogenous
    /// channel that single-view training tends to encode.
    pub cam_motion_sigma_theta: f64,
    pub cam_motion_sigma_pos: f64,
    pub world: WorldConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_views: 2,
            trajectories: 200,
            traj_len: 24,
            stride: 1,
            mixture_expert: 0.5,
            seed: 0,
            d_obs: 64,
            render_seed: 7777,
            camera_jitter: true,
            jitter_sigma_theta: 0.4,
            jitter_sigma_pos: 0.25,
            cam_motion_sigma_theta: 0.015,
            cam_motion_sigma_pos: 0.02,
            world: WorldConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_views == 0 {
            return Err(Error::config("num_views must be >= 1"));
        }
        if self.trajectories == 0 || self.traj_len < 2 {
            return Err(Error::config("need trajectories >= 1 and traj_len >= 2"));
        }
        if self.stride == 0 || self.stride >= self.traj_len {
            return Err(Error::config(format!(
                "stride must satisfy 1 <= stride < traj_len, got {} vs {}",
                self.stride, self.traj_len
            )));
        }
        if !(0.0..=1.0).contains(&self.mixture_expert) {
            return Err(Error::config("mixture_expert must lie in [0, 1]"));
        }
        if self.d_obs < 4 {
            return Err(Error::config("d_obs must be >= 4"));
        }
        Ok(())
    }

    pub fn records_expected(&self) -> usize {
        self.trajectories * (self.traj_len - self.stride)
    }
}

/// Dataset metadata: configuration, record count, per-step action statistics,
/// and the documented binary layout of the blob files.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    pub record_count: usize,
    /// Per-dimension mean of all per-step raw (padded 7-D) actions.
    pub action_mu: [f64; 7],
    /// Per-dimension std (population) of all per-step raw actions.
    pub action_sigma: [f64; 7],
}

impl DatasetManifest {
    pub fn obs_record_floats(&self) -> usize {
        self.config.num_views * 2 * self.config.d_obs
    }

    pub fn hidden_record_floats(&self) -> usize {
        2 * STATE_FLOATS + ACTION_FLOATS + 2 * POSE_FLOATS * self.config.num_views + 3
    }

    pub fn to_manifest(&self) -> Manifest {
        let c = &self.config;
        let mut m = Manifest::new();
        m.set("format_version", FORMAT_VERSION);
        m.set("record_count", self.record_count);
        m.set("num_views", c.num_views);
        m.set("trajectories", c.trajectories);
        m.set("traj_len", c.traj_len);
        m.set("stride", c.stride);
        m.set_f64s("mixture_expert", &[c.mixture_expert]);
        m.set_f64s("mixture_play", &[1.0 - c.mixture_expert]);
        m.set("seed", c.seed);
        m.set("d_obs", c.d_obs);
        m.set("render_seed", c.render_seed);
        m.set("camera_jitter", c.camera_jitter);
        m.set_f64s("jitter_sigma_theta", &[c.jitter_sigma_theta]);
        m.set_f64s("jitter_sigma_pos", &[c.jitter_sigma_pos]);
        m.set_f64s("cam_motion_sigma_theta", &[c.cam_motion_sigma_theta]);
        m.set_f64s("cam_motion_sigma_pos", &[c.cam_motion_sigma_pos]);
        c.world.to_manifest(&mut m);
        m.set_f64s("action_mu", &self.action_mu);
        m.set_f64s("action_sigma", &self.action_sigma);
        m.set("obs_record_floats", self.obs_record_floats());
        m.set(
            "obs_field_order",
            "per record, per view v in 0..num_views | o_t[d_obs] o_next[d_obs]",
        );
        m.set(
            "obs_record_offset_bytes",
            format!("record r starts at 4*r*{}", self.obs_record_floats()),
        );
        m.set("hidden_record_floats", self.hidden_record_floats());
        m.set(
            "hidden_field_order",
            "s_t[6] s_next[6] a_net_raw[7] pose_t_per_view[7*num_views] pose_next_per_view[7*num_views] source[1] traj[1] step[1]",
        );
        m.set(
            "hidden_record_offset_bytes",
            format!("record r starts at 4*r*{}", self.hidden_record_floats()),
        );
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let version: u32 = m.parse_value("format_version")?;
        if version != FORMAT_VERSION {
            return Err(Error::data(format!("unsupported format_version {version}")));
        }
        let config = DatasetConfig {
            num_views: m.parse_value("num_views")?,
            trajectories: m.parse_value("trajectories")?,
            traj_len: m.parse_value("traj_len")?,
            stride: m.parse_value("stride")?,
            mixture_expert: m.parse_f64s("mixture_expert")?[0],
            seed: m.parse_value("seed")?,
            d_obs: m.parse_value("d_obs")?,
            render_seed: m.parse_value("render_seed")?,
            camera_jitter: m.parse_value("camera_jitter")?,
            jitter_sigma_theta: m.parse_f64s("jitter_sigma_theta")?[0],
            jitter_sigma_pos: m.parse_f64s("jitter_sigma_pos")?[0],
            cam_motion_sigma_theta: m.parse_f64s("cam_motion_sigma_theta")?[0],
            cam_motion_sigma_pos: m.parse_f64s("cam_motion_sigma_pos")?[0],
            world: WorldConfig::from_manifest(m)?,
        };
        let mu = m.parse_f64s("action_mu")?;
        let sigma = m.parse_f64s("action_sigma")?;
        if mu.len() != 7 || sigma.len() != 7 {
            return Err(Error::data("action stats must have 7 dims"));
        }
        Ok(DatasetManifest {
            config,
            record_count: m.parse_value("record_count")?,
            action_mu: mu.try_into().unwrap(),
            action_sigma: sigma.try_into().unwrap(),
        })
    }
}

/// Canonical camera rig: cameras on a ring around the arena, separated by
/// at least 120 degrees, looking at the arena center.
pub fn canonical_pose(view: usize, num_views: usize) -> CameraPose {
    let spacing = TAU / (num_views.max(3) as f64);
    let az = 0.55 + spacing * view as f64;
    let radius = 2.4;
    let height = 1.7;
    CameraPose::look_at(
        [radius * az.cos(), radius * az.sin(), height],
        [0.0, 0.0, 0.15],
    )
}

/// Per-trajectory rig jitter: re-sample the camera placement around the
/// canonical ring (azimuth, height, radius, look-at target) so viewpoint is
/// a genuine nuisance variable that differs between trajectories. The
/// angular scale is driven by `sigma_theta`, the metric scales by
/// `sigma_pos`.
pub fn jittered_pose(
    view: usize,
    num_views: usize,
    sigma_theta: f64,
    sigma_pos: f64,
    rng: &mut Rng,
) -> CameraPose {
    let spacing = TAU / (num_views.max(3) as f64);
    let az = 0.55 + spacing * view as f64 + 2.0 * sigma_theta * rng.normal();
    let radius = (2.4 + sigma_pos * rng.normal()).max(1.4);
    let height = (1.7 + 2.0 * sigma_pos * rng.normal()).max(0.4);
    let target = [
        0.5 * sigma_pos * rng.normal(),
        0.5 * sigma_pos * rng.normal(),
        0.15,
    ];
    CameraPose::look_at([radius * az.cos(), radius * az.sin(), height], target)
}

/// Generate the full dataset. Each trajectory owns RNG streams derived from
/// (seed, trajectory index), so generation order cannot affect content.
pub fn generate_dataset(config: &DatasetConfig) -> Result<(DatasetManifest, Vec<TransitionRecord>)> {
    config.validate()?;
    let render = RenderParams::new(config.render_seed, config.d_obs);
    let expert_count = (config.mixture_expert * config.trajectories as f64).round() as usize;

    let mut records = Vec::with_capacity(config.records_expected());
    let mut stat_sum = [0.0; 7];
    let mut stat_sumsq = [0.0; 7];
    let mut stat_n = 0usize;

    for traj in 0..config.trajectories {
        let mut dyn_rng = Rng::stream(config.seed, 2 * traj as u64);
        let mut cam_rng = Rng::stream(config.seed, 2 * traj as u64 + 1);
        let source = if traj < expert_count {
            Source::Expert
        } else {
            Source::Play
        };

        // Camera rig for this trajectory, optionally jittered, then a
        // per-step pose sequence: i.i.d. Gaussian motion around the rig,
        // independent across views.
        let mut rig = Vec::with_capacity(config.num_views);
        for v in 0..config.num_views {
            let pose = if config.camera_jitter {
                jittered_pose(
                    v,
                    config.num_views,
                    config.jitter_sigma_theta,
                    config.jitter_sigma_pos,
                    &mut cam_rng,
                )
            } else {
                canonical_pose(v, config.num_views)
            };
            rig.push(pose);
        }
        let pose_seq: Vec<Vec<CameraPose>> = rig
            .iter()
            .map(|base| {
                (0..config.traj_len)
                    .map(|_| {
                        quantize_pose_f32(&perturb_pose(
                            base,
                            config.cam_motion_sigma_theta,
                            config.cam_motion_sigma_pos,
                            &mut cam_rng,
                        ))
                    })
                    .collect()
            })
            .collect();

        // Roll the trajectory in f64, then quantize states for labeling and
        // rendering so the stored labels reproduce the stored observations.
        let mut states = Vec::with_capacity(config.traj_len);
        let mut actions: Vec<ActionVec> = Vec::with_capacity(config.traj_len - 1);
        let mut s = sample_initial_state(source, &mut dyn_rng);
        states.push(s);
        for _ in 0..config.traj_len - 1 {
            let a = match source {
                Source::Expert => expert_action(&s, &config.world, &mut dyn_rng),
                Source::Play => play_action(&config.world, &mut dyn_rng),
            };
            s = step_world(&s, &a, &config.world, &mut dyn_rng);
            states.push(s);
            actions.push(a);
        }
        let states_q: Vec<WorldState> = states.iter().map(quantize_state_f32).collect();

        for a in &actions {
            let padded = a.to_padded();
            for d in 0..7 {
                stat_sum[d] += padded[d];
                stat_sumsq[d] += padded[d] * padded[d];
            }
            stat_n += 1;
        }

        let rendered: Vec<Vec<Vec<f64>>> = pose_seq
            .iter()
            .map(|poses| {
                states_q
                    .iter()
                    .zip(poses)
                    .map(|(st, pose)| render_view_stored(st, pose, &render))
                    .collect()
            })
            .collect();

        for t in 0..config.traj_len - config.stride {
            let t_next = t + config.stride;
            let mut a_net = [0.0; 7];
            for u in t..t_next {
                let padded = actions[u].to_padded();
                for d in 0..6 {
                    a_net[d] += padded[d];
                }
            }
            a_net[6] = actions[t_next - 1].to_padded()[6];
            for v in a_net.iter_mut() {
                *v = quantize_f32(*v);
            }

            let views = (0..config.num_views)
                .map(|v| ViewObservation {
                    view_id: v,
                    o_t: rendered[v][t].clone(),
                    o_next: rendered[v][t_next].clone(),
                })
                .collect();

            records.push(TransitionRecord {
                views,
                hidden: HiddenLabels {
                    s_t: states_q[t],
                    s_next: states_q[t_next],
                    a_net_raw: a_net,
                    poses_t: pose_seq.iter().map(|p| p[t]).collect(),
                    poses_next: pose_seq.iter().map(|p| p[t_next]).collect(),
                    source,
                    traj,
                    step: t,
                },
                stride: config.stride,
            });
        }
    }

    let n = stat_n as f64;
    let mut mu = [0.0; 7];
    let mut sigma = [0.0; 7];
    for d in 0..7 {
        mu[d] = stat_sum[d] / n;
        sigma[d] = (stat_sumsq[d] / n - mu[d] * mu[d]).max(0.0).sqrt();
    }

    let manifest = DatasetManifest {
        config: config.clone(),
        record_count: records.len(),
        action_mu: mu,
        action_sigma: sigma,
    };
    Ok((manifest, records))
}

fn base_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.manifest")),
        dir.join(format!("{name}.obs")),
        dir.join(format!("{name}.hidden")),
    )
}

/// Write the three dataset files.
pub fn write_dataset(
    dir: &Path,
    name: &str,
    manifest: &DatasetManifest,
    records: &[TransitionRecord],
) -> Result<()> {
    if manifest.record_count != records.len() {
        return Err(Error::data(format!(
            "manifest record_count {} does not match payload {}",
            manifest.record_count,
            records.len()
        )));
    }
    std::fs::create_dir_all(dir)?;
    let (mpath, opath, hpath) = base_paths(dir, name);

    let mut obs = Vec::with_capacity(records.len() * manifest.obs_record_floats());
    let mut hidden = Vec::with_capacity(records.len() * manifest.hidden_record_floats());
    for r in records {
        for view in &r.views {
            obs.extend_from_slice(&view.o_t);
            obs.extend_from_slice(&view.o_next);
        }
        hidden.extend_from_slice(&r.hidden.s_t.to_f64s());
        hidden.extend_from_slice(&r.hidden.s_next.to_f64s());
        hidden.extend_from_slice(&r.hidden.a_net_raw);
        for pose in &r.hidden.poses_t {
            hidden.extend_from_slice(&pose.to_f64s());
        }
        for pose in &r.hidden.poses_next {
            hidden.extend_from_slice(&pose.to_f64s());
        }
        hidden.push(r.hidden.source.as_f64());
        hidden.push(r.hidden.traj as f64);
        hidden.push(r.hidden.step as f64);
    }

    manifest.to_manifest().write(&mpath)?;
    write_f32_le(&opath, &obs)?;
    write_f32_le(&hpath, &hidden)?;
    Ok(())
}

/// Training-visible observations only. Holds no ground-truth labels, so
/// model code that accepts this type provably cannot peek at them.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub manifest: DatasetManifest,
    /// Per record, per view: (o_t, o_next).
    pub records: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
}

impl ObservationSet {
    pub fn num_views(&self) -> usize {
        self.manifest.config.num_views
    }

    pub fn d_obs(&self) -> usize {
        self.manifest.config.d_obs
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Evaluation-only labels, loaded from the sibling `.hidden` file.
#[derive(Debug, Clone)]
pub struct HiddenSet {
    pub s_t: Vec<WorldState>,
    pub s_next: Vec<WorldState>,
    pub a_net_raw: Vec<[f64; 7]>,
    pub poses_t: Vec<Vec<CameraPose>>,
    pub poses_next: Vec<Vec<CameraPose>>,
    pub source: Vec<Source>,
    pub traj: Vec<usize>,
    pub step: Vec<usize>,
}

pub fn load_manifest(dir: &Path, name: &str) -> Result<DatasetManifest> {
    let (mpath, _, _) = base_paths(dir, name);
    DatasetManifest::from_manifest(&Manifest::read(&mpath)?)
}

pub fn load_observations(dir: &Path, name: &str) -> Result<ObservationSet> {
    let manifest = load_manifest(dir, name)?;
    let (_, opath, _) = base_paths(dir, name);
    let raw = read_f32_le(&opath)?;
    let per_record = manifest.obs_record_floats();
    if raw.len() != manifest.record_count * per_record {
        return Err(Error::data(format!(
            "obs blob has {} floats, expected {}",
            raw.len(),
            manifest.record_count * per_record
        )));
    }
    let d = manifest.config.d_obs;
    let records = raw
        .chunks_exact(per_record)
        .map(|chunk| {
            chunk
                .chunks_exact(2 * d)
                .map(|pair| (pair[..d].to_vec(), pair[d..].to_vec()))
                .collect()
        })
        .collect();
    Ok(ObservationSet { manifest, records })
}

pub fn load_hidden(dir: &Path, name: &str) -> Result<HiddenSet> {
    let manifest = load_manifest(dir, name)?;
    let (_, _, hpath) = base_paths(dir, name);
    let raw = read_f32_le(&hpath)?;
    let per_record = manifest.hidden_record_floats();
    if raw.len() != manifest.record_count * per_record {
        return Err(Error::data(format!(
            "hidden blob has {} floats, expected {}",
            raw.len(),
            manifest.record_count * per_record
        )));
    }
    let nv = manifest.config.num_views;
    let mut out = HiddenSet {
        s_t: Vec::new(),
        s_next: Vec::new(),
        a_net_raw: Vec::new(),
        poses_t: Vec::new(),
        poses_next: Vec::new(),
        source: Vec::new(),
        traj: Vec::new(),
        step: Vec::new(),
    };
    for chunk in raw.chunks_exact(per_record) {
        let mut at = 0;
        out.s_t.push(WorldState::from_f64s(&chunk[at..at + 6]));
        at += 6;
        out.s_next.push(WorldState::from_f64s(&chunk[at..at + 6]));
        at += 6;
        let mut a = [0.0; 7];
        a.copy_from_slice(&chunk[at..at + 7]);
        out.a_net_raw.push(a);
        at += 7;
        let mut poses_t = Vec::with_capacity(nv);
        for _ in 0..nv {
            poses_t.push(CameraPose::from_f64s(&chunk[at..at + 7]));
            at += 7;
        }
        out.poses_t.push(poses_t);
        let mut poses_next = Vec::with_capacity(nv);
        for _ in 0..nv {
            poses_next.push(CameraPose::from_f64s(&chunk[at..at + 7]));
            at += 7;
        }
        out.poses_next.push(poses_next);
        out.source.push(if chunk[at] == 0.0 {
            Source::Expert
        } else {
            Source::Play
        });
        out.traj.push(chunk[at + 1] as usize);
        out.step.push(chunk[at + 2] as usize);
    }
    Ok(out)
}
