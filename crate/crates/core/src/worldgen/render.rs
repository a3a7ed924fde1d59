//! Deterministic observation function O = g(S, V).
//!
//! The renderer projects a handful of world keypoints (agent, grip marker,
//! object, distractor, two static anchors) through the camera pose with a
//! smooth perspective map, then lifts the projected coordinates to `d_obs`
//! dimensions with a seeded random Fourier feature bank. The result is a
//! smooth, injective-in-practice embedding of (state, pose): identical
//! inputs reproduce bit-identical feature vectors.

use crate::rng::Rng;
use crate::worldgen::camera::CameraPose;
use crate::worldgen::state::WorldState;

/// Number of world keypoints the renderer projects.
const NUM_KEYPOINTS: usize = 6;
/// Projected features per keypoint: (u, v, depth).
const RAW_DIM: usize = NUM_KEYPOINTS * 3;

const FOCAL: f64 = 1.2;
const DEPTH_CENTER: f64 = 2.4;
const DEPTH_SCALE: f64 = 0.6;
const GRIP_LIFT: f64 = 0.3;
const DISTRACTOR_RADIUS: f64 = 0.55;
const DISTRACTOR_HEIGHT: f64 = 0.4;

/// Seeded feature-lift parameters. Two instances with the same (seed, d_obs)
/// are identical.
#[derive(Debug, Clone)]
pub struct RenderParams {
    pub d_obs: usize,
    pub seed: u64,
    weights: Vec<f64>, // d_obs x RAW_DIM, row-major
    phases: Vec<f64>,  // d_obs
}

impl RenderParams {
    pub fn new(seed: u64, d_obs: usize) -> Self {
        let mut rng = Rng::stream(seed, 0xF0F0);
        let mut weights = vec![0.0; d_obs * RAW_DIM];
        // Row scale keeps the sin argument sensitivity O(1) for O(1) moves
        // in the projected coordinates.
        let gain = 1.0;
        rng.fill_normal(&mut weights, gain);
        let mut phases = vec![0.0; d_obs];
        for p in phases.iter_mut() {
            *p = rng.range_f64(0.0, std::f64::consts::TAU);
        }
        RenderParams {
            d_obs,
            seed,
            weights,
            phases,
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        (1.0 + z.exp()).ln()
    }
}

fn keypoints(state: &WorldState) -> [[f64; 3]; NUM_KEYPOINTS] {
    [
        [state.agent_pos[0], state.agent_pos[1], 0.05],
        [
            state.agent_pos[0],
            state.agent_pos[1],
            0.05 + GRIP_LIFT * state.agent_grip,
        ],
        [state.object_pos[0], state.object_pos[1], 0.06],
        [
            DISTRACTOR_RADIUS * state.distractor_phase.cos(),
            DISTRACTOR_RADIUS * state.distractor_phase.sin(),
            DISTRACTOR_HEIGHT,
        ],
        [0.9, 0.9, 0.0],
        [-0.9, 0.5, 0.55],
    ]
}

/// Render the observation feature vector for (state, pose).
pub fn render_view(state: &WorldState, pose: &CameraPose, params: &RenderParams) -> Vec<f64> {
    let mut raw = [0.0; RAW_DIM];
    for (i, p) in keypoints(state).iter().enumerate() {
        let q = pose.world_to_camera(*p);
        // Smooth perspective: softplus keeps the divisor positive and total
        // while matching the pinhole map for points ahead of the camera.
        let depth = softplus(q[2]);
        raw[3 * i] = FOCAL * q[0] / depth;
        raw[3 * i + 1] = FOCAL * q[1] / depth;
        raw[3 * i + 2] = (q[2] - DEPTH_CENTER) * DEPTH_SCALE;
    }

    let mut out = vec![0.0; params.d_obs];
    for (i, o) in out.iter_mut().enumerate() {
        let row = &params.weights[i * RAW_DIM..(i + 1) * RAW_DIM];
        let mut acc = params.phases[i];
        for (w, r) in row.iter().zip(raw.iter()) {
            acc += w * r;
        }
        *o = acc.sin();
    }
    out
}

/// Round a value through f32 precision. Dataset generation quantizes hidden
/// labels this way before rendering, so stored f32 labels reproduce stored
/// observations exactly on reload.
pub fn quantize_f32(v: f64) -> f64 {
    v as f32 as f64
}

pub fn quantize_state_f32(s: &WorldState) -> WorldState {
    let v: Vec<f64> = s.to_f64s().iter().map(|&x| quantize_f32(x)).collect();
    WorldState::from_f64s(&v)
}

pub fn quantize_pose_f32(p: &CameraPose) -> CameraPose {
    let v: Vec<f64> = p.to_f64s().iter().map(|&x| quantize_f32(x)).collect();
    CameraPose::from_f64s(&v)
}

/// Render and round the features through f32, matching the on-disk encoding.
pub fn render_view_stored(state: &WorldState, pose: &CameraPose, params: &RenderParams) -> Vec<f64> {
    render_view(state, pose, params)
        .into_iter()
        .map(quantize_f32)
        .collect()
}
