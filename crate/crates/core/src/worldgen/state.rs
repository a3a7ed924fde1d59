//! Ground-truth world state, actions, dynamics, and behavior policies.

use crate::rng::Rng;

pub const ARENA_MIN: f64 = -1.0;
pub const ARENA_MAX: f64 = 1.0;
pub const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Hidden simulator state. Positions live in the arena box [-1, 1]^2, grip
/// in [0, 1], and the distractor phase is an exogenous channel in [0, 2pi)
/// that evolves independently of the agent's actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldState {
    pub agent_pos: [f64; 2],
    pub agent_grip: f64,
    pub object_pos: [f64; 2],
    pub distractor_phase: f64,
}

impl WorldState {
    pub fn to_f64s(&self) -> [f64; 6] {
        [
            self.agent_pos[0],
            self.agent_pos[1],
            self.agent_grip,
            self.object_pos[0],
            self.object_pos[1],
            self.distractor_phase,
        ]
    }

    pub fn from_f64s(v: &[f64]) -> Self {
        WorldState {
            agent_pos: [v[0], v[1]],
            agent_grip: v[2],
            object_pos: [v[3], v[4]],
            distractor_phase: v[5],
        }
    }
}

/// Expert control command for one step: a planar position increment plus a
/// binary grip command. Serialized form pads to 7 components (delta in dims
/// 1-2, zeros in dims 3-6, grip in dim 7) so downstream action normalization
/// operates on the conventional 7-D layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionVec {
    pub delta: [f64; 2],
    pub grip_cmd: f64,
}

impl ActionVec {
    pub const ZERO: ActionVec = ActionVec {
        delta: [0.0, 0.0],
        grip_cmd: 0.0,
    };

    /// 7-component padded layout: [dx, dy, 0, 0, 0, 0, grip].
    pub fn to_padded(&self) -> [f64; 7] {
        [self.delta[0], self.delta[1], 0.0, 0.0, 0.0, 0.0, self.grip_cmd]
    }
}

/// Fixed environment constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldConfig {
    /// Per-axis cap on |delta| per step.
    pub max_step: f64,
    /// Additive grip change per step toward the commanded state.
    pub grip_rate: f64,
    /// Agent-object distance below which a closed grip carries the object.
    pub grasp_radius: f64,
    /// Drop-off target for the scripted expert.
    pub goal: [f64; 2],
    /// Deterministic distractor drift per step (radians).
    pub distractor_omega: f64,
    /// Std of the exogenous noise added to the distractor phase per step.
    pub distractor_noise: f64,
    /// Std of the dither added to scripted expert deltas.
    pub expert_noise: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            max_step: 0.12,
            grip_rate: 0.25,
            grasp_radius: 0.18,
            goal: [-0.7, -0.7],
            distractor_omega: 0.15,
            distractor_noise: 0.04,
            expert_noise: 0.25,
        }
    }
}

impl WorldConfig {
    pub fn to_manifest(&self, m: &mut crate::io::Manifest) {
        m.set_f64s("world_max_step", &[self.max_step]);
        m.set_f64s("world_grip_rate", &[self.grip_rate]);
        m.set_f64s("world_grasp_radius", &[self.grasp_radius]);
        m.set_f64s("world_goal", &self.goal);
        m.set_f64s("world_distractor_omega", &[self.distractor_omega]);
        m.set_f64s("world_distractor_noise", &[self.distractor_noise]);
        m.set_f64s("world_expert_noise", &[self.expert_noise]);
    }

    pub fn from_manifest(m: &crate::io::Manifest) -> crate::error::Result<Self> {
        let goal = m.parse_f64s("world_goal")?;
        Ok(WorldConfig {
            max_step: m.parse_f64s("world_max_step")?[0],
            grip_rate: m.parse_f64s("world_grip_rate")?[0],
            grasp_radius: m.parse_f64s("world_grasp_radius")?[0],
            goal: [goal[0], goal[1]],
            distractor_omega: m.parse_f64s("world_distractor_omega")?[0],
            distractor_noise: m.parse_f64s("world_distractor_noise")?[0],
            expert_noise: m.parse_f64s("world_expert_noise")?[0],
        })
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

fn wrap_phase(mut phi: f64) -> f64 {
    phi %= TAU;
    if phi < 0.0 {
        phi += TAU;
    }
    phi
}

pub fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Advance the world one step. Inputs are clamped rather than rejected: the
/// delta is capped per axis, positions stay inside the arena, grip stays in
/// [0, 1]. The distractor phase advances from `rng` alone, so it is
/// independent of the action sequence by construction.
pub fn step_world(state: &WorldState, action: &ActionVec, cfg: &WorldConfig, rng: &mut Rng) -> WorldState {
    let dx = clamp(action.delta[0], -cfg.max_step, cfg.max_step);
    let dy = clamp(action.delta[1], -cfg.max_step, cfg.max_step);

    let new_agent = [
        clamp(state.agent_pos[0] + dx, ARENA_MIN, ARENA_MAX),
        clamp(state.agent_pos[1] + dy, ARENA_MIN, ARENA_MAX),
    ];
    // Actual movement after arena clamping; an attached object follows this.
    let moved = [
        new_agent[0] - state.agent_pos[0],
        new_agent[1] - state.agent_pos[1],
    ];

    let grip_dir = if action.grip_cmd >= 0.5 { 1.0 } else { -1.0 };
    let new_grip = clamp(state.agent_grip + cfg.grip_rate * grip_dir, 0.0, 1.0);

    let attached =
        state.agent_grip > 0.5 && dist2(state.agent_pos, state.object_pos) <= cfg.grasp_radius;
    let new_object = if attached {
        [
            clamp(state.object_pos[0] + moved[0], ARENA_MIN, ARENA_MAX),
            clamp(state.object_pos[1] + moved[1], ARENA_MIN, ARENA_MAX),
        ]
    } else {
        state.object_pos
    };

    let new_phase = wrap_phase(
        state.distractor_phase + cfg.distractor_omega + cfg.distractor_noise * rng.normal(),
    );

    WorldState {
        agent_pos: new_agent,
        agent_grip: new_grip,
        object_pos: new_object,
        distractor_phase: new_phase,
    }
}

/// Scripted reach-grasp-place expert with seeded dither. The dither keeps the
/// executed action from being a deterministic function of the state, so
/// action information is only recoverable from the realized transition.
pub fn expert_action(state: &WorldState, cfg: &WorldConfig, rng: &mut Rng) -> ActionVec {
    let holding =
        state.agent_grip > 0.5 && dist2(state.agent_pos, state.object_pos) <= cfg.grasp_radius;
    let target = if holding { cfg.goal } else { state.object_pos };
    let near_target = dist2(state.agent_pos, target) < 0.06;

    let mut delta = [
        0.9 * (target[0] - state.agent_pos[0]) + cfg.expert_noise * cfg.max_step * rng.normal(),
        0.9 * (target[1] - state.agent_pos[1]) + cfg.expert_noise * cfg.max_step * rng.normal(),
    ];
    delta[0] = clamp(delta[0], -cfg.max_step, cfg.max_step);
    delta[1] = clamp(delta[1], -cfg.max_step, cfg.max_step);

    let grip_cmd = if holding {
        if near_target {
            0.0 // release at the goal
        } else {
            1.0
        }
    } else if dist2(state.agent_pos, state.object_pos) <= cfg.grasp_radius {
        1.0
    } else {
        0.0
    };

    ActionVec { delta, grip_cmd }
}

/// Uniform random-play policy, the diversity source in mixed datasets.
pub fn play_action(cfg: &WorldConfig, rng: &mut Rng) -> ActionVec {
    ActionVec {
        delta: [
            rng.range_f64(-cfg.max_step, cfg.max_step),
            rng.range_f64(-cfg.max_step, cfg.max_step),
        ],
        grip_cmd: if rng.bernoulli(0.5) { 1.0 } else { 0.0 },
    }
}

/// Trajectory source tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Expert,
    Play,
}

impl Source {
    pub fn as_f64(self) -> f64 {
        match self {
            Source::Expert => 0.0,
            Source::Play => 1.0,
        }
    }
}

/// Initial state sampler. Expert trajectories start from a moderately
/// randomized standard arena; play trajectories randomize the full arena.
pub fn sample_initial_state(source: Source, rng: &mut Rng) -> WorldState {
    let span = match source {
        Source::Expert => 0.75,
        Source::Play => 0.95,
    };
    WorldState {
        agent_pos: [rng.range_f64(-span, span), rng.range_f64(-span, span)],
        agent_grip: 0.0,
        object_pos: [rng.range_f64(-span, span), rng.range_f64(-span, span)],
        distractor_phase: rng.range_f64(0.0, TAU),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_action_keeps_agent_fixed() {
        let cfg = WorldConfig::default();
        let mut rng = Rng::new(1);
        let state = WorldState {
            agent_pos: [0.0, 0.0],
            agent_grip: 0.0,
            object_pos: [0.5, 0.5],
            distractor_phase: 1.0,
        };
        let next = step_world(&state, &ActionVec::ZERO, &cfg, &mut rng);
        assert_eq!(next.agent_pos, [0.0, 0.0]);
        assert_eq!(next.object_pos, [0.5, 0.5]);
    }

    #[test]
    fn boundary_clamp() {
        let cfg = WorldConfig::default();
        let mut rng = Rng::new(1);
        let state = WorldState {
            agent_pos: [0.99, 0.0],
            agent_grip: 0.0,
            object_pos: [-0.5, -0.5],
            distractor_phase: 0.0,
        };
        let action = ActionVec {
            delta: [0.5, 0.0],
            grip_cmd: 0.0,
        };
        let next = step_world(&state, &action, &cfg, &mut rng);
        // delta capped to max_step=0.1, then position clamped to the wall
        assert_eq!(next.agent_pos, [1.0, 0.0]);
    }

    #[test]
    fn distractor_advances_under_zero_actions() {
        let cfg = WorldConfig::default();
        let mut rng = Rng::new(42);
        let mut state = WorldState {
            agent_pos: [0.0, 0.0],
            agent_grip: 0.0,
            object_pos: [0.5, 0.5],
            distractor_phase: 0.25,
        };
        let initial_phase = state.distractor_phase;
        for _ in 0..10 {
            state = step_world(&state, &ActionVec::ZERO, &cfg, &mut rng);
        }
        assert!((state.distractor_phase - initial_phase).abs() > 1e-6);
    }

    #[test]
    fn grip_carries_object() {
        let cfg = WorldConfig::default();
        let mut rng = Rng::new(1);
        let state = WorldState {
            agent_pos: [0.0, 0.0],
            agent_grip: 1.0,
            object_pos: [0.05, 0.0],
            distractor_phase: 0.0,
        };
        let action = ActionVec {
            delta: [0.1, 0.0],
            grip_cmd: 1.0,
        };
        let next = step_world(&state, &action, &cfg, &mut rng);
        assert!((next.object_pos[0] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn padded_action_layout() {
        let a = ActionVec {
            delta: [0.1, -0.2],
            grip_cmd: 1.0,
        };
        assert_eq!(a.to_padded(), [0.1, -0.2, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn expert_reaches_and_grasps() {
        let cfg = WorldConfig::default();
        let mut rng = Rng::new(3);
        let mut state = sample_initial_state(Source::Expert, &mut rng);
        for _ in 0..120 {
            let a = expert_action(&state, &cfg, &mut rng);
            state = step_world(&state, &a, &cfg, &mut rng);
        }
        // After enough steps the object should have been carried near the goal.
        assert!(
            dist2(state.object_pos, cfg.goal) < 0.30,
            "object at {:?}, goal {:?}",
            state.object_pos,
            cfg.goal
        );
    }
}
