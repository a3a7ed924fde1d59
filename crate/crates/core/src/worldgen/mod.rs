//! Deterministic synthetic multi-view world.
//!
//! Provides trajectories with exact hidden (state, action, viewpoint) labels,
//! observations rendered by a seeded deterministic feature map, dataset
//! serialization with observation/label separation, Gaussian camera pose
//! perturbation, and an exactly enumerable discrete world for information
//! bound checks.

pub mod camera;
pub mod dataset;
pub mod discrete;
pub mod render;
pub mod state;

pub use camera::{perturb_pose, CameraPose, Quat, DEFAULT_SIGMA_P, DEFAULT_SIGMA_THETA};
pub use dataset::{
    canonical_pose, generate_dataset, load_hidden, load_manifest, load_observations, write_dataset,
    DatasetConfig, DatasetManifest, HiddenLabels, HiddenSet, ObservationSet, TransitionRecord,
    ViewObservation,
};
pub use discrete::{
    enumerate_discrete_world, DiscreteWorldSpec, JointAtom, JointTable, ViewTransition,
};
pub use render::{render_view, render_view_stored, RenderParams};
pub use state::{
    expert_action, play_action, sample_initial_state, step_world, ActionVec, Source, WorldConfig,
    WorldState,
};
