//! Desk-scale laboratory for cross-viewpoint latent action models.
//!
//! The crate pairs a deterministic synthetic multi-view world (exact hidden
//! state, action, and camera labels) with a discrete latent action model and
//! the full evaluation stack used to measure how action-centric the learned
//! latents are: mutual-information estimators (KSG, MINE, Barber-Agakov with
//! exact discrete oracles), linear probing with net-relative-action
//! normalization, and viewpoint-perturbation stress tests backed by exact
//! re-rendering.

pub mod autodiff;
pub mod error;
pub mod io;
pub mod rng;
pub mod lam;
pub mod mi;
pub mod probe;
pub mod runner;
pub mod vpeval;
pub mod worldgen;

pub use error::{Error, Result};
pub use rng::Rng;
