//! Multimodal biped locomotion from rough keyframe references.
//!
//! The crate is organised as a pipeline:
//!
//! * [`refmotion`] turns keyframes and contact schedules into reference clips.
//! * [`mode_encoder`] compresses each clip into a fixed-length latent mode with
//!   an LSTM autoencoder.
//! * [`biped_sim`] is a planar biped with PD actuation, penalty contacts,
//!   terrains, the imitation reward, and the reference tracker.
//! * [`policy_rl`] holds the latent-conditioned Gaussian policy and the PPO
//!   trainer.
//! * [`adaptive_sampler`] picks initial/final modes and switch times from
//!   return records.
//! * [`mode_planner`] composes trained modes into open-loop plans with tabular
//!   Q-learning.
//! * [`pipeline`] wires everything into the command-level operations used by
//!   the `mmloco` binary.

pub mod adam;
pub mod adaptive_sampler;
pub mod artifact;
pub mod biped_sim;
pub mod error;
pub mod mode_encoder;
pub mod mode_planner;
pub mod pipeline;
pub mod policy_rl;
pub mod refmotion;
pub mod rng;

pub use error::{Error, Result};

/// Version string written into every artifact header.
pub const TOOL_VERSION: &str = concat!("mmloco ", env!("CARGO_PKG_VERSION"));
