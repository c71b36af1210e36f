//! Planar biped environment: dynamics, terrain, imitation reward, reference
//! tracking and episode mechanics.

pub mod env;
pub mod reward;
pub mod robot;
pub mod terrain;
pub mod tracker;

pub use env::{observe, termination, BipedEnv, EnvConfig, Observation, StepOutcome, Termination, TraceRow};
pub use reward::{reward, RefPose, RewardConfig, TrackingError};
pub use robot::{pd_torque, step, RobotConfig, SimState};
pub use terrain::{Segment, Terrain};
pub use tracker::{reference_pose, ReferenceTracker};
