//! Imitation reward over base position, orientation and contact state.

use serde::{Deserialize, Serialize};

use super::robot::{dof, SimState};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Scaling gains `[w_p, w_o, w_c]`.
    pub weights: [f64; 3],
    /// Sensitivity gains `[k_p, k_o, k_c]`.
    pub gains: [f64; 3],
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: [0.5, 0.5, 0.0],
            gains: [5.0, 5.0, 2.0],
        }
    }
}

impl RewardConfig {
    /// Gains with contact tracking enabled.
    pub fn with_contacts() -> Self {
        Self {
            weights: [0.35, 0.35, 0.3],
            ..Self::default()
        }
    }

    pub fn max_step_reward(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().chain(&self.gains).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("reward weights and gains must be finite and non-negative"));
        }
        if self.max_step_reward() <= 0.0 {
            return Err(Error::invalid("at least one reward weight must be positive"));
        }
        Ok(())
    }
}

/// Reference base pose and contact pattern at one instant. `z` is relative
/// to the support plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefPose {
    pub x: f64,
    pub z: f64,
    pub pitch: f64,
    pub contact: [bool; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingError {
    pub position: [f64; 2],
    pub orientation: f64,
    pub contact: [f64; 2],
}

pub fn tracking_error(state: &SimState, pose: &RefPose) -> TrackingError {
    let bit = |b: bool| if b { 1.0f64 } else { 0.0 };
    TrackingError {
        position: [state.q[dof::X] - pose.x, state.relative_height() - pose.z],
        orientation: state.q[dof::PITCH] - pose.pitch,
        contact: std::array::from_fn(|i| (bit(state.contact[i]) - bit(pose.contact[i])).abs()),
    }
}

pub fn reward_from_error(err: &TrackingError, cfg: &RewardConfig) -> f64 {
    let [wp, wo, wc] = cfg.weights;
    let [kp, ko, kc] = cfg.gains;
    wp * (-kp * err.position[0].hypot(err.position[1])).exp()
        + wo * (-ko * err.orientation.abs()).exp()
        + wc * (-kc * err.contact[0].hypot(err.contact[1])).exp()
}

pub fn reward(state: &SimState, pose: &RefPose, cfg: &RewardConfig) -> (f64, TrackingError) {
    let err = tracking_error(state, pose);
    (reward_from_error(&err, cfg), err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_tracking_is_maximal() {
        let err = TrackingError::default();
        assert_eq!(reward_from_error(&err, &RewardConfig::default()), 1.0);
        assert!((reward_from_error(&err, &RewardConfig::with_contacts()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn position_error_example() {
        let err = TrackingError {
            position: [0.12, 0.16],
            ..Default::default()
        };
        let expected = 0.5 * (-1.0f64).exp() + 0.5;
        assert!((reward_from_error(&err, &RewardConfig::default()) - expected).abs() < 1e-12);
        assert!((expected - 0.6839).abs() < 1e-4);
    }

    #[test]
    fn contact_error_example() {
        let err = TrackingError {
            contact: [1.0, 1.0],
            ..Default::default()
        };
        let expected = 0.7 + 0.3 * (-2.0 * 2f64.sqrt()).exp();
        assert!((reward_from_error(&err, &RewardConfig::with_contacts()) - expected).abs() < 1e-12);
        assert!((expected - 0.7177).abs() < 1e-4);
    }
}
