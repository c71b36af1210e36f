//! Latent-conditioned Gaussian policy and its PPO trainer.

pub mod eval;
pub mod mlp;
pub mod ppo;
pub mod rollout;
pub mod train;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::biped_sim::env::PROPRIO_DIM;
use mlp::Mlp;

pub use eval::{evaluate_modes, Evaluation};
pub use ppo::{gae, ppo_update, surrogate, PpoConfig, PpoLearner, Trajectory, UpdateStats};
pub use rollout::{rollout, EpisodeEnd};
pub use train::{train_policy, TrainConfig, TrainingState, UpdateLog};

pub const ACTION_DIM: usize = 4;
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_INIT_LOG_STD: f64 = -0.7;

/// Fixed per-entry observation scaling for the biped layout: velocities are
/// shrunk so every input is of order one.
pub fn biped_input_scale(latent_dim: usize) -> Vec<f64> {
    let mut s = vec![1.0; 2 + latent_dim];
    let proprio: [f64; PROPRIO_DIM] = [2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.2, 0.1, 0.1, 0.1, 0.1];
    s.extend_from_slice(&proprio);
    s
}

fn scaled(obs: &[f64], scale: &[f64]) -> Vec<f64> {
    obs.iter().zip(scale).map(|(o, s)| o * s).collect()
}

/// Log density of a diagonal Gaussian.
pub fn diag_gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), ls)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

pub fn diag_gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub mean: Mlp,
    /// State-independent log standard deviation per action dimension.
    pub log_std: Vec<f64>,
    pub input_scale: Vec<f64>,
}

impl PolicyParams {
    pub fn new<R: Rng + ?Sized>(input_scale: Vec<f64>, hidden: usize, action_dim: usize, init_log_std: f64, rng: &mut R) -> Self {
        let sizes = [input_scale.len(), hidden, hidden, action_dim];
        Self {
            mean: Mlp::random(&sizes, 0.01, rng),
            log_std: vec![init_log_std; action_dim],
            input_scale,
        }
    }

    pub fn zeros(obs_dim: usize, hidden: usize, action_dim: usize) -> Self {
        Self {
            mean: Mlp::zeros(&[obs_dim, hidden, hidden, action_dim]),
            log_std: vec![0.0; action_dim],
            input_scale: vec![1.0; obs_dim],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    /// Trainable parameters: network weights followed by the log-stds.
    pub fn param_count(&self) -> usize {
        self.mean.params.len() + self.log_std.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.mean.params.clone();
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let n = self.mean.params.len();
        self.mean.params.copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..]);
    }

    pub fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.log_std.iter().all(|v| v.is_finite())
    }

    pub fn scaled_input(&self, obs: &[f64]) -> Vec<f64> {
        scaled(obs, &self.input_scale)
    }

    pub fn mean_action(&self, obs: &[f64]) -> Vec<f64> {
        self.mean.forward(&self.scaled_input(obs))
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> f64 {
        diag_gaussian_log_prob(action, &self.mean_action(obs), &self.log_std)
    }
}

/// Sample (or take the mean of) the action distribution. Returns the action
/// and its log density.
pub fn act<R: Rng + ?Sized>(params: &PolicyParams, obs: &[f64], stochastic: bool, rng: &mut R) -> (Vec<f64>, f64) {
    let mean = params.mean_action(obs);
    let action: Vec<f64> = if stochastic {
        mean.iter()
            .zip(&params.log_std)
            .map(|(m, ls)| {
                let n: f64 = StandardNormal.sample(rng);
                m + ls.exp() * n
            })
            .collect()
    } else {
        mean.clone()
    };
    let lp = diag_gaussian_log_prob(&action, &mean, &params.log_std);
    (action, lp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    pub net: Mlp,
    pub input_scale: Vec<f64>,
}

impl ValueParams {
    pub fn new<R: Rng + ?Sized>(input_scale: Vec<f64>, hidden: usize, rng: &mut R) -> Self {
        let sizes = [input_scale.len(), hidden, hidden, 1];
        Self {
            net: Mlp::random(&sizes, 1.0, rng),
            input_scale,
        }
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.net.forward(&scaled(obs, &self.input_scale))[0]
    }

    pub fn is_finite(&self) -> bool {
        self.net.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn zero_policy_deterministic_action_is_zero() {
        let p = PolicyParams::zeros(19, 8, ACTION_DIM);
        let (a, lp) = act(&p, &[0.3; 19], false, &mut rng_from(0, &[]));
        assert_eq!(a, vec![0.0; 4]);
        assert!((lp - 4.0 * -0.5 * (2.0 * PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_reproducible() {
        let mut init = rng_from(1, &[]);
        let p = PolicyParams::new(biped_input_scale(4), 16, ACTION_DIM, -0.7, &mut init);
        let obs: Vec<f64> = (0..19).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = act(&p, &obs, true, &mut rng_from(9, &[]));
        let b = act(&p, &obs, true, &mut rng_from(9, &[]));
        assert_eq!(a, b);
    }

    #[test]
    fn log_prob_matches_product_of_densities() {
        let mut init = rng_from(2, &[]);
        let mut p = PolicyParams::new(vec![1.0; 6], 8, 3, -0.7, &mut init);
        p.log_std = vec![-0.3, 0.2, -1.1];
        let obs = [0.1, -0.4, 0.9, 0.0, 1.3, -2.0];
        let mut rng = rng_from(4, &[]);
        for _ in 0..20 {
            let (a, lp) = act(&p, &obs, true, &mut rng);
            let mean = p.mean_action(&obs);
            let density: f64 = (0..3)
                .map(|j| {
                    let s = p.log_std[j].exp();
                    (-(a[j] - mean[j]).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
                })
                .product();
            assert!(((lp - density.ln()) / density.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn one_dimensional_density_integrates_to_one() {
        let mean = [0.4];
        let log_std = [-0.7];
        let h = 1e-3;
        let total: f64 = (-6000..6000)
            .map(|i| diag_gaussian_log_prob(&[i as f64 * h], &mean, &log_std).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-3);
    }
}
