//! Clipped-surrogate PPO with GAE over flat parameter vectors.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rollout::EpisodeEnd;
use super::{diag_gaussian_entropy, PolicyParams, ValueParams};
use crate::adam::{clip_global_norm, Adam};
use crate::adaptive_sampler::EpisodeScript;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Episode length in control steps.
    pub horizon: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_ratio: 0.2,
            epochs: 4,
            minibatches: 4,
            learning_rate: 3e-4,
            entropy_coef: 0.0,
            max_grad_norm: 1.0,
            horizon: 200,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.gamma) || !unit(self.lambda) {
            return Err(Error::invalid("PPO discount and GAE lambda must lie in (0, 1]"));
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio.is_finite()) {
            return Err(Error::invalid("PPO clip ratio must be positive"));
        }
        if self.epochs == 0 || self.minibatches == 0 || self.horizon == 0 {
            return Err(Error::invalid("PPO epochs, minibatches and horizon must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("PPO learning rate must be positive"));
        }
        if !(self.entropy_coef >= 0.0 && self.max_grad_norm > 0.0) {
            return Err(Error::invalid("entropy coefficient must be >= 0 and gradient norm cap > 0"));
        }
        Ok(())
    }
}

/// One episode: `obs[t]`, `actions[t]`, `rewards[t]` for `t < T`, plus the
/// final observation and the value used to bootstrap past it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub final_obs: Vec<f64>,
    /// Zero after a fall or blowup, `V(o_T)` when the horizon was reached.
    pub bootstrap: f64,
    pub end: EpisodeEnd,
    pub script: EpisodeScript,
    /// Commanded mode at each step.
    pub modes: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rewards.len();
        if [self.obs.len(), self.actions.len(), self.log_probs.len(), self.values.len(), self.modes.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::invalid("trajectory fields have inconsistent lengths"));
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("trajectory contains non-finite rewards"));
        }
        Ok(())
    }
}

/// Generalized advantage estimates and the matching value targets.
pub fn gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Flattened samples for one update.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn from_trajectories(trajs: &[Trajectory], gamma: f64, lambda: f64) -> Self {
        let mut b = Batch::default();
        for tr in trajs {
            let (adv, ret) = gae(&tr.rewards, &tr.values, tr.bootstrap, gamma, lambda);
            b.obs.extend(tr.obs.iter().cloned());
            b.actions.extend(tr.actions.iter().cloned());
            b.old_log_probs.extend_from_slice(&tr.log_probs);
            b.advantages.extend(adv);
            b.returns.extend(ret);
        }
        b
    }

    /// Standardise advantages to zero mean and unit variance.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n == 0.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for a in &mut self.advantages {
            *a = (*a - mean) / (std + 1e-8);
        }
    }
}

/// Clipped surrogate plus entropy bonus, averaged over `idx`, and its
/// gradient with respect to [`PolicyParams::flat`]. Also returns the fraction
/// of samples whose ratio was clipped.
fn surrogate_on(policy: &PolicyParams, batch: &Batch, idx: &[usize], clip: f64, entropy_coef: f64) -> (f64, Vec<f64>, f64) {
    let n_net = policy.mean.params.len();
    let mut grad = vec![0.0; policy.param_count()];
    let mut obj = 0.0;
    let mut clipped = 0usize;
    let inv_std: Vec<f64> = policy.log_std.iter().map(|ls| (-ls).exp()).collect();
    for &i in idx {
        let cache = policy.mean.forward_cached(&policy.scaled_input(&batch.obs[i]));
        let mean = cache.output();
        let z: Vec<f64> = batch.actions[i].iter().zip(mean).zip(&inv_std).map(|((a, m), is)| (a - m) * is).collect();
        let lp = super::diag_gaussian_log_prob(&batch.actions[i], mean, &policy.log_std);
        let ratio = (lp - batch.old_log_probs[i]).exp();
        let a = batch.advantages[i];
        let unclipped = ratio * a;
        let clipped_term = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        obj += unclipped.min(clipped_term);
        if unclipped <= clipped_term {
            let coef = ratio * a;
            let d_mean: Vec<f64> = z.iter().zip(&inv_std).map(|(z, is)| coef * z * is).collect();
            policy.mean.backward(&cache, &d_mean, &mut grad[..n_net]);
            for (j, zj) in z.iter().enumerate() {
                grad[n_net + j] += coef * (zj * zj - 1.0);
            }
        } else {
            clipped += 1;
        }
    }
    let count = idx.len() as f64;
    obj /= count;
    grad.iter_mut().for_each(|g| *g /= count);
    obj += entropy_coef * diag_gaussian_entropy(&policy.log_std);
    for g in &mut grad[n_net..] {
        *g += entropy_coef;
    }
    (obj, grad, clipped as f64 / count)
}

/// Surrogate objective and gradient over a whole sample set.
pub fn surrogate(
    policy: &PolicyParams,
    obs: &[Vec<f64>],
    actions: &[Vec<f64>],
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
    entropy_coef: f64,
) -> (f64, Vec<f64>) {
    let batch = Batch {
        obs: obs.to_vec(),
        actions: actions.to_vec(),
        old_log_probs: old_log_probs.to_vec(),
        advantages: advantages.to_vec(),
        returns: vec![0.0; obs.len()],
    };
    let idx: Vec<usize> = (0..obs.len()).collect();
    let (obj, grad, _) = surrogate_on(policy, &batch, &idx, clip, entropy_coef);
    (obj, grad)
}

/// Mean `½ (V − R)²` over `idx` and its gradient.
fn value_loss_on(value: &ValueParams, batch: &Batch, idx: &[usize]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; value.net.params.len()];
    let mut loss = 0.0;
    let count = idx.len() as f64;
    for &i in idx {
        let x: Vec<f64> = batch.obs[i].iter().zip(&value.input_scale).map(|(o, s)| o * s).collect();
        let cache = value.net.forward_cached(&x);
        let err = cache.output()[0] - batch.returns[i];
        loss += 0.5 * err * err;
        value.net.backward(&cache, &[err / count], &mut grad);
    }
    (loss / count, grad)
}

/// Policy, value function and their optimiser states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoLearner {
    pub policy: PolicyParams,
    pub value: ValueParams,
    pub policy_opt: Adam,
    pub value_opt: Adam,
}

impl PpoLearner {
    pub fn new(policy: PolicyParams, value: ValueParams, learning_rate: f64) -> Self {
        Self {
            policy_opt: Adam::new(policy.param_count(), learning_rate),
            value_opt: Adam::new(value.net.params.len(), learning_rate),
            policy,
            value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReturn {
    pub initial_mode: usize,
    pub final_mode: usize,
    pub mean_return: f64,
    pub episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub mean_return: f64,
    pub episode_returns: Vec<f64>,
    pub pair_returns: Vec<PairReturn>,
    pub samples: usize,
}

/// One PPO update over `trajs`. The input learner is untouched; a non-finite
/// loss, gradient or parameter aborts the update with an error.
pub fn ppo_update<R: Rng + ?Sized>(
    learner: &PpoLearner,
    trajs: &[Trajectory],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<(PpoLearner, UpdateStats)> {
    if trajs.is_empty() {
        return Err(Error::invalid("PPO update needs at least one trajectory"));
    }
    for tr in trajs {
        tr.validate()?;
    }
    let mut batch = Batch::from_trajectories(trajs, cfg.gamma, cfg.lambda);
    if batch.is_empty() {
        return Err(Error::invalid("PPO update needs at least one sample"));
    }
    batch.normalize_advantages();
    let mut next = learner.clone();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let chunk = batch.len().div_ceil(cfg.minibatches);
    let (mut obj_sum, mut vloss_sum, mut clip_sum, mut steps) = (0.0, 0.0, 0.0, 0usize);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(chunk) {
            let (obj, mut g, clip_frac) = surrogate_on(&next.policy, &batch, idx, cfg.clip_ratio, cfg.entropy_coef);
            let (vloss, mut vg) = value_loss_on(&next.value, &batch, idx);
            let finite = obj.is_finite() && vloss.is_finite() && g.iter().chain(&vg).all(|v| v.is_finite());
            if !finite {
                return Err(Error::TrainingFailure(format!(
                    "non-finite PPO loss in epoch {epoch} (surrogate {obj}, value loss {vloss})"
                )));
            }
            g.iter_mut().for_each(|v| *v = -*v);
            clip_global_norm(&mut g, cfg.max_grad_norm);
            clip_global_norm(&mut vg, cfg.max_grad_norm);
            let mut flat = next.policy.flat();
            next.policy_opt.apply(&mut flat, &g);
            next.policy.set_flat(&flat);
            next.value_opt.apply(&mut next.value.net.params, &vg);
            obj_sum += obj;
            vloss_sum += vloss;
            clip_sum += clip_frac;
            steps += 1;
        }
    }
    if !next.policy.is_finite() || !next.value.is_finite() {
        return Err(Error::TrainingFailure("PPO update produced non-finite parameters".into()));
    }
    let approx_kl = batch
        .obs
        .iter()
        .zip(&batch.actions)
        .zip(&batch.old_log_probs)
        .map(|((o, a), old)| old - next.policy.log_prob(o, a))
        .sum::<f64>()
        / batch.len() as f64;
    let episode_returns: Vec<f64> = trajs.iter().map(Trajectory::total_return).collect();
    let mut pairs: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for (tr, r) in trajs.iter().zip(&episode_returns) {
        let e = pairs.entry((tr.script.initial_mode, tr.script.final_mode)).or_default();
        e.0 += r;
        e.1 += 1;
    }
    let stats = UpdateStats {
        surrogate: obj_sum / steps as f64,
        value_loss: vloss_sum / steps as f64,
        entropy: diag_gaussian_entropy(&next.policy.log_std),
        approx_kl,
        clip_fraction: clip_sum / steps as f64,
        mean_return: episode_returns.iter().sum::<f64>() / trajs.len() as f64,
        pair_returns: pairs
            .into_iter()
            .map(|((i, f), (sum, n))| PairReturn {
                initial_mode: i,
                final_mode: f,
                mean_return: sum / n as f64,
                episodes: n,
            })
            .collect(),
        episode_returns,
        samples: batch.len(),
    };
    Ok((next, stats))
}
