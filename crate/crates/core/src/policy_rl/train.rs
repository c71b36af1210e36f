//! Training loop: script sampling, parallel rollouts, record updates and PPO.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ppo::{ppo_update, PpoConfig, PpoLearner, Trajectory};
use super::rollout::{rollout, EpisodeEnd};
use super::{biped_input_scale, PolicyParams, ValueParams, ACTION_DIM, DEFAULT_HIDDEN, DEFAULT_INIT_LOG_STD};
use crate::adaptive_sampler::{uniform_baseline_sampler, SamplerKind, SamplerState};
use crate::biped_sim::EnvConfig;
use crate::error::{Error, Result};
use crate::refmotion::ModeLibrary;
use crate::rng::{rng_from, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub hidden: usize,
    pub init_log_std: f64,
    pub updates: usize,
    pub episodes_per_update: usize,
    pub sampler: SamplerKind,
    pub gamma_mode: f64,
    pub gamma_transition: f64,
    pub epsilon: f64,
    /// Rollout threads; results do not depend on this.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            hidden: DEFAULT_HIDDEN,
            init_log_std: DEFAULT_INIT_LOG_STD,
            updates: 200,
            episodes_per_update: 8,
            sampler: SamplerKind::Adaptive,
            gamma_mode: 0.8,
            gamma_transition: 0.8,
            epsilon: 0.2,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        if self.hidden == 0 || self.episodes_per_update == 0 || self.workers == 0 {
            return Err(Error::invalid("hidden width, episodes per update and workers must be at least 1"));
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::invalid("initial log-std must be finite"));
        }
        SamplerState::new(1, self.gamma_mode, self.gamma_transition, self.epsilon)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub update: usize,
    pub mean_return: f64,
    pub mean_normalized_return: f64,
    pub episodes: usize,
    pub falls: usize,
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub mode_returns: Vec<f64>,
    pub transition_returns: Vec<f64>,
}

/// Everything needed to continue a run: parameters, optimiser moments,
/// sampler records and the update counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub learner: PpoLearner,
    pub sampler: SamplerState,
    pub updates_done: usize,
    pub log: Vec<UpdateLog>,
}

impl TrainingState {
    pub fn fresh(library: &ModeLibrary, cfg: &TrainConfig) -> Result<Self> {
        let latent_dim = library
            .latent_dim()
            .ok_or_else(|| Error::invalid("mode library has no latents; train the encoder first"))?;
        let scale = biped_input_scale(latent_dim);
        let mut rng = rng_from(cfg.ppo.seed, &[stream::POLICY_INIT]);
        let policy = PolicyParams::new(scale.clone(), cfg.hidden, ACTION_DIM, cfg.init_log_std, &mut rng);
        let value = ValueParams::new(scale, cfg.hidden, &mut rng);
        Ok(Self {
            learner: PpoLearner::new(policy, value, cfg.ppo.learning_rate),
            sampler: SamplerState::new(library.len(), cfg.gamma_mode, cfg.gamma_transition, cfg.epsilon)?,
            updates_done: 0,
            log: Vec::new(),
        })
    }
}

pub fn normalized_return(total: f64, horizon: usize, env_cfg: &EnvConfig) -> f64 {
    total / (horizon as f64 * env_cfg.reward.max_step_reward())
}

/// Train until `cfg.updates` updates are done, starting from `resume` when
/// given. `on_update` runs after every update (e.g. to checkpoint). Every
/// random draw is keyed on the seed and update index, so a resumed run
/// reproduces an uninterrupted one exactly.
pub fn train_policy(
    library: &ModeLibrary,
    env_cfg: &EnvConfig,
    cfg: &TrainConfig,
    resume: Option<TrainingState>,
    mut on_update: impl FnMut(&TrainingState) -> Result<()>,
) -> Result<TrainingState> {
    cfg.validate()?;
    env_cfg.validate()?;
    library.validate()?;
    let mut state = match resume {
        Some(s) => {
            s.sampler.validate()?;
            if s.sampler.n_modes() != library.len() {
                return Err(Error::invalid("checkpoint was trained on a different number of modes"));
            }
            s
        }
        None => TrainingState::fresh(library, cfg)?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let spc = env_cfg.robot.steps_per_cycle();
    let horizon = cfg.ppo.horizon;
    let seed = cfg.ppo.seed;
    while state.updates_done < cfg.updates {
        let u = state.updates_done as u64;
        let mut script_rng = rng_from(seed, &[stream::SCRIPTS, u]);
        let scripts: Vec<_> = (0..cfg.episodes_per_update)
            .map(|_| match cfg.sampler {
                SamplerKind::Adaptive => state.sampler.sample_script(spc, horizon, &mut script_rng),
                SamplerKind::Uniform => uniform_baseline_sampler(library.len(), spc, horizon, &mut script_rng),
            })
            .collect();
        let learner = &state.learner;
        let trajs: Vec<Trajectory> = pool.install(|| {
            scripts
                .par_iter()
                .enumerate()
                .map(|(e, script)| {
                    let mut rng = rng_from(seed, &[stream::EPISODE, u, e as u64]);
                    rollout(env_cfg, library, &learner.policy, Some(&learner.value), script, true, &mut rng)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for tr in &trajs {
            state.sampler.update_records(&tr.script, tr.total_return());
        }
        let mut mb_rng = rng_from(seed, &[stream::MINIBATCH, u]);
        let (learner, stats) = ppo_update(&state.learner, &trajs, &cfg.ppo, &mut mb_rng)?;
        state.learner = learner;
        state.updates_done += 1;
        let norm: f64 = trajs
            .iter()
            .map(|t| normalized_return(t.total_return(), horizon, env_cfg))
            .sum::<f64>()
            / trajs.len() as f64;
        let entry = UpdateLog {
            update: state.updates_done,
            mean_return: stats.mean_return,
            mean_normalized_return: norm,
            episodes: trajs.len(),
            falls: trajs.iter().filter(|t| t.end != EpisodeEnd::Horizon).count(),
            surrogate: stats.surrogate,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            mode_returns: state.sampler.mode_returns.clone(),
            transition_returns: state.sampler.transition_returns.clone(),
        };
        log::info!(
            "update {} return {:.3} normalized {:.3} falls {}/{}",
            entry.update,
            entry.mean_return,
            entry.mean_normalized_return,
            entry.falls,
            entry.episodes
        );
        state.log.push(entry);
        on_update(&state)?;
    }
    Ok(state)
}
