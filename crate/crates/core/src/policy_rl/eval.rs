//! Normalised mean returns of a trained policy per mode and per transition.

use serde::{Deserialize, Serialize};

use super::rollout::rollout;
use super::train::normalized_return;
use super::PolicyParams;
use crate::adaptive_sampler::{switch_step, EpisodeScript, SWITCH_CLIPS, SWITCH_PHASES};
use crate::biped_sim::EnvConfig;
use crate::error::{Error, Result};
use crate::refmotion::ModeLibrary;
use crate::rng::{rng_from, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mode_names: Vec<String>,
    /// Mean normalised return with the mode held for the whole episode.
    pub mode_returns: Vec<f64>,
    /// `[initial][final]` mean normalised return across switch times.
    pub transition_returns: Vec<Vec<f64>>,
    pub rollouts: usize,
    pub horizon: usize,
}

impl Evaluation {
    pub fn mra_modes(&self) -> f64 {
        self.mode_returns.iter().sum::<f64>() / self.mode_returns.len() as f64
    }

    pub fn mra_transitions(&self) -> f64 {
        let all: Vec<f64> = self.transition_returns.iter().flatten().copied().collect();
        all.iter().sum::<f64>() / all.len() as f64
    }

    pub fn min_mode(&self) -> f64 {
        self.mode_returns.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Switch time used by the `r`-th evaluation rollout of a transition; cycles
/// through every (clip, phase) combination.
pub fn eval_script(initial: usize, final_mode: usize, r: usize, steps_per_cycle: usize, horizon: usize) -> EpisodeScript {
    let phase_index = r % SWITCH_PHASES.len();
    let clip = SWITCH_CLIPS[(r / SWITCH_PHASES.len()) % SWITCH_CLIPS.len()];
    EpisodeScript {
        initial_mode: initial,
        final_mode,
        switch_phase_index: phase_index,
        switch_clip: clip,
        switch_step: switch_step(clip, SWITCH_PHASES[phase_index], steps_per_cycle),
        horizon,
    }
}

/// Deterministic-policy rollouts with small seeded start perturbations.
pub fn evaluate_modes(
    policy: &PolicyParams,
    library: &ModeLibrary,
    env_cfg: &EnvConfig,
    n_rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<Evaluation> {
    if n_rollouts == 0 {
        return Err(Error::invalid("evaluation needs at least one rollout"));
    }
    let n = library.len();
    let spc = env_cfg.robot.steps_per_cycle();
    let mean_over = |i: usize, f: usize| -> Result<f64> {
        let mut total = 0.0;
        for r in 0..n_rollouts {
            let script = eval_script(i, f, r, spc, horizon);
            let mut rng = rng_from(seed, &[stream::EVAL, i as u64, f as u64, r as u64]);
            let tr = rollout(env_cfg, library, policy, None, &script, false, &mut rng)?;
            total += normalized_return(tr.total_return(), horizon, env_cfg);
        }
        Ok(total / n_rollouts as f64)
    };
    let mut transition_returns = vec![vec![0.0; n]; n];
    for (i, row) in transition_returns.iter_mut().enumerate() {
        for (f, cell) in row.iter_mut().enumerate() {
            *cell = mean_over(i, f)?;
        }
    }
    let mode_returns = (0..n).map(|i| transition_returns[i][i]).collect();
    Ok(Evaluation {
        mode_names: library.names().into_iter().map(String::from).collect(),
        mode_returns,
        transition_returns,
        rollouts: n_rollouts,
        horizon,
    })
}
