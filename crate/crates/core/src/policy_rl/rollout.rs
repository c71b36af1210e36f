//! Scripted episodes: initial mode, switch step, final mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ppo::Trajectory;
use super::{act, PolicyParams, ValueParams, ACTION_DIM};
use crate::adaptive_sampler::EpisodeScript;
use crate::biped_sim::{BipedEnv, EnvConfig, Termination, TraceRow};
use crate::error::{Error, Result};
use crate::refmotion::ModeLibrary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeEnd {
    Horizon,
    Fallen,
    Blowup,
}

/// Run one episode. The latent command is that of the initial mode for
/// `t <= switch_step` and of the final mode afterwards; the reference is
/// rebased on the base position at the switch. A fall or blowup ends the
/// episode with a zero bootstrap value.
pub fn rollout<R: Rng + ?Sized>(
    env_cfg: &EnvConfig,
    library: &ModeLibrary,
    policy: &PolicyParams,
    value: Option<&ValueParams>,
    script: &EpisodeScript,
    stochastic: bool,
    rng: &mut R,
) -> Result<Trajectory> {
    run(env_cfg, library, policy, value, script, stochastic, rng, None)
}

/// As [`rollout`], also recording a per-step trace.
#[allow(clippy::too_many_arguments)]
pub fn rollout_traced<R: Rng + ?Sized>(
    env_cfg: &EnvConfig,
    library: &ModeLibrary,
    policy: &PolicyParams,
    value: Option<&ValueParams>,
    script: &EpisodeScript,
    stochastic: bool,
    rng: &mut R,
) -> Result<(Trajectory, Vec<TraceRow>)> {
    let mut trace = Vec::new();
    let tr = run(env_cfg, library, policy, value, script, stochastic, rng, Some(&mut trace))?;
    Ok((tr, trace))
}

#[allow(clippy::too_many_arguments)]
fn run<R: Rng + ?Sized>(
    env_cfg: &EnvConfig,
    library: &ModeLibrary,
    policy: &PolicyParams,
    value: Option<&ValueParams>,
    script: &EpisodeScript,
    stochastic: bool,
    rng: &mut R,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<Trajectory> {
    script.validate(library.len())?;
    let mut env = BipedEnv::perturbed(env_cfg, library, script.initial_mode, &mut *rng)?;
    if policy.action_dim() != ACTION_DIM {
        return Err(Error::invalid(format!("policy has {} actions, robot needs {ACTION_DIM}", policy.action_dim())));
    }
    let v = |o: &[f64]| value.map_or(0.0, |v| v.value(o));
    let mut tr = Trajectory {
        obs: Vec::with_capacity(script.horizon),
        actions: Vec::with_capacity(script.horizon),
        rewards: Vec::with_capacity(script.horizon),
        log_probs: Vec::with_capacity(script.horizon),
        values: Vec::with_capacity(script.horizon),
        final_obs: Vec::new(),
        bootstrap: 0.0,
        end: EpisodeEnd::Horizon,
        script: *script,
        modes: Vec::with_capacity(script.horizon),
    };
    if let Some(rows) = trace.as_deref_mut() {
        rows.push(TraceRow::new(&env.state, 0.0, env.mode));
    }
    for t in 0..script.horizon {
        env.switch_mode(script.mode_at(t))?;
        let obs = env.observation()?.to_vec();
        if obs.len() != policy.obs_dim() {
            return Err(Error::invalid(format!(
                "observation has {} entries, policy expects {}",
                obs.len(),
                policy.obs_dim()
            )));
        }
        let (action, lp) = act(policy, &obs, stochastic, rng);
        let out = env.step(&[action[0], action[1], action[2], action[3]]);
        tr.values.push(v(&obs));
        tr.obs.push(obs);
        tr.actions.push(action);
        tr.log_probs.push(lp);
        tr.rewards.push(out.reward);
        tr.modes.push(env.mode);
        if let Some(rows) = trace.as_deref_mut() {
            rows.push(TraceRow::new(&env.state, out.reward, env.mode));
        }
        match out.status {
            Termination::Running => {}
            Termination::Fallen => {
                tr.end = EpisodeEnd::Fallen;
                break;
            }
            Termination::Blowup => {
                tr.end = EpisodeEnd::Blowup;
                break;
            }
        }
    }
    if tr.end != EpisodeEnd::Blowup {
        tr.final_obs = env.observation()?.to_vec();
    }
    if tr.end == EpisodeEnd::Horizon {
        tr.bootstrap = v(&tr.final_obs);
    }
    Ok(tr)
}
