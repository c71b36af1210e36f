//! Command-level operations behind the `mmloco` binary.
//!
//! Each command reads a [`RunConfig`], writes its artifacts under
//! `out_dir`, and stamps them with the tool version and a hash of the
//! configuration that produced them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::{self, Header};
use crate::biped_sim::env::{trace_to_csv, TraceRow, TRACE_KIND};
use crate::biped_sim::robot::dof;
use crate::biped_sim::{EnvConfig, RewardConfig, Terrain};
use crate::error::{Error, Result};
use crate::mode_encoder::{self, EncoderTrainConfig, ModeEncoder};
use crate::mode_planner::{parallel_trials, ModePlan, PlannerConfig, SimPlanEvaluator};
use crate::policy_rl::eval::eval_script;
use crate::policy_rl::rollout::rollout_traced;
use crate::policy_rl::{evaluate_modes, train_policy, Evaluation, PolicyParams, TrainConfig, TrainingState};
use crate::refmotion::{builtin_modeset, ModeLibrary, ModeSetDef, MODESET_SELECTORS};
use crate::rng::rng_from;

/// Environment variable that overrides the default output root.
pub const OUT_ENV: &str = "MMLOCO_OUT";
pub const DEFAULT_OUT: &str = "runs";

pub const POLICY_KIND: &str = "policy";
pub const CHECKPOINT_KIND: &str = "training_checkpoint";
pub const EVAL_KIND: &str = "evaluation";
pub const TRAIN_LOG_KIND: &str = "training_log";
pub const ENCODER_LOSS_KIND: &str = "encoder_loss";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Rollouts per (initial, final) pair; cycles through the switch times.
    pub rollouts: usize,
    pub horizon: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            rollouts: 6,
            horizon: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Built-in mode-set selector, or a path to a mode-set TOML file.
    pub modeset: String,
    /// Library file to read; defaults to `<out_dir>/library.json`.
    pub library: Option<PathBuf>,
    pub encoder: EncoderTrainConfig,
    pub train: TrainConfig,
    pub reward: RewardConfig,
    /// Terrain preset name or TOML file.
    pub terrain: String,
    pub clock_rate: f64,
    pub eval: EvalConfig,
    pub planner: PlannerConfig,
    /// Write a resumable checkpoint every this many updates (0 disables).
    pub checkpoint_every: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            modeset: "pi2".into(),
            library: None,
            encoder: EncoderTrainConfig::default(),
            train: TrainConfig::default(),
            reward: RewardConfig::default(),
            terrain: "flat".into(),
            clock_rate: 1.0,
            eval: EvalConfig::default(),
            planner: PlannerConfig::default(),
            checkpoint_every: 10,
            seed: 0,
            out_dir: default_out_dir(),
        }
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Reward weights of the built-in presets.
pub fn preset_reward(selector: &str) -> Option<RewardConfig> {
    match selector {
        "pi1" | "pi2" | "idle_walk" => Some(RewardConfig::default()),
        "pi3" => Some(RewardConfig::with_contacts()),
        _ => None,
    }
}

impl RunConfig {
    pub fn for_modeset(selector: &str) -> Self {
        Self {
            modeset: selector.into(),
            reward: preset_reward(selector).unwrap_or_default(),
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&artifact::read_text(path)?, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config is serialisable")
    }

    /// Propagate the root seed into every stage.
    pub fn seeded(mut self) -> Self {
        self.encoder.seed = self.seed;
        self.train.ppo.seed = self.seed;
        self.planner.seed = self.seed;
        self
    }

    pub fn hash(&self) -> String {
        artifact::config_hash(self)
    }

    pub fn library_path(&self) -> PathBuf {
        self.library.clone().unwrap_or_else(|| self.out_dir.join("library.json"))
    }

    pub fn modeset_def(&self) -> Result<ModeSetDef> {
        let path = Path::new(&self.modeset);
        if MODESET_SELECTORS.contains(&self.modeset.as_str()) || !path.exists() {
            builtin_modeset(&self.modeset)
        } else {
            ModeSetDef::load(path)
        }
    }

    pub fn terrain(&self) -> Result<Terrain> {
        let path = Path::new(&self.terrain);
        if path.extension().is_some() || path.exists() {
            Terrain::load(path)
        } else {
            Terrain::preset(&self.terrain)
        }
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let env = EnvConfig {
            reward: self.reward.clone(),
            terrain: self.terrain()?,
            clock_rate: self.clock_rate,
            ..EnvConfig::default()
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.train.validate()?;
        self.reward.validate()?;
        self.planner.validate()?;
        if self.eval.rollouts == 0 || self.eval.horizon == 0 {
            return Err(Error::invalid("evaluation needs at least one rollout and one step"));
        }
        if let Some(lib) = &self.library {
            if !lib.exists() {
                return Err(Error::invalid(format!("library file {} does not exist", lib.display())));
            }
        }
        let def = self.modeset_def()?;
        // A contact term needs contact schedules to imitate.
        if self.reward.weights[2] > 0.0 && def.modes.iter().any(|m| m.contacts.is_none()) {
            return Err(Error::invalid(format!(
                "reward weight on contacts is {} but mode set `{}` has modes without contact schedules",
                self.reward.weights[2], self.modeset
            )));
        }
        if let Some(preset) = preset_reward(&self.modeset) {
            if preset.weights != self.reward.weights {
                log::warn!(
                    "reward weights {:?} differ from the `{}` preset {:?}",
                    self.reward.weights,
                    self.modeset,
                    preset.weights
                );
            }
        }
        self.env_config()?;
        Ok(())
    }
}

fn header(cfg: &RunConfig, kind: &str) -> Header {
    Header::new(kind, &cfg.hash())
}

/// Build the reference library and write `<out_dir>/library.json`.
pub fn cmd_gen_refs(cfg: &RunConfig) -> Result<PathBuf> {
    let def = cfg.modeset_def()?;
    let library = def.build()?;
    let path = cfg.out_dir.join("library.json");
    library.save(&path, &artifact::config_hash(&def))?;
    log::info!("wrote {} modes to {}", library.len(), path.display());
    Ok(path)
}

pub struct EncoderOutputs {
    pub encoder: PathBuf,
    pub library: PathBuf,
    pub loss_log: PathBuf,
    pub final_loss: f64,
}

/// Train the autoencoder, write the encoder and the loss log, and store the
/// latents in the library file.
pub fn cmd_train_encoder(cfg: &RunConfig) -> Result<EncoderOutputs> {
    let lib_path = cfg.library_path();
    let library = ModeLibrary::load(&lib_path)?;
    let trained = mode_encoder::train_autoencoder(&library, &cfg.encoder)?;
    let hash = cfg.hash();
    let encoder = cfg.out_dir.join("encoder.json");
    trained.model.save(&encoder, &hash)?;
    trained.library.save(&lib_path, &hash)?;
    let mut csv = artifact::csv_preamble(&header(cfg, ENCODER_LOSS_KIND));
    csv.push_str("epoch,loss\n");
    for (i, l) in trained.loss_history.iter().enumerate() {
        let _ = writeln!(csv, "{},{}", i + 1, l);
    }
    let loss_log = cfg.out_dir.join("encoder_loss.csv");
    artifact::write_text(&loss_log, &csv)?;
    log::info!("encoder final loss {:.3e}", trained.final_loss);
    Ok(EncoderOutputs {
        encoder,
        library: lib_path,
        loss_log,
        final_loss: trained.final_loss,
    })
}

pub fn load_encoder(path: &Path) -> Result<ModeEncoder> {
    ModeEncoder::load(path)
}

pub fn save_policy(path: &Path, policy: &PolicyParams, hash: &str) -> Result<()> {
    artifact::write_json(path, &Header::new(POLICY_KIND, hash), policy)
}

pub fn load_policy(path: &Path) -> Result<PolicyParams> {
    let (_, p): (_, PolicyParams) = artifact::read_json(path, POLICY_KIND)?;
    if !p.is_finite() {
        return Err(Error::invalid(format!("policy in {} has non-finite parameters", path.display())));
    }
    Ok(p)
}

pub fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("checkpoint.json")
}

pub fn load_checkpoint(path: &Path) -> Result<TrainingState> {
    Ok(artifact::read_json::<TrainingState>(path, CHECKPOINT_KIND)?.1)
}

/// Column names of the training log. `R_i[m]` and `R_f[i][f]` are the
/// sampler records after the update.
pub fn train_log_columns(names: &[String]) -> Vec<String> {
    let mut cols: Vec<String> = [
        "update",
        "mean_return",
        "mean_normalized_return",
        "episodes",
        "falls",
        "surrogate",
        "value_loss",
        "entropy",
        "approx_kl",
    ]
    .map(String::from)
    .to_vec();
    cols.extend(names.iter().map(|n| format!("R_i[{n}]")));
    for a in names {
        cols.extend(names.iter().map(|b| format!("R_f[{a}][{b}]")));
    }
    cols
}

pub fn train_log_csv(state: &TrainingState, names: &[String], header: &Header) -> String {
    let mut out = artifact::csv_preamble(header);
    out.push_str(&train_log_columns(names).join(","));
    out.push('\n');
    for e in &state.log {
        let mut f = vec![e.update.to_string(), e.mean_return.to_string(), e.mean_normalized_return.to_string()];
        f.push(e.episodes.to_string());
        f.push(e.falls.to_string());
        for v in [e.surrogate, e.value_loss, e.entropy, e.approx_kl] {
            f.push(v.to_string());
        }
        f.extend(e.mode_returns.iter().chain(&e.transition_returns).map(|v| v.to_string()));
        out.push_str(&f.join(","));
        out.push('\n');
    }
    out
}

pub struct PolicyOutputs {
    pub policy: PathBuf,
    pub log: PathBuf,
    pub state: TrainingState,
}

/// Train the latent-conditioned policy. With `resume`, training continues
/// from `<out_dir>/checkpoint.json` when it exists.
pub fn cmd_train_policy(cfg: &RunConfig, resume: bool) -> Result<PolicyOutputs> {
    let library = ModeLibrary::load(&cfg.library_path())?;
    if !library.has_latents() {
        return Err(Error::invalid("library has no latents; run train-encoder first"));
    }
    let env = cfg.env_config()?;
    let ckpt = checkpoint_path(cfg);
    let start = if resume && ckpt.exists() {
        let s = load_checkpoint(&ckpt)?;
        log::info!("resuming from update {}", s.updates_done);
        Some(s)
    } else {
        None
    };
    let ckpt_header = header(cfg, CHECKPOINT_KIND);
    let every = cfg.checkpoint_every;
    let state = train_policy(&library, &env, &cfg.train, start, |s| {
        if every > 0 && s.updates_done % every == 0 {
            artifact::write_json(&ckpt, &ckpt_header, s)?;
        }
        Ok(())
    })?;
    if every > 0 {
        artifact::write_json(&ckpt, &ckpt_header, &state)?;
    }
    let hash = cfg.hash();
    let policy = cfg.out_dir.join("policy.json");
    save_policy(&policy, &state.learner.policy, &hash)?;
    let names: Vec<String> = library.names().into_iter().map(String::from).collect();
    let log = cfg.out_dir.join("train_log.csv");
    artifact::write_text(&log, &train_log_csv(&state, &names, &header(cfg, TRAIN_LOG_KIND)))?;
    Ok(PolicyOutputs { policy, log, state })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightGap {
    pub a: String,
    pub b: String,
    /// Mean |z_a(t) − z_b(t)| over the first cycle.
    pub mean_abs_dz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub evaluation: Evaluation,
    pub mra_modes: f64,
    pub mra_transitions: f64,
    pub clock_rate: f64,
    /// Mean forward base velocity while holding each mode.
    pub heading_velocity: Vec<f64>,
    pub height_gaps: Vec<HeightGap>,
}

fn mean_abs_dz(a: &[TraceRow], b: &[TraceRow], steps: usize) -> f64 {
    let n = a.len().min(b.len()).min(steps + 1);
    if n == 0 {
        return 0.0;
    }
    a.iter().zip(b).take(n).map(|(p, q)| (p.q[dof::Z] - q.q[dof::Z]).abs()).sum::<f64>() / n as f64
}

/// Evaluate a policy on every mode and transition; also writes one trace
/// CSV per held mode.
pub fn evaluate_policy(cfg: &RunConfig, library: &ModeLibrary, policy: &PolicyParams) -> Result<EvalReport> {
    let env = cfg.env_config()?;
    let horizon = cfg.eval.horizon;
    let evaluation = evaluate_modes(policy, library, &env, cfg.eval.rollouts, horizon, cfg.seed)?;
    let spc = env.robot.steps_per_cycle();
    let mut traces = Vec::new();
    let mut heading_velocity = Vec::new();
    for m in 0..library.len() {
        let script = eval_script(m, m, 0, spc, horizon);
        let mut rng = rng_from(cfg.seed, &[]);
        let (_, trace) = rollout_traced(&env, library, policy, None, &script, false, &mut rng)?;
        let (first, last) = (&trace[0], &trace[trace.len() - 1]);
        let elapsed = last.t - first.t;
        heading_velocity.push(if elapsed > 0.0 {
            (last.q[dof::X] - first.q[dof::X]) / elapsed
        } else {
            0.0
        });
        traces.push(trace);
    }
    let names = evaluation.mode_names.clone();
    let mut height_gaps = Vec::new();
    for a in 0..names.len() {
        for b in a + 1..names.len() {
            height_gaps.push(HeightGap {
                a: names[a].clone(),
                b: names[b].clone(),
                mean_abs_dz: mean_abs_dz(&traces[a], &traces[b], spc),
            });
        }
    }
    let trace_header = header(cfg, TRACE_KIND);
    for (name, trace) in names.iter().zip(&traces) {
        artifact::write_text(
            &cfg.out_dir.join(format!("trace_{name}.csv")),
            &trace_to_csv(trace, &trace_header),
        )?;
    }
    Ok(EvalReport {
        mra_modes: evaluation.mra_modes(),
        mra_transitions: evaluation.mra_transitions(),
        evaluation,
        clock_rate: cfg.clock_rate,
        heading_velocity,
        height_gaps,
    })
}

pub fn policy_path(cfg: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_dir.join("policy.json"))
}

/// Write `<out_dir>/eval.json` and the per-mode traces.
pub fn cmd_eval(cfg: &RunConfig, policy: Option<&Path>) -> Result<(PathBuf, EvalReport)> {
    let library = ModeLibrary::load(&cfg.library_path())?;
    let policy = load_policy(&policy_path(cfg, policy))?;
    let report = evaluate_policy(cfg, &library, &policy)?;
    let path = cfg.out_dir.join("eval.json");
    artifact::write_json(&path, &header(cfg, EVAL_KIND), &report)?;
    log::info!("MRA modes {:.3} transitions {:.3}", report.mra_modes, report.mra_transitions);
    Ok((path, report))
}

pub struct PlanOutputs {
    pub plan_path: PathBuf,
    pub trace_path: PathBuf,
    pub plan: ModePlan,
}

/// Search a mode plan on the configured terrain; writes the plan and the
/// trace of executing it.
pub fn cmd_plan(cfg: &RunConfig, policy: Option<&Path>) -> Result<PlanOutputs> {
    let library = ModeLibrary::load(&cfg.library_path())?;
    let policy = load_policy(&policy_path(cfg, policy))?;
    let env = cfg.env_config()?;
    let ev = SimPlanEvaluator {
        env: &env,
        library: &library,
        policy: &policy,
        goal: cfg.planner.goal,
        knot_dt: cfg.planner.knot_dt,
    };
    let res = parallel_trials(&ev, &cfg.planner)?;
    let best = res.best;
    let names: Vec<String> = library.names().into_iter().map(String::from).collect();
    let plan = ModePlan::new(&best.plan, &names, &cfg.planner, best.knot_rewards.clone());
    let hash = cfg.hash();
    let plan_path = cfg.out_dir.join("plan.json");
    plan.save(&plan_path, &hash)?;
    let (_, trace) = ev.evaluate_traced(&best.plan)?;
    let trace_path = cfg.out_dir.join("plan_trace.csv");
    artifact::write_text(&trace_path, &trace_to_csv(&trace, &header(cfg, TRACE_KIND)))?;
    log::info!(
        "plan return {:.3} after {} trials in {:.2} s",
        plan.plan_return,
        cfg.planner.trials,
        res.solve_seconds
    );
    Ok(PlanOutputs {
        plan_path,
        trace_path,
        plan,
    })
}
