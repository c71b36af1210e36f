use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mmloco::adaptive_sampler::SamplerKind;
use mmloco::pipeline::{self, RunConfig, OUT_ENV};

/// Multimodal biped locomotion: reference generation, mode encoding, policy
/// training, evaluation and mode planning.
#[derive(Parser, Debug)]
#[command(name = "mmloco", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the reference-motion library for a mode set.
    GenRefs(Common),
    /// Train the mode autoencoder and store latents in the library.
    TrainEncoder(Common),
    /// Train the latent-conditioned policy with PPO.
    TrainPolicy {
        #[command(flatten)]
        common: Common,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate normalised returns over all modes and transitions.
    Eval(Common),
    /// Search a mode plan for a goal on a terrain.
    Plan(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML), e.g. configs/pi2.cfg.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mode-set selector (pi1, pi2, pi3, idle_walk) or mode-set TOML file.
    #[arg(long)]
    modeset: Option<String>,
    /// Output directory.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// adaptive | uniform
    #[arg(long)]
    sampler: Option<SamplerKind>,
    #[arg(long)]
    gamma_i: Option<f64>,
    #[arg(long)]
    gamma_f: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    clock_rate: Option<f64>,
    /// Terrain preset (flat, gap, plateau, gap_block) or terrain TOML file.
    #[arg(long)]
    terrain: Option<String>,
    #[arg(long)]
    knots: Option<usize>,
    /// Knot duration in seconds.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    goal_x: Option<f64>,
    #[arg(long)]
    goal_z: Option<f64>,
    /// Policy updates.
    #[arg(long)]
    updates: Option<usize>,
    #[arg(long)]
    episodes_per_update: Option<usize>,
    /// Encoder epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Planner episodes per trial.
    #[arg(long)]
    plan_episodes: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::for_modeset(self.modeset.as_deref().unwrap_or("pi2")),
        };
        if let Some(m) = &self.modeset {
            cfg.modeset = m.clone();
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(l) = &self.library {
            cfg.library = Some(l.clone());
        }
        if let Some(s) = self.sampler {
            cfg.train.sampler = s;
        }
        set(&mut cfg.train.gamma_mode, self.gamma_i);
        set(&mut cfg.train.gamma_transition, self.gamma_f);
        set(&mut cfg.train.epsilon, self.epsilon);
        set(&mut cfg.clock_rate, self.clock_rate);
        if let Some(t) = &self.terrain {
            cfg.terrain = t.clone();
        }
        set(&mut cfg.planner.knots, self.knots);
        set(&mut cfg.planner.knot_dt, self.dt);
        set(&mut cfg.planner.goal[0], self.goal_x);
        set(&mut cfg.planner.goal[1], self.goal_z);
        set(&mut cfg.train.updates, self.updates);
        set(&mut cfg.train.episodes_per_update, self.episodes_per_update);
        set(&mut cfg.encoder.epochs, self.epochs);
        set(&mut cfg.planner.episodes, self.plan_episodes);
        set(&mut cfg.planner.trials, self.trials);
        set(&mut cfg.train.workers, self.workers);
        set(&mut cfg.seed, self.seed);
        let cfg = cfg.seeded();
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenRefs(c) => {
            let cfg = c.resolve()?;
            let path = pipeline::cmd_gen_refs(&cfg)?;
            println!("{}", path.display());
        }
        Command::TrainEncoder(c) => {
            let cfg = c.resolve()?;
            let out = pipeline::cmd_train_encoder(&cfg)?;
            println!("encoder {} loss {:.3e}", out.encoder.display(), out.final_loss);
        }
        Command::TrainPolicy { common, resume } => {
            let cfg = common.resolve()?;
            let out = pipeline::cmd_train_policy(&cfg, resume)?;
            let last = out.state.log.last().context("training ran no updates")?;
            println!(
                "policy {} after {} updates, normalized return {:.3}",
                out.policy.display(),
                out.state.updates_done,
                last.mean_normalized_return
            );
        }
        Command::Eval(c) => {
            let cfg = c.resolve()?;
            let (path, report) = pipeline::cmd_eval(&cfg, c.policy.as_deref())?;
            for (name, r) in report.evaluation.mode_names.iter().zip(&report.evaluation.mode_returns) {
                println!("{name:>10} {r:.3}");
            }
            println!(
                "MRA modes {:.3} transitions {:.3} -> {}",
                report.mra_modes,
                report.mra_transitions,
                path.display()
            );
        }
        Command::Plan(c) => {
            let cfg = c.resolve()?;
            let out = pipeline::cmd_plan(&cfg, c.policy.as_deref())?;
            let names: Vec<&str> = out.plan.knots.iter().map(|k| k.mode_name.as_str()).collect();
            println!("{}", names.join(" "));
            println!("return {:.3} -> {}", out.plan.plan_return, out.plan_path.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<mmloco::Error>())
        .map_or(2, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
