//! Plan evaluators: the trained policy in the simulator, and a kinematic stub
//! with known optimum for checking the planner itself.

use crate::biped_sim::robot::dof;
use crate::biped_sim::{BipedEnv, EnvConfig, Termination, TraceRow};
use crate::error::{Error, Result};
use crate::policy_rl::{act, PolicyParams};
use crate::refmotion::ModeLibrary;
use crate::rng::rng_from;

/// Per-step goal reward `exp(−‖goal − p‖)` on the planar base position.
pub fn goal_reward(goal: [f64; 2], pos: [f64; 2]) -> f64 {
    (-(goal[0] - pos[0]).hypot(goal[1] - pos[1])).exp()
}

/// Executes a whole plan open loop and reports the reward collected during
/// each knot. Implementations see only the plan, never intermediate state.
pub trait PlanEvaluator: Sync {
    fn n_modes(&self) -> usize;
    fn evaluate(&self, plan: &[usize]) -> Result<Vec<f64>>;
}

fn check_plan(plan: &[usize], n: usize) -> Result<()> {
    if plan.iter().any(|&m| m >= n) {
        return Err(Error::invalid(format!("plan {plan:?} names a mode outside 0..{n}")));
    }
    Ok(())
}

/// One-dimensional stand-in: each mode moves the base at a fixed forward
/// speed and holds a fixed height.
#[derive(Clone, Debug, PartialEq)]
pub struct StubEvaluator {
    pub velocities: Vec<f64>,
    pub heights: Vec<f64>,
    pub goal: [f64; 2],
    pub steps_per_knot: usize,
    pub control_dt: f64,
}

impl StubEvaluator {
    pub fn new(velocities: Vec<f64>, heights: Vec<f64>, goal: [f64; 2], steps_per_knot: usize, control_dt: f64) -> Self {
        assert_eq!(velocities.len(), heights.len());
        Self {
            velocities,
            heights,
            goal,
            steps_per_knot,
            control_dt,
        }
    }
}

impl PlanEvaluator for StubEvaluator {
    fn n_modes(&self) -> usize {
        self.velocities.len()
    }

    fn evaluate(&self, plan: &[usize]) -> Result<Vec<f64>> {
        check_plan(plan, self.n_modes())?;
        let mut x = 0.0;
        Ok(plan
            .iter()
            .map(|&m| {
                (0..self.steps_per_knot)
                    .map(|_| {
                        x += self.velocities[m] * self.control_dt;
                        goal_reward(self.goal, [x, self.heights[m]])
                    })
                    .sum()
            })
            .collect())
    }
}

/// The trained policy driving the simulated robot; the latent command is
/// switched at every knot while the phase clock runs on.
pub struct SimPlanEvaluator<'a> {
    pub env: &'a EnvConfig,
    pub library: &'a ModeLibrary,
    pub policy: &'a PolicyParams,
    pub goal: [f64; 2],
    pub knot_dt: f64,
}

impl SimPlanEvaluator<'_> {
    pub fn steps_per_knot(&self) -> usize {
        ((self.knot_dt / self.env.robot.control_dt).round() as usize).max(1)
    }

    /// Evaluate and also return a per-step trace. A fall ends the rollout;
    /// later knots collect nothing.
    pub fn evaluate_traced(&self, plan: &[usize]) -> Result<(Vec<f64>, Vec<TraceRow>)> {
        check_plan(plan, self.library.len())?;
        let mut rewards = vec![0.0; plan.len()];
        let Some(&first) = plan.first() else {
            return Ok((rewards, Vec::new()));
        };
        let mut env = BipedEnv::new(self.env, self.library, first)?;
        let mut trace = vec![TraceRow::new(&env.state, 0.0, env.mode)];
        // The deterministic policy never draws; the generator only fills the
        // signature.
        let mut rng = rng_from(0, &[]);
        'knots: for (j, &mode) in plan.iter().enumerate() {
            env.switch_mode(mode)?;
            for _ in 0..self.steps_per_knot() {
                let obs = env.observation()?.to_vec();
                let (a, _) = act(self.policy, &obs, false, &mut rng);
                let out = env.step(&[a[0], a[1], a[2], a[3]]);
                let r = if out.status == Termination::Blowup {
                    0.0
                } else {
                    goal_reward(self.goal, [env.state.q[dof::X], env.state.q[dof::Z]])
                };
                rewards[j] += r;
                trace.push(TraceRow::new(&env.state, r, env.mode));
                if out.status != Termination::Running {
                    break 'knots;
                }
            }
        }
        Ok((rewards, trace))
    }
}

impl PlanEvaluator for SimPlanEvaluator<'_> {
    fn n_modes(&self) -> usize {
        self.library.len()
    }

    fn evaluate(&self, plan: &[usize]) -> Result<Vec<f64>> {
        Ok(self.evaluate_traced(plan)?.0)
    }
}
