//! Open-loop mode plans: a zero-order spline of mode indices over `k` knots,
//! optimised with tabular Q-learning where the state is the knot index.

pub mod evaluator;

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, Header};
use crate::error::{Error, Result};
use crate::rng::{rng_from, stream};

pub use evaluator::{goal_reward, PlanEvaluator, SimPlanEvaluator, StubEvaluator};

/// Backup target for `Q[s][a]`.
///
/// With the knot index as the only state, `max Q[s+1]` cannot depend on the
/// mode chosen at `s`, so the one-step target ranks modes by their immediate
/// knot reward alone. The Monte Carlo target uses the reward actually
/// collected after `s` in the episode and so credits later consequences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QTarget {
    #[default]
    MonteCarlo,
    OneStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub knots: usize,
    /// Duration of one knot in seconds.
    pub knot_dt: f64,
    /// Goal base position `(x, z)`.
    pub goal: [f64; 2],
    pub alpha: f64,
    pub epsilon: f64,
    pub target: QTarget,
    pub episodes: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            knots: 11,
            knot_dt: 0.3,
            goal: [2.0, 0.5],
            alpha: 0.1,
            epsilon: 0.2,
            target: QTarget::MonteCarlo,
            episodes: 100,
            trials: 5,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knots == 0 {
            return Err(Error::invalid("planner needs at least one knot"));
        }
        if !(self.knot_dt > 0.0 && self.knot_dt.is_finite()) {
            return Err(Error::invalid(format!("knot duration must be positive, got {}", self.knot_dt)));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid("planner alpha and epsilon must lie in [0, 1]"));
        }
        if self.goal.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("planner goal must be finite"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("planner needs at least one trial"));
        }
        Ok(())
    }
}

/// `q[s][a]`: value of choosing mode `a` at knot `s` and acting greedily after.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub q: Vec<Vec<f64>>,
    pub visits: Vec<Vec<u64>>,
}

impl QTable {
    pub fn zeros(knots: usize, modes: usize) -> Self {
        Self {
            q: vec![vec![0.0; modes]; knots],
            visits: vec![vec![0; modes]; knots],
        }
    }

    pub fn knots(&self) -> usize {
        self.q.len()
    }

    pub fn modes(&self) -> usize {
        self.q.first().map_or(0, Vec::len)
    }

    /// Highest-valued mode at knot `s`; ties go to the lowest index.
    pub fn greedy(&self, s: usize) -> usize {
        let row = &self.q[s];
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn greedy_plan(&self) -> Vec<usize> {
        (0..self.knots()).map(|s| self.greedy(s)).collect()
    }

    fn max_at(&self, s: usize) -> f64 {
        if s >= self.knots() {
            0.0
        } else {
            self.q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
    }

    /// Step size for the `n`-th visit: a running mean (`1/n`) until it falls
    /// to the floor `α`. Zero when `α` is zero.
    pub fn step_size(alpha: f64, visits: u64) -> f64 {
        if alpha == 0.0 {
            0.0
        } else {
            alpha.max(1.0 / visits.max(1) as f64)
        }
    }

    /// Backward sweep of Q updates over a finished episode.
    pub fn update_episode(&mut self, plan: &[usize], rewards: &[f64], alpha: f64, target: QTarget) {
        let mut continuation = 0.0;
        for s in (0..plan.len()).rev() {
            let a = plan[s];
            let target = match target {
                QTarget::MonteCarlo => rewards[s] + continuation,
                QTarget::OneStep => rewards[s] + self.max_at(s + 1),
            };
            continuation += rewards[s];
            self.visits[s][a] += 1;
            let lr = Self::step_size(alpha, self.visits[s][a]);
            self.q[s][a] += lr * (target - self.q[s][a]);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub index: usize,
    pub start_time: f64,
    pub mode: usize,
    pub mode_name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModePlan {
    pub knot_dt: f64,
    pub goal: [f64; 2],
    pub knots: Vec<Knot>,
    /// Sum of per-step goal rewards when the plan was evaluated.
    pub plan_return: f64,
    pub knot_rewards: Vec<f64>,
}

pub const PLAN_KIND: &str = "mode_plan";

impl ModePlan {
    pub fn new(modes: &[usize], names: &[String], cfg: &PlannerConfig, knot_rewards: Vec<f64>) -> Self {
        Self {
            knot_dt: cfg.knot_dt,
            goal: cfg.goal,
            knots: modes
                .iter()
                .enumerate()
                .map(|(i, &m)| Knot {
                    index: i,
                    start_time: i as f64 * cfg.knot_dt,
                    mode: m,
                    mode_name: names.get(m).cloned().unwrap_or_default(),
                })
                .collect(),
            plan_return: knot_rewards.iter().sum(),
            knot_rewards,
        }
    }

    pub fn modes(&self) -> Vec<usize> {
        self.knots.iter().map(|k| k.mode).collect()
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::invalid("plan has no knots"));
        }
        for (i, k) in self.knots.iter().enumerate() {
            if k.index != i || k.mode >= n_modes {
                return Err(Error::invalid(format!("plan knot {i} is out of order or names an unknown mode")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        artifact::write_json(path, &Header::new(PLAN_KIND, config_hash), self)
    }

    pub fn load(path: &Path) -> Result<(Header, Self)> {
        artifact::read_json(path, PLAN_KIND)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QLearnResult {
    pub table: QTable,
    pub plan: Vec<usize>,
    /// Evaluated return of the greedy plan.
    pub plan_return: f64,
    pub knot_rewards: Vec<f64>,
    pub episode_returns: Vec<f64>,
    pub solve_seconds: f64,
}

fn check_evaluator(evaluator: &dyn PlanEvaluator, cfg: &PlannerConfig) -> Result<()> {
    cfg.validate()?;
    if evaluator.n_modes() == 0 {
        return Err(Error::invalid("planner needs at least one mode"));
    }
    Ok(())
}

/// Episodic ε-greedy Q-learning over the knot chain.
pub fn q_learn(evaluator: &dyn PlanEvaluator, cfg: &PlannerConfig) -> Result<QLearnResult> {
    check_evaluator(evaluator, cfg)?;
    let start = Instant::now();
    let n = evaluator.n_modes();
    let mut table = QTable::zeros(cfg.knots, n);
    let mut rng = rng_from(cfg.seed, &[stream::PLANNER]);
    let mut episode_returns = Vec::with_capacity(cfg.episodes);
    for _ in 0..cfg.episodes {
        let plan: Vec<usize> = (0..cfg.knots)
            .map(|s| {
                if rng.random::<f64>() < cfg.epsilon {
                    rng.random_range(0..n)
                } else {
                    table.greedy(s)
                }
            })
            .collect();
        let rewards = evaluator.evaluate(&plan)?;
        episode_returns.push(rewards.iter().sum());
        table.update_episode(&plan, &rewards, cfg.alpha, cfg.target);
    }
    let plan = table.greedy_plan();
    let knot_rewards = evaluator.evaluate(&plan)?;
    Ok(QLearnResult {
        plan_return: knot_rewards.iter().sum(),
        table,
        plan,
        knot_rewards,
        episode_returns,
        solve_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialsResult {
    pub best: QLearnResult,
    pub best_trial: usize,
    pub trial_returns: Vec<f64>,
    pub solve_seconds: f64,
}

/// Independent Q-learning trials (trial `i` uses seed `seed + i`); the plan
/// with the highest evaluated return wins, ties to the earliest trial.
pub fn parallel_trials(evaluator: &dyn PlanEvaluator, cfg: &PlannerConfig) -> Result<TrialsResult> {
    check_evaluator(evaluator, cfg)?;
    let start = Instant::now();
    let results: Vec<QLearnResult> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let trial_cfg = PlannerConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            q_learn(evaluator, &trial_cfg)
        })
        .collect::<Result<_>>()?;
    let trial_returns: Vec<f64> = results.iter().map(|r| r.plan_return).collect();
    let mut best_trial = 0;
    for (i, &r) in trial_returns.iter().enumerate() {
        if r > trial_returns[best_trial] {
            best_trial = i;
        }
    }
    Ok(TrialsResult {
        best: results.into_iter().nth(best_trial).expect("at least one trial"),
        best_trial,
        trial_returns,
        solve_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Exhaustive search over all `n^k` plans; ties go to the plan that is
/// lexicographically smallest.
pub fn brute_force(evaluator: &dyn PlanEvaluator, knots: usize) -> Result<(Vec<usize>, f64)> {
    let n = evaluator.n_modes();
    let total = (n as u64).checked_pow(knots as u32).filter(|&t| t <= 10_000_000).ok_or_else(|| {
        Error::invalid(format!("{n}^{knots} plans is too many to enumerate"))
    })?;
    let mut best = (vec![0; knots], f64::NEG_INFINITY);
    for code in 0..total {
        let mut c = code;
        let mut plan = vec![0; knots];
        for slot in plan.iter_mut().rev() {
            *slot = (c % n as u64) as usize;
            c /= n as u64;
        }
        let ret: f64 = evaluator.evaluate(&plan)?.iter().sum();
        if ret > best.1 {
            best = (plan, ret);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_alpha_keeps_table_zero() {
        let ev = StubEvaluator::new(vec![0.0, 0.5, 1.0], vec![0.5; 3], [2.0, 0.5], 15, 0.02);
        let cfg = PlannerConfig {
            knots: 4,
            alpha: 0.0,
            episodes: 50,
            ..PlannerConfig::default()
        };
        let r = q_learn(&ev, &cfg).unwrap();
        assert!(r.table.q.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(r.plan, vec![0; 4]);
    }

    #[test]
    fn step_size_is_running_mean_with_floor() {
        assert_eq!(QTable::step_size(0.1, 1), 1.0);
        assert_eq!(QTable::step_size(0.1, 4), 0.25);
        assert_eq!(QTable::step_size(0.1, 50), 0.1);
        assert_eq!(QTable::step_size(0.0, 3), 0.0);
    }

    #[test]
    fn one_step_update_matches_formula() {
        let mut t = QTable::zeros(2, 2);
        t.q[1] = vec![3.0, 5.0];
        t.visits[0][1] = 20;
        t.q[0][1] = 1.0;
        let mut u = t.clone();
        u.update_episode(&[1, 0], &[2.0, 0.0], 0.1, QTarget::OneStep);
        // Knot 1 is updated first: first visit of (1, 0) takes its target.
        assert_eq!(u.q[1], vec![0.0, 5.0]);
        assert!((u.q[0][1] - (1.0 + 0.1 * (2.0 + 5.0 - 1.0))).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_update_uses_collected_rewards() {
        let mut t = QTable::zeros(3, 2);
        t.update_episode(&[1, 0, 1], &[1.0, 2.0, 4.0], 0.1, QTarget::MonteCarlo);
        assert_eq!(t.q[0][1], 7.0);
        assert_eq!(t.q[1][0], 6.0);
        assert_eq!(t.q[2][1], 4.0);
    }

    #[test]
    fn greedy_ties_pick_lowest_index() {
        let mut t = QTable::zeros(2, 3);
        t.q[0] = vec![1.0, 1.0, 0.5];
        t.q[1] = vec![0.0, 2.0, 2.0];
        assert_eq!(t.greedy_plan(), vec![0, 1]);
    }

    #[test]
    fn single_trial_equals_q_learn() {
        let ev = StubEvaluator::new(vec![0.0, 0.4, 0.9], vec![0.5, 0.5, 0.6], [1.5, 0.5], 10, 0.02);
        let cfg = PlannerConfig {
            knots: 4,
            trials: 1,
            episodes: 60,
            seed: 9,
            ..PlannerConfig::default()
        };
        let single = q_learn(&ev, &cfg).unwrap();
        let trials = parallel_trials(&ev, &cfg).unwrap();
        assert_eq!(trials.best.table, single.table);
        assert_eq!(trials.best.plan, single.plan);
    }
}
