mod common;

use common::{library_with_latents, random_planner_instance};
use mmloco::biped_sim::EnvConfig;
use mmloco::mode_planner::{
    brute_force, parallel_trials, q_learn, ModePlan, PlanEvaluator, PlannerConfig, SimPlanEvaluator, StubEvaluator,
};
use mmloco::policy_rl::PolicyParams;
use mmloco::refmotion::builtin_library;
use mmloco::rng::rng_from;

#[test]
fn brute_force_finds_known_optimum() {
    // Walking covers 0.3 m per knot; the goal is 0.6 m away, so walk twice
    // then stand still.
    let ev = StubEvaluator::new(vec![0.0, 1.0], vec![0.5, 0.5], [0.6, 0.5], 15, 0.02);
    let (plan, ret) = brute_force(&ev, 4).unwrap();
    assert_eq!(plan, vec![1, 1, 0, 0]);
    let manual: f64 = ev.evaluate(&[1, 1, 0, 0]).unwrap().iter().sum();
    assert_eq!(ret, manual);
}

#[test]
fn q_learning_solves_small_stub_instances() {
    let mut matches = 0;
    for seed in 0..20 {
        let (ev, k) = random_planner_instance(seed);
        let (_, best) = brute_force(&ev, k).unwrap();
        let cfg = PlannerConfig {
            knots: k,
            episodes: 1000,
            seed,
            ..PlannerConfig::default()
        };
        let got = parallel_trials(&ev, &cfg).unwrap().best.plan_return;
        assert!(got <= best + 1e-9);
        assert!((best - got) / best < 0.02, "seed {seed}: {got} vs {best}");
        if (best - got).abs() <= 1e-9 * best {
            matches += 1;
        }
    }
    assert!(matches >= 18, "{matches}/20");
}

#[test]
fn identical_seeds_give_identical_plans() {
    let (ev, k) = random_planner_instance(3);
    let cfg = PlannerConfig {
        knots: k,
        episodes: 200,
        seed: 17,
        ..PlannerConfig::default()
    };
    let a = q_learn(&ev, &cfg).unwrap();
    let b = q_learn(&ev, &cfg).unwrap();
    assert_eq!(a.table, b.table);
    assert_eq!(a.plan, b.plan);
}

#[test]
fn gap_task_table_shape() {
    let lib = library_with_latents("pi2");
    let env = EnvConfig {
        terrain: mmloco::biped_sim::Terrain::preset("gap").unwrap(),
        ..EnvConfig::default()
    };
    let policy = PolicyParams::zeros(19, 8, 4);
    let cfg = PlannerConfig {
        episodes: 5,
        ..PlannerConfig::default()
    };
    let ev = SimPlanEvaluator {
        env: &env,
        library: &lib,
        policy: &policy,
        goal: cfg.goal,
        knot_dt: cfg.knot_dt,
    };
    let r = q_learn(&ev, &cfg).unwrap();
    assert_eq!(r.table.knots(), 11);
    assert_eq!(r.table.modes(), 4);
    assert_eq!(r.plan.len(), 11);
    // A standing robot collects exp(-distance) on every one of 15 steps.
    assert_eq!(ev.steps_per_knot(), 15);
    let max = 11.0 * 15.0;
    assert!(r.plan_return > 0.0 && r.plan_return <= max);
}

#[test]
fn fall_zeroes_remaining_knots() {
    let lib = library_with_latents("idle_walk");
    let env = EnvConfig::default();
    let mut policy = PolicyParams::zeros(19, 4, 4);
    // Output biases drive every joint far from the nominal pose.
    let n = policy.mean.params.len();
    policy.mean.params[n - 4..].copy_from_slice(&[2.5, -2.5, 2.5, 2.5]);
    let ev = SimPlanEvaluator {
        env: &env,
        library: &lib,
        policy: &policy,
        goal: [2.0, 0.5],
        knot_dt: 0.3,
    };
    let (rewards, trace) = ev.evaluate_traced(&[0; 11]).unwrap();
    let first_zero = rewards.iter().position(|&r| r == 0.0).expect("robot falls");
    assert!(first_zero < 11);
    assert!(rewards[first_zero..].iter().all(|&r| r == 0.0));
    assert!(trace.len() < 1 + 11 * 15);
}

#[test]
fn at_goal_idle_collects_one_per_step() {
    let lib = library_with_latents("idle_walk");
    let env = EnvConfig::default();
    let policy = PolicyParams::zeros(19, 4, 4);
    let start = mmloco::biped_sim::robot::standing_state(0.0, &env.terrain, &env.robot);
    let ev = SimPlanEvaluator {
        env: &env,
        library: &lib,
        policy: &policy,
        goal: [start.q[0], start.q[1]],
        knot_dt: 0.3,
    };
    let rewards = ev.evaluate(&[0, 0]).unwrap();
    for r in rewards {
        assert!((r - 15.0).abs() < 1e-3, "{r}");
    }
}

#[test]
fn plan_round_trips_through_json() {
    let lib = builtin_library("pi2").unwrap();
    let names: Vec<String> = lib.names().into_iter().map(String::from).collect();
    let cfg = PlannerConfig::default();
    let plan = ModePlan::new(&[0, 1, 2, 3, 1], &names, &cfg, vec![1.5, 0.1 + 0.2, 3.0, 1e-17, 7.25]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    plan.save(&path, "abcd").unwrap();
    let (header, back) = ModePlan::load(&path).unwrap();
    assert_eq!(back, plan);
    assert_eq!(header.config_hash, "abcd");
    back.validate(4).unwrap();
    assert!(back.validate(3).is_err());
    let _ = rng_from(0, &[]);
}
