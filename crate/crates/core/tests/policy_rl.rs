use mmloco::adaptive_sampler::EpisodeScript;
use mmloco::policy_rl::mlp::Mlp;
use mmloco::policy_rl::rollout::EpisodeEnd;
use mmloco::policy_rl::{act, gae, ppo_update, surrogate, PolicyParams, PpoConfig, PpoLearner, Trajectory, ValueParams};
use mmloco::rng::rng_from;
use rand::Rng;

fn dummy_script() -> EpisodeScript {
    EpisodeScript {
        initial_mode: 0,
        final_mode: 0,
        switch_phase_index: 0,
        switch_clip: 0,
        switch_step: 0,
        horizon: 1,
    }
}

#[test]
fn gae_with_unit_lambda_is_monte_carlo_minus_baseline() {
    let mut rng = rng_from(11, &[]);
    for _ in 0..20 {
        let n = rng.random_range(1..40);
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let bootstrap = rng.random_range(-1.0..1.0);
        let gamma = 0.97;
        let (adv, ret) = gae(&rewards, &values, bootstrap, gamma, 1.0);
        for t in 0..n {
            let mut mc = gamma.powi((n - t) as i32) * bootstrap;
            for k in t..n {
                mc += gamma.powi((k - t) as i32) * rewards[k];
            }
            assert!((adv[t] - (mc - values[t])).abs() < 1e-10);
            assert!((ret[t] - mc).abs() < 1e-10);
        }
    }
}

fn tiny_policy(seed: u64) -> PolicyParams {
    let mut rng = rng_from(seed, &[]);
    let mut p = PolicyParams {
        mean: Mlp::random(&[3, 1, 1, 2], 1.0, &mut rng),
        log_std: vec![rng.random_range(-0.8..0.2), rng.random_range(-0.8..0.2)],
        input_scale: vec![1.0, 0.5, 2.0],
    };
    for b in p.mean.params.iter_mut() {
        *b += rng.random_range(-0.3..0.3);
    }
    p
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    for seed in 0..12 {
        let policy = tiny_policy(seed);
        let mut rng = rng_from(100 + seed, &[]);
        let n = 6;
        let obs: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut actions = Vec::new();
        let mut old = Vec::new();
        for o in &obs {
            let (a, lp) = act(&policy, o, true, &mut rng);
            actions.push(a);
            // Old log-probs near the current ones so most ratios stay inside
            // the clip band and both branches are exercised.
            old.push(lp + rng.random_range(-0.3..0.3));
        }
        let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = surrogate(&policy, &obs, &actions, &old, &adv, 0.2, 0.01);
        let flat = policy.flat();
        let h = 1e-6;
        for i in 0..flat.len() {
            let eval = |delta: f64| {
                let mut p = policy.clone();
                let mut f = flat.clone();
                f[i] += delta;
                p.set_flat(&f);
                surrogate(&p, &obs, &actions, &old, &adv, 0.2, 0.01).0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-6);
            assert!((fd - grad[i]).abs() / denom < 1e-4, "seed {seed} param {i}: fd {fd} analytic {}", grad[i]);
        }
    }
}

#[test]
fn unclipped_region_equals_plain_objective() {
    let policy = tiny_policy(3);
    let mut rng = rng_from(7, &[]);
    let obs: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.random_range(-1.0..1.0); 3]).collect();
    let actions: Vec<Vec<f64>> = obs.iter().map(|o| act(&policy, o, true, &mut rng).0).collect();
    let lps: Vec<f64> = obs.iter().zip(&actions).map(|(o, a)| policy.log_prob(o, a)).collect();
    let old: Vec<f64> = lps.iter().map(|lp| lp + rng.random_range(-0.1..0.1)).collect();
    let adv: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let plain: f64 = lps.iter().zip(&old).zip(&adv).map(|((lp, o), a)| (lp - o).exp() * a).sum::<f64>() / 5.0;
    let (clipped, _) = surrogate(&policy, &obs, &actions, &old, &adv, 0.2, 0.0);
    assert_eq!(clipped, plain);
}

fn bandit_learner(seed: u64, lr: f64) -> PpoLearner {
    let mut rng = rng_from(seed, &[]);
    let policy = PolicyParams::new(vec![1.0], 8, 1, -0.5, &mut rng);
    let value = ValueParams::new(vec![1.0], 8, &mut rng);
    PpoLearner::new(policy, value, lr)
}

fn bandit_batch(learner: &PpoLearner, rng: &mut impl Rng, n: usize) -> Vec<Trajectory> {
    (0..n)
        .map(|_| {
            let obs = vec![1.0];
            let (a, lp) = act(&learner.policy, &obs, true, rng);
            Trajectory {
                rewards: vec![-(a[0] - 1.0).powi(2)],
                values: vec![learner.value.value(&obs)],
                obs: vec![obs.clone()],
                actions: vec![a],
                log_probs: vec![lp],
                final_obs: obs,
                bootstrap: 0.0,
                end: EpisodeEnd::Horizon,
                script: dummy_script(),
                modes: vec![0],
            }
        })
        .collect()
}

#[test]
fn bandit_mean_converges_to_optimum() {
    let cfg = PpoConfig {
        learning_rate: 0.002,
        horizon: 1,
        ..PpoConfig::default()
    };
    let mut learner = bandit_learner(9, cfg.learning_rate);
    let mut rng = rng_from(2, &[]);
    for _ in 0..200 {
        let batch = bandit_batch(&learner, &mut rng, 32);
        learner = ppo_update(&learner, &batch, &cfg, &mut rng).unwrap().0;
    }
    let mean = learner.policy.mean_action(&[1.0])[0];
    assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
}

#[test]
fn zero_advantages_leave_policy_unchanged() {
    let cfg = PpoConfig::default();
    let learner = bandit_learner(4, 1e-3);
    let mut rng = rng_from(5, &[]);
    let mut batch = bandit_batch(&learner, &mut rng, 8);
    // Equal rewards and a perfect baseline give zero advantages everywhere.
    for tr in &mut batch {
        tr.rewards = vec![0.5];
        tr.values = vec![0.5];
    }
    let (next, stats) = ppo_update(&learner, &batch, &cfg, &mut rng).unwrap();
    assert_eq!(next.policy, learner.policy);
    assert_eq!(stats.episode_returns, vec![0.5; 8]);
}

#[test]
fn non_finite_loss_is_rejected() {
    let cfg = PpoConfig::default();
    let mut learner = bandit_learner(6, 1e-3);
    learner.value.net.params[0] = f64::INFINITY;
    let mut rng = rng_from(7, &[]);
    let batch = bandit_batch(&learner, &mut rng, 4);
    assert!(ppo_update(&learner, &batch, &cfg, &mut rng).is_err());
    assert!(ppo_update(&learner, &[], &cfg, &mut rng).is_err());
}

#[test]
fn returns_in_stats_are_exact_sums() {
    let cfg = PpoConfig::default();
    let learner = bandit_learner(8, 1e-3);
    let mut rng = rng_from(9, &[]);
    let mut batch = bandit_batch(&learner, &mut rng, 3);
    batch[1].rewards = vec![0.1];
    let (_, stats) = ppo_update(&learner, &batch, &cfg, &mut rng).unwrap();
    for (tr, r) in batch.iter().zip(&stats.episode_returns) {
        assert_eq!(tr.rewards.iter().sum::<f64>(), *r);
    }
    assert_eq!(stats.pair_returns.len(), 1);
    assert_eq!(stats.pair_returns[0].episodes, 3);
}
