use mmloco::adaptive_sampler::{
    returns2prob, switch_step, uniform_baseline_sampler, SamplerState, SWITCH_CLIPS, SWITCH_PHASES,
};
use mmloco::rng::rng_from;
use proptest::prelude::*;

const SPC: usize = 50;
const HORIZON: usize = 200;

fn allowed_switch_steps() -> Vec<usize> {
    SWITCH_CLIPS
        .iter()
        .flat_map(|&c| SWITCH_PHASES.iter().map(move |&p| switch_step(c, p, SPC)))
        .collect()
}

proptest! {
    #[test]
    fn records_change_only_the_played_entries(
        n in 1usize..6,
        seed in 0u64..1000,
        ret in -50.0f64..50.0,
        gamma in 0.0f64..=1.0,
    ) {
        let mut s = SamplerState::new(n, gamma, gamma, 0.2).unwrap();
        let mut rng = rng_from(seed, &[]);
        for v in s.mode_returns.iter_mut().chain(s.transition_returns.iter_mut()) {
            *v = rand::Rng::random_range(&mut rng, -5.0..5.0);
        }
        let before = s.clone();
        let script = s.sample_script(SPC, HORIZON, &mut rng);
        s.update_records(&script, ret);
        let (i, f) = (script.initial_mode, script.final_mode);
        for m in 0..n {
            let want = if m == i { gamma * before.mode_returns[m] + ret } else { before.mode_returns[m] };
            prop_assert_eq!(s.mode_returns[m], want);
        }
        for k in 0..n * n {
            let want = if k == i * n + f { gamma * before.transition_returns[k] + ret } else { before.transition_returns[k] };
            prop_assert_eq!(s.transition_returns[k], want);
        }
    }

    #[test]
    fn scripts_are_well_formed(n in 1usize..6, seed in 0u64..1000) {
        let s = SamplerState::new(n, 0.8, 0.8, 0.2).unwrap();
        let mut rng = rng_from(seed, &[1]);
        let allowed = allowed_switch_steps();
        for script in [s.sample_script(SPC, HORIZON, &mut rng), uniform_baseline_sampler(n, SPC, HORIZON, &mut rng)] {
            prop_assert!(script.initial_mode < n && script.final_mode < n);
            prop_assert!(allowed.contains(&script.switch_step));
            prop_assert_eq!(script.horizon, HORIZON);
            prop_assert_eq!(script.mode_at(script.switch_step), script.initial_mode);
            prop_assert_eq!(script.mode_at(script.switch_step + 1), script.final_mode);
        }
    }

    #[test]
    fn probabilities_respect_the_floor(r in prop::collection::vec(-100.0f64..100.0, 1..8), eps in 0.01f64..1.0) {
        let p = returns2prob(&r, eps).unwrap();
        let min = r.iter().copied().fold(f64::INFINITY, f64::min);
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let k: Vec<f64> = if max > min { r.iter().map(|v| (max - v) / (max - min) + eps).collect() } else { vec![eps; r.len()] };
        let bound = eps / k.iter().sum::<f64>();
        prop_assert!(p.iter().all(|&q| q >= bound - 1e-12));
    }
}

#[test]
fn switch_table() {
    assert_eq!(allowed_switch_steps(), [12, 25, 38, 62, 75, 88]);
}

#[test]
fn worst_mode_is_drawn_most() {
    let mut s = SamplerState::new(3, 0.8, 0.8, 0.2).unwrap();
    s.mode_returns = vec![10.0, 4.0, -3.0];
    let mut rng = rng_from(3, &[]);
    let mut counts = [0usize; 3];
    for _ in 0..20_000 {
        counts[s.sample_script(SPC, HORIZON, &mut rng).initial_mode] += 1;
    }
    assert!(counts[2] > counts[1] && counts[1] > counts[0] && counts[0] > 0, "{counts:?}");
}

#[test]
fn uniform_baseline_covers_all_pairs() {
    let mut rng = rng_from(4, &[]);
    let mut seen = [[0usize; 3]; 3];
    for _ in 0..9_000 {
        let s = uniform_baseline_sampler(3, SPC, HORIZON, &mut rng);
        seen[s.initial_mode][s.final_mode] += 1;
    }
    assert!(seen.iter().flatten().all(|&c| (800..1200).contains(&c)), "{seen:?}");
}
