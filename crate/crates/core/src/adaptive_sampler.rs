//! Adaptive mode and transition sampling.
//!
//! Each episode commands an initial mode `m_i` and, from a switch step `t_s`
//! onward, a final mode `m_f`. The sampler keeps decayed return records per
//! mode and per transition and turns them into skewed distributions that
//! favour whatever the policy currently does worst, with an additive floor so
//! mastered modes are still revisited.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Switch phases within a clip.
pub const SWITCH_PHASES: [f64; 3] = [0.25, 0.5, 0.75];
/// Clip in which the switch happens.
pub const SWITCH_CLIPS: [usize; 2] = [0, 1];

/// Map return records to sampling probabilities.
///
/// `k = -R`, shifted so its minimum is zero, scaled by its maximum when that
/// is non-zero (else zeroed), offset by `epsilon`, and normalised. An all-zero
/// `k` after the offset falls back to the uniform distribution.
pub fn returns2prob(returns: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if returns.is_empty() {
        return Err(Error::invalid("returns2prob needs at least one return"));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("returns must be finite"));
    }
    let mut k: Vec<f64> = returns.iter().map(|r| -r).collect();
    let min = k.iter().copied().fold(f64::INFINITY, f64::min);
    k.iter_mut().for_each(|v| *v -= min);
    let max = k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max != 0.0 {
        k.iter_mut().for_each(|v| *v /= max);
    } else {
        k.iter_mut().for_each(|v| *v = 0.0);
    }
    k.iter_mut().for_each(|v| *v += epsilon);
    let total: f64 = k.iter().sum();
    if total != 0.0 {
        Ok(k.into_iter().map(|v| v / total).collect())
    } else {
        let n = returns.len() as f64;
        Ok(vec![1.0 / n; returns.len()])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeScript {
    pub initial_mode: usize,
    pub final_mode: usize,
    pub switch_phase_index: usize,
    pub switch_clip: usize,
    /// Control step at which the final mode takes over.
    pub switch_step: usize,
    pub horizon: usize,
}

impl EpisodeScript {
    pub fn switch_phase(&self) -> f64 {
        SWITCH_PHASES[self.switch_phase_index]
    }

    /// Mode commanded at control step `t` (0-based): the initial mode up to
    /// and including `switch_step`, the final mode afterwards.
    pub fn mode_at(&self, t: usize) -> usize {
        if t <= self.switch_step {
            self.initial_mode
        } else {
            self.final_mode
        }
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if self.initial_mode >= n_modes || self.final_mode >= n_modes {
            return Err(Error::invalid(format!(
                "script modes ({}, {}) out of range for {n_modes} modes",
                self.initial_mode, self.final_mode
            )));
        }
        if !(0 < self.switch_step && self.switch_step < self.horizon) {
            return Err(Error::invalid(format!(
                "switch step {} must lie strictly inside the horizon {}",
                self.switch_step, self.horizon
            )));
        }
        Ok(())
    }
}

/// `t_s = round((clip_s + phi_s) * steps_per_cycle)`, ties to even.
pub fn switch_step(switch_clip: usize, switch_phase: f64, steps_per_cycle: usize) -> usize {
    ((switch_clip as f64 + switch_phase) * steps_per_cycle as f64).round_ties_even() as usize
}

fn scripted<R: Rng + ?Sized>(
    initial_mode: usize,
    final_mode: usize,
    steps_per_cycle: usize,
    horizon: usize,
    rng: &mut R,
) -> EpisodeScript {
    let switch_phase_index = rng.random_range(0..SWITCH_PHASES.len());
    let switch_clip = SWITCH_CLIPS[rng.random_range(0..SWITCH_CLIPS.len())];
    EpisodeScript {
        initial_mode,
        final_mode,
        switch_phase_index,
        switch_clip,
        switch_step: switch_step(switch_clip, SWITCH_PHASES[switch_phase_index], steps_per_cycle),
        horizon,
    }
}

fn draw<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(p).expect("probabilities are a valid distribution").sample(rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    /// Decayed return record per initial mode.
    pub mode_returns: Vec<f64>,
    /// Decayed return record per (initial, final) pair, row-major `n x n`.
    pub transition_returns: Vec<f64>,
    pub gamma_mode: f64,
    pub gamma_transition: f64,
    pub epsilon: f64,
}

impl SamplerState {
    pub fn new(n_modes: usize, gamma_mode: f64, gamma_transition: f64, epsilon: f64) -> Result<Self> {
        let s = Self {
            mode_returns: vec![0.0; n_modes],
            transition_returns: vec![0.0; n_modes * n_modes],
            gamma_mode,
            gamma_transition,
            epsilon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mode_returns.len();
        if n == 0 {
            return Err(Error::invalid("sampler needs at least one mode"));
        }
        if self.transition_returns.len() != n * n {
            return Err(Error::invalid("transition record shape does not match the mode count"));
        }
        for g in [self.gamma_mode, self.gamma_transition] {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::invalid(format!("decay factor {g} outside [0, 1]")));
            }
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.mode_returns.len()
    }

    pub fn transition_row(&self, initial_mode: usize) -> &[f64] {
        let n = self.n_modes();
        &self.transition_returns[initial_mode * n..(initial_mode + 1) * n]
    }

    pub fn mode_probabilities(&self) -> Vec<f64> {
        returns2prob(&self.mode_returns, self.epsilon).expect("sampler state is validated")
    }

    pub fn transition_probabilities(&self, initial_mode: usize) -> Vec<f64> {
        returns2prob(self.transition_row(initial_mode), self.epsilon).expect("sampler state is validated")
    }

    pub fn sample_script<R: Rng + ?Sized>(&self, steps_per_cycle: usize, horizon: usize, rng: &mut R) -> EpisodeScript {
        let initial_mode = draw(&self.mode_probabilities(), rng);
        let final_mode = draw(&self.transition_probabilities(initial_mode), rng);
        scripted(initial_mode, final_mode, steps_per_cycle, horizon, rng)
    }

    /// Fold one episode's return into the records of its initial mode and
    /// its transition. Only those two entries change.
    pub fn update_records(&mut self, script: &EpisodeScript, episode_return: f64) {
        let n = self.n_modes();
        let mi = script.initial_mode;
        self.mode_returns[mi] = self.gamma_mode * self.mode_returns[mi] + episode_return;
        let idx = mi * n + script.final_mode;
        self.transition_returns[idx] = self.gamma_transition * self.transition_returns[idx] + episode_return;
    }
}

/// Baseline: initial and final modes drawn uniformly and independently.
pub fn uniform_baseline_sampler<R: Rng + ?Sized>(
    n_modes: usize,
    steps_per_cycle: usize,
    horizon: usize,
    rng: &mut R,
) -> EpisodeScript {
    let initial_mode = rng.random_range(0..n_modes);
    let final_mode = rng.random_range(0..n_modes);
    scripted(initial_mode, final_mode, steps_per_cycle, horizon, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Adaptive,
    Uniform,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Self::Adaptive),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::invalid(format!("unknown sampler `{other}` (adaptive|uniform)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn hand_evaluated_cases() {
        assert!(close(&returns2prob(&[0.0, 0.0, 0.0], 0.2).unwrap(), &[1.0 / 3.0; 3], 1e-12));
        assert!(close(&returns2prob(&[10.0, 0.0], 0.2).unwrap(), &[1.0 / 7.0, 6.0 / 7.0], 1e-12));
        assert_eq!(returns2prob(&[5.0], 0.2).unwrap(), vec![1.0]);
        assert!(close(&returns2prob(&[3.0, 3.0, 3.0, 3.0], 0.0).unwrap(), &[0.25; 4], 1e-12));
        assert!(returns2prob(&[], 0.2).is_err());
        assert!(returns2prob(&[1.0], -0.1).is_err());
    }

    #[test]
    fn switch_step_rule() {
        assert_eq!(switch_step(0, 0.5, 50), 25);
        assert_eq!(switch_step(1, 0.25, 50), 62);
        assert_eq!(switch_step(0, 0.25, 50), 12);
        assert_eq!(switch_step(1, 0.25, 48), 60);
        assert_eq!(switch_step(1, 0.75, 50), 88);
    }

    #[test]
    fn update_rule() {
        let mut s = SamplerState::new(3, 0.8, 0.4, 0.2).unwrap();
        s.mode_returns[1] = 1.0;
        s.transition_returns[1 * 3 + 2] = 1.0;
        let script = EpisodeScript {
            initial_mode: 1,
            final_mode: 2,
            switch_phase_index: 0,
            switch_clip: 0,
            switch_step: 12,
            horizon: 200,
        };
        let before = s.clone();
        s.update_records(&script, 2.0);
        assert!((s.mode_returns[1] - 2.8).abs() < 1e-15);
        assert!((s.transition_returns[5] - 2.4).abs() < 1e-15);
        let changed_modes = s.mode_returns.iter().zip(&before.mode_returns).filter(|(a, b)| a != b).count();
        let changed_tr = s
            .transition_returns
            .iter()
            .zip(&before.transition_returns)
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!((changed_modes, changed_tr), (1, 1));

        let mut myopic = SamplerState::new(2, 0.0, 0.0, 0.2).unwrap();
        myopic.update_records(&EpisodeScript { initial_mode: 0, final_mode: 0, ..script }, 5.0);
        myopic.update_records(&EpisodeScript { initial_mode: 0, final_mode: 0, ..script }, 3.0);
        assert_eq!(myopic.mode_returns[0], 3.0);

        let mut decay = SamplerState::new(1, 0.5, 0.5, 0.2).unwrap();
        decay.mode_returns[0] = 8.0;
        let s0 = EpisodeScript { initial_mode: 0, final_mode: 0, ..script };
        for expected in [4.0, 2.0, 1.0, 0.5] {
            decay.update_records(&s0, 0.0);
            assert_eq!(decay.mode_returns[0], expected);
        }
    }

    #[test]
    fn fresh_sampler_is_uniform_over_modes() {
        let s = SamplerState::new(4, 0.8, 0.8, 0.2).unwrap();
        let mut rng = rng_from(1, &[]);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[s.sample_script(50, 200, &mut rng).initial_mode] += 1;
        }
        let p = 0.25;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn mastered_mode_is_least_likely_but_possible() {
        let mut s = SamplerState::new(4, 0.8, 0.8, 0.2).unwrap();
        s.mode_returns = vec![10.0, 0.0, 0.0, 0.0];
        let p = s.mode_probabilities();
        assert!(p[0] > 0.0);
        assert!(p[1..].iter().all(|&q| q > p[0]));
    }

    #[test]
    fn script_fields_are_consistent() {
        let s = SamplerState::new(3, 0.8, 0.8, 0.2).unwrap();
        let mut rng = rng_from(2, &[]);
        for _ in 0..1000 {
            let sc = s.sample_script(50, 200, &mut rng);
            sc.validate(3).unwrap();
            assert_eq!(sc.switch_step, switch_step(sc.switch_clip, sc.switch_phase(), 50));
            assert!(sc.mode_at(sc.switch_step) == sc.initial_mode);
            assert!(sc.mode_at(sc.switch_step + 1) == sc.final_mode);
        }
    }

    #[test]
    fn uniform_baseline_pairs() {
        let mut rng = rng_from(3, &[]);
        let draws = 100_000;
        let mut counts = [0usize; 16];
        for _ in 0..draws {
            let sc = uniform_baseline_sampler(4, 50, 200, &mut rng);
            counts[sc.initial_mode * 4 + sc.final_mode] += 1;
        }
        let p = 1.0 / 16.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - draws as f64 * p).abs() < 3.0 * sigma));
        for _ in 0..100 {
            let sc = uniform_baseline_sampler(1, 50, 200, &mut rng);
            assert_eq!((sc.initial_mode, sc.final_mode), (0, 0));
        }
    }

    proptest! {
        #[test]
        fn probabilities_form_a_simplex(r in prop::collection::vec(-100.0..100.0f64, 1..12), eps in 0.0..1.0f64) {
            let p = returns2prob(&r, eps).unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn anti_monotone_in_returns(r in prop::collection::vec(-100.0..100.0f64, 2..12), eps in 0.0..1.0f64) {
            let p = returns2prob(&r, eps).unwrap();
            for a in 0..r.len() {
                for b in 0..r.len() {
                    if r[a] <= r[b] {
                        prop_assert!(p[a] >= p[b] - 1e-15);
                    }
                }
            }
        }

        #[test]
        fn shift_invariant(r in prop::collection::vec(-100.0..100.0f64, 1..12), c in -50.0..50.0f64) {
            let shifted: Vec<f64> = r.iter().map(|v| v + c).collect();
            let (p, q) = (returns2prob(&r, 0.2).unwrap(), returns2prob(&shifted, 0.2).unwrap());
            prop_assert!(close(&p, &q, 1e-12));
        }
    }
}
