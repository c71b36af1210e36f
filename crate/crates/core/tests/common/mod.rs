//! Helpers shared by integration test targets.
#![allow(dead_code)]

use mmloco::biped_sim::robot::{self, dof};
use mmloco::biped_sim::{RobotConfig, SimState, Terrain};
use mmloco::mode_encoder::LatentMode;
use mmloco::mode_planner::StubEvaluator;
use mmloco::refmotion::{builtin_library, ModeLibrary};
use mmloco::rng::rng_from;
use rand::Rng;

/// A random 1-D planning instance: 2 to 3 modes with fixed forward speeds,
/// 2 to 6 knots of 15 control steps, goal 0.5 to 3 m ahead at nominal height.
pub fn random_planner_instance(seed: u64) -> (StubEvaluator, usize) {
    let mut rng = rng_from(seed, &[42]);
    let n = rng.random_range(2..=3);
    let k = rng.random_range(2..=6);
    let velocities = (0..n).map(|_| rng.random_range(-0.5..1.5)).collect();
    let goal = [rng.random_range(0.5..3.0), 0.5];
    (StubEvaluator::new(velocities, vec![0.5; n], goal, 15, 0.02), k)
}

/// A built-in library with hand-set, distinct latents so tests can skip
/// encoder training.
pub fn library_with_latents(selector: &str) -> ModeLibrary {
    let mut lib = builtin_library(selector).unwrap();
    for (i, e) in lib.entries.iter_mut().enumerate() {
        let mut z = vec![0.0; 4];
        z[i % 4] = 1.0;
        z[(i + 1) % 4] += 0.5 * (i / 4) as f64;
        e.latent = Some(LatentMode {
            z,
            source_name: e.motion.name.clone(),
        });
    }
    lib
}

/// A standing robot lifted 2 m and thrown.
pub fn airborne(cfg: &RobotConfig) -> SimState {
    let mut s = robot::standing_state(0.0, &Terrain::flat(), cfg);
    s.q[dof::Z] += 2.0;
    s.qd[dof::X] = 0.7;
    s.qd[dof::Z] = 3.0;
    s.qd[dof::PITCH] = 0.4;
    s
}

/// No joint damping or derivative gain, so only gravity acts in flight.
pub fn frictionless_air() -> RobotConfig {
    RobotConfig {
        joint_damping: 0.0,
        kd: 0.0,
        ..RobotConfig::default()
    }
}

/// Independent equilibrium: each leg carries half the weight vertically, the
/// joints deflect by `Jᵀ F / Kp`, and the feet sink by `M g / (2 k_n)`.
pub fn closed_form_stand_height(cfg: &RobotConfig) -> f64 {
    let load = cfg.base_mass * cfg.gravity / 2.0;
    let (d, l1, l2) = (cfg.hip_offset, cfg.thigh_length, cfg.shank_length);
    let mut reach: f64 = 0.0;
    for leg in 0..2 {
        let (a_hip, a_knee) = (cfg.nominal_pose[2 * leg], cfg.nominal_pose[2 * leg + 1]);
        let (mut hip, mut knee) = (a_hip, a_knee);
        for _ in 0..500 {
            let t1 = hip;
            let t2 = hip + knee;
            hip = a_hip + (l1 * t1.sin() + l2 * t2.sin()) * load / cfg.kp;
            knee = a_knee + l2 * t2.sin() * load / cfg.kp;
        }
        reach = reach.max(d + l1 * hip.cos() + l2 * (hip + knee).cos());
    }
    reach - load / cfg.contact_stiffness
}
