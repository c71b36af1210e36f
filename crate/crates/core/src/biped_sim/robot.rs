//! Planar biped: a 3-DOF floating base with two hip/knee legs and point feet.
//!
//! The base is driven by gravity and the foot contact forces only. Each leg
//! joint is a damped double integrator driven by its PD torque and the
//! generalized contact force `Jᵀ F`.

use serde::{Deserialize, Serialize};

use super::terrain::Terrain;
use crate::error::{Error, Result};

pub const NQ: usize = 7;
pub const NJ: usize = 4;

/// Indices into `q` / `qd`.
pub mod dof {
    pub const X: usize = 0;
    pub const Z: usize = 1;
    pub const PITCH: usize = 2;
    pub const HIP_L: usize = 3;
    pub const KNEE_L: usize = 4;
    pub const HIP_R: usize = 5;
    pub const KNEE_R: usize = 6;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotConfig {
    pub base_mass: f64,
    pub base_pitch_inertia: f64,
    /// Vertical distance from the base centre of mass down to the hips.
    pub hip_offset: f64,
    pub thigh_length: f64,
    pub shank_length: f64,
    pub joint_inertia: f64,
    pub joint_damping: f64,
    pub kp: f64,
    pub kd: f64,
    pub torque_limit: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub tangential_damping: f64,
    pub friction: f64,
    pub gravity: f64,
    pub control_dt: f64,
    pub substeps: usize,
    /// Wall time of one phase cycle at clock rate 1.
    pub cycle_duration: f64,
    /// Joint targets for a zero policy output: `[hipL, kneeL, hipR, kneeR]`.
    pub nominal_pose: [f64; NJ],
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            base_mass: 3.0,
            base_pitch_inertia: 0.1,
            hip_offset: 0.078,
            thigh_length: 0.22,
            shank_length: 0.22,
            joint_inertia: 0.05,
            joint_damping: 0.1,
            kp: 30.0,
            kd: 0.5,
            torque_limit: 30.0,
            contact_stiffness: 2.0e4,
            contact_damping: 200.0,
            tangential_damping: 300.0,
            friction: 0.8,
            gravity: 9.81,
            control_dt: 0.02,
            substeps: 20,
            cycle_duration: 1.0,
            nominal_pose: [0.35, -0.35, -0.35, 0.35],
        }
    }
}

impl RobotConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("base_mass", self.base_mass),
            ("base_pitch_inertia", self.base_pitch_inertia),
            ("thigh_length", self.thigh_length),
            ("shank_length", self.shank_length),
            ("joint_inertia", self.joint_inertia),
            ("kp", self.kp),
            ("torque_limit", self.torque_limit),
            ("contact_stiffness", self.contact_stiffness),
            ("friction", self.friction),
            ("gravity", self.gravity),
            ("control_dt", self.control_dt),
            ("cycle_duration", self.cycle_duration),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("robot config `{name}` must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("hip_offset", self.hip_offset),
            ("joint_damping", self.joint_damping),
            ("kd", self.kd),
            ("contact_damping", self.contact_damping),
            ("tangential_damping", self.tangential_damping),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("robot config `{name}` must be non-negative, got {v}")));
            }
        }
        if self.substeps == 0 {
            return Err(Error::invalid("robot config `substeps` must be at least 1"));
        }
        if self.nominal_pose.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("robot config `nominal_pose` must be finite"));
        }
        Ok(())
    }

    pub fn substep_dt(&self) -> f64 {
        self.control_dt / self.substeps as f64
    }

    /// Control steps per phase cycle at clock rate 1.
    pub fn steps_per_cycle(&self) -> usize {
        (self.cycle_duration / self.control_dt).round() as usize
    }

    pub fn leg_length(&self) -> f64 {
        self.thigh_length + self.shank_length
    }
}

/// Joint torques from the PD law `Kp (a − q) − Kd q̇`, clipped to the limit.
/// No limits are placed on the targets themselves.
pub fn pd_torque(action: &[f64; NJ], q: &[f64; NJ], qd: &[f64; NJ], cfg: &RobotConfig) -> [f64; NJ] {
    std::array::from_fn(|j| {
        (cfg.kp * (action[j] - q[j]) - cfg.kd * qd[j]).clamp(-cfg.torque_limit, cfg.torque_limit)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub q: [f64; NQ],
    pub qd: [f64; NQ],
    pub t: f64,
    pub phase: f64,
    pub clock_rate: f64,
    pub contact: [bool; 2],
    pub support_height: f64,
}

impl SimState {
    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qd).all(|v| v.is_finite()) && self.t.is_finite() && self.phase.is_finite()
    }

    pub fn joints(&self) -> [f64; NJ] {
        [self.q[3], self.q[4], self.q[5], self.q[6]]
    }

    pub fn joint_velocities(&self) -> [f64; NJ] {
        [self.qd[3], self.qd[4], self.qd[5], self.qd[6]]
    }

    /// Height of the base above the support plane.
    pub fn relative_height(&self) -> f64 {
        self.q[dof::Z] - self.support_height
    }

    /// Translational kinetic plus potential energy of the base and its
    /// rotational kinetic energy.
    pub fn base_energy(&self, cfg: &RobotConfig) -> f64 {
        let [vx, vz, w] = [self.qd[0], self.qd[1], self.qd[2]];
        0.5 * cfg.base_mass * (vx * vx + vz * vz)
            + 0.5 * cfg.base_pitch_inertia * w * w
            + cfg.base_mass * cfg.gravity * self.q[dof::Z]
    }
}

/// Foot position and its partial derivatives for one leg.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegKinematics {
    pub foot: [f64; 2],
    pub d_pitch: [f64; 2],
    pub d_hip: [f64; 2],
    pub d_knee: [f64; 2],
}

/// `leg` is 0 for left, 1 for right.
pub fn leg_kinematics(q: &[f64; NQ], leg: usize, cfg: &RobotConfig) -> LegKinematics {
    let p = q[dof::PITCH];
    let th1 = p + q[3 + 2 * leg];
    let th2 = th1 + q[4 + 2 * leg];
    let (sp, cp) = p.sin_cos();
    let (s1, c1) = th1.sin_cos();
    let (s2, c2) = th2.sin_cos();
    let (d, l1, l2) = (cfg.hip_offset, cfg.thigh_length, cfg.shank_length);
    let foot = [
        q[dof::X] + d * sp + l1 * s1 + l2 * s2,
        q[dof::Z] - d * cp - l1 * c1 - l2 * c2,
    ];
    let d_knee = [l2 * c2, l2 * s2];
    let d_hip = [l1 * c1 + d_knee[0], l1 * s1 + d_knee[1]];
    let d_pitch = [d * cp + d_hip[0], d * sp + d_hip[1]];
    LegKinematics { foot, d_pitch, d_hip, d_knee }
}

fn foot_velocity(k: &LegKinematics, qd: &[f64; NQ], leg: usize) -> [f64; 2] {
    let (wp, wh, wk) = (qd[dof::PITCH], qd[3 + 2 * leg], qd[4 + 2 * leg]);
    std::array::from_fn(|i| qd[i] + k.d_pitch[i] * wp + k.d_hip[i] * wh + k.d_knee[i] * wk)
}

/// Penalty contact force on a foot: spring-damper along the surface normal,
/// viscous tangential force limited by the friction cone.
pub fn contact_force(foot: [f64; 2], vel: [f64; 2], terrain: &Terrain, cfg: &RobotConfig) -> [f64; 2] {
    let Some(c) = terrain.contact(foot[0], foot[1]) else {
        return [0.0, 0.0];
    };
    let n = c.normal;
    let tangent = [n[1], -n[0]];
    let v_n = vel[0] * n[0] + vel[1] * n[1];
    let v_t = vel[0] * tangent[0] + vel[1] * tangent[1];
    let f_n = (cfg.contact_stiffness * c.depth - cfg.contact_damping * v_n).max(0.0);
    let cap = cfg.friction * f_n;
    let f_t = (-cfg.tangential_damping * v_t).clamp(-cap, cap);
    [f_n * n[0] + f_t * tangent[0], f_n * n[1] + f_t * tangent[1]]
}

/// Accelerations for all seven coordinates, excluding gravity (applied by
/// the integrator). Also returns the contact force on each foot.
fn accelerations(
    q: &[f64; NQ],
    qd: &[f64; NQ],
    tau: &[f64; NJ],
    terrain: &Terrain,
    cfg: &RobotConfig,
) -> ([f64; NQ], [[f64; 2]; 2]) {
    let mut acc = [0.0; NQ];
    let mut forces = [[0.0; 2]; 2];
    let mut base_force = [0.0; 2];
    let mut moment = 0.0;
    for leg in 0..2 {
        let k = leg_kinematics(q, leg, cfg);
        let f = contact_force(k.foot, foot_velocity(&k, qd, leg), terrain, cfg);
        forces[leg] = f;
        base_force[0] += f[0];
        base_force[1] += f[1];
        moment += k.d_pitch[0] * f[0] + k.d_pitch[1] * f[1];
        for (j, col) in [(3 + 2 * leg, k.d_hip), (4 + 2 * leg, k.d_knee)] {
            let gen = col[0] * f[0] + col[1] * f[1];
            acc[j] = (tau[j - 3] - cfg.joint_damping * qd[j] + gen) / cfg.joint_inertia;
        }
    }
    acc[dof::X] = base_force[0] / cfg.base_mass;
    acc[dof::Z] = base_force[1] / cfg.base_mass;
    acc[dof::PITCH] = moment / cfg.base_pitch_inertia;
    (acc, forces)
}

/// Contact forces at the current configuration, for diagnostics and tests.
pub fn foot_forces(state: &SimState, terrain: &Terrain, cfg: &RobotConfig) -> [[f64; 2]; 2] {
    accelerations(&state.q, &state.qd, &[0.0; NJ], terrain, cfg).1
}

fn in_contact(q: &[f64; NQ], terrain: &Terrain, cfg: &RobotConfig) -> [bool; 2] {
    std::array::from_fn(|leg| {
        let f = leg_kinematics(q, leg, cfg).foot;
        terrain.contact(f[0], f[1]).is_some()
    })
}

/// Advance one control period with joint targets `targets`. Semi-implicit
/// Euler substeps; the constant gravity term enters the position update
/// exactly so free flight conserves energy.
pub fn step(state: &SimState, targets: &[f64; NJ], terrain: &Terrain, cfg: &RobotConfig) -> Result<SimState> {
    let h = cfg.substep_dt();
    let mut q = state.q;
    let mut qd = state.qd;
    for _ in 0..cfg.substeps {
        let jq = [q[3], q[4], q[5], q[6]];
        let jqd = [qd[3], qd[4], qd[5], qd[6]];
        let tau = pd_torque(targets, &jq, &jqd, cfg);
        let (mut acc, _) = accelerations(&q, &qd, &tau, terrain, cfg);
        acc[dof::Z] -= cfg.gravity;
        for i in 0..NQ {
            qd[i] += acc[i] * h;
            q[i] += qd[i] * h;
        }
        q[dof::Z] += 0.5 * cfg.gravity * h * h;
    }
    let mut next = SimState {
        q,
        qd,
        t: state.t + cfg.control_dt,
        phase: advance_phase(state.phase, state.clock_rate, cfg),
        clock_rate: state.clock_rate,
        contact: [false; 2],
        support_height: terrain.height(q[dof::X]),
    };
    if !next.is_finite() {
        return Err(Error::SimulationBlowup { t: next.t });
    }
    next.contact = in_contact(&next.q, terrain, cfg);
    Ok(next)
}

pub fn advance_phase(phase: f64, clock_rate: f64, cfg: &RobotConfig) -> f64 {
    let p = (phase + clock_rate * cfg.control_dt / cfg.cycle_duration).rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs.
    if p >= 1.0 { 0.0 } else { p }
}

/// Joint angles at which the PD torques balance an even, purely vertical
/// share of the body weight on each foot.
pub fn static_joint_pose(cfg: &RobotConfig) -> [f64; NJ] {
    let load = 0.5 * cfg.base_mass * cfg.gravity;
    let mut q = [0.0; NQ];
    q[3..].copy_from_slice(&cfg.nominal_pose);
    for _ in 0..200 {
        let mut next = q;
        for leg in 0..2 {
            let k = leg_kinematics(&q, leg, cfg);
            next[3 + 2 * leg] = cfg.nominal_pose[2 * leg] + k.d_hip[1] * load / cfg.kp;
            next[4 + 2 * leg] = cfg.nominal_pose[2 * leg + 1] + k.d_knee[1] * load / cfg.kp;
        }
        q = next;
    }
    [q[3], q[4], q[5], q[6]]
}

/// Standing at rest over `x` in static equilibrium: joints deflected by the
/// body weight and feet pressed in by the spring compression.
pub fn standing_state(x: f64, terrain: &Terrain, cfg: &RobotConfig) -> SimState {
    let mut q = [0.0; NQ];
    q[dof::X] = x;
    q[3..].copy_from_slice(&static_joint_pose(cfg));
    let reach = (0..2)
        .map(|leg| leg_kinematics(&q, leg, cfg).foot[1])
        .fold(f64::INFINITY, f64::min);
    let ground = terrain.height(x);
    q[dof::Z] = ground - reach - cfg.base_mass * cfg.gravity / (2.0 * cfg.contact_stiffness);
    let mut s = SimState {
        q,
        qd: [0.0; NQ],
        t: 0.0,
        phase: 0.0,
        clock_rate: 1.0,
        contact: [false; 2],
        support_height: ground,
    };
    s.contact = in_contact(&s.q, terrain, cfg);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pd_examples() {
        let cfg = RobotConfig::default();
        let tau = pd_torque(&[0.5, 0.0, 2.0, -2.0], &[0.2, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0], &cfg);
        assert!((tau[0] - 8.5).abs() < 1e-12);
        assert_eq!(tau[1], 0.0);
        assert_eq!(tau[2], 30.0);
        assert_eq!(tau[3], -30.0);
    }

    #[test]
    fn nominal_pose_stands_near_half_metre() {
        let cfg = RobotConfig::default();
        let s = standing_state(0.0, &Terrain::flat(), &cfg);
        assert!((s.q[dof::Z] - 0.5).abs() < 0.005, "z = {}", s.q[dof::Z]);
        assert_eq!(s.contact, [true, true]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let cfg = RobotConfig::default();
        let q = [0.1, 0.4, 0.2, 0.3, -0.6, -0.2, 0.5];
        for leg in 0..2 {
            let k = leg_kinematics(&q, leg, &cfg);
            for (idx, col) in [(2, k.d_pitch), (3 + 2 * leg, k.d_hip), (4 + 2 * leg, k.d_knee)] {
                let mut qp = q;
                let mut qm = q;
                qp[idx] += 1e-6;
                qm[idx] -= 1e-6;
                let fp = leg_kinematics(&qp, leg, &cfg).foot;
                let fm = leg_kinematics(&qm, leg, &cfg).foot;
                for i in 0..2 {
                    let fd = (fp[i] - fm[i]) / 2e-6;
                    assert!((fd - col[i]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn phase_wraps() {
        let cfg = RobotConfig::default();
        let mut p = 0.0;
        for _ in 0..25 {
            p = advance_phase(p, 2.0, &cfg);
        }
        assert!(p.abs() < 1e-9 || (1.0 - p).abs() < 1e-9);
        assert!((advance_phase(0.99, 1.0, &cfg) - 0.01).abs() < 1e-12);
    }
}
