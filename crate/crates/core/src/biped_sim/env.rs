//! Episode mechanics: observation layout, termination and the stepping loop.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::reward::{reward, RefPose, RewardConfig, TrackingError};
use super::robot::{self, dof, RobotConfig, SimState, NJ};
use super::terrain::Terrain;
use super::tracker::ReferenceTracker;
use crate::artifact::{self, Header};
use crate::error::{Error, Result};
use crate::refmotion::{ModeLibrary, NOMINAL_BASE_HEIGHT};
use crate::rng::Rng;

/// Proprioceptive part of the observation.
pub const PROPRIO_DIM: usize = 13;
/// Fall threshold as a fraction of the nominal base height.
pub const FALL_HEIGHT_FRACTION: f64 = 0.3;
pub const FALL_PITCH: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub robot: RobotConfig,
    pub reward: RewardConfig,
    pub terrain: Terrain,
    /// Use `sin/cos(2πφ)` for the clock; otherwise `sin/cos(φ)`.
    pub two_pi_clock: bool,
    pub clock_rate: f64,
    /// Half-width of the uniform perturbation applied to joint angles and
    /// pitch on reset.
    pub init_noise: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            robot: RobotConfig::default(),
            reward: RewardConfig::default(),
            terrain: Terrain::flat(),
            two_pi_clock: true,
            clock_rate: 1.0,
            init_noise: 0.02,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.reward.validate()?;
        self.terrain.validate()?;
        if !(self.clock_rate.is_finite() && self.clock_rate > 0.0) {
            return Err(Error::invalid(format!("clock rate must be positive, got {}", self.clock_rate)));
        }
        if !(self.init_noise.is_finite() && self.init_noise >= 0.0) {
            return Err(Error::invalid("init_noise must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub clock: [f64; 2],
    pub latent: Vec<f64>,
    /// `[z − support, pitch, 4 joint angles, heading velocity, vertical
    /// velocity, pitch rate, 4 joint velocities]`, velocities in the base frame.
    pub proprio: [f64; PROPRIO_DIM],
}

impl Observation {
    pub fn len(&self) -> usize {
        2 + self.latent.len() + PROPRIO_DIM
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.clock);
        v.extend_from_slice(&self.latent);
        v.extend_from_slice(&self.proprio);
        v
    }
}

pub fn clock(phase: f64, two_pi: bool) -> [f64; 2] {
    let a = if two_pi { TAU * phase } else { phase };
    [a.sin(), a.cos()]
}

pub fn observe(state: &SimState, latent: &[f64], two_pi_clock: bool) -> Observation {
    let (q, qd) = (&state.q, &state.qd);
    let (sp, cp) = q[dof::PITCH].sin_cos();
    let heading = cp * qd[dof::X] + sp * qd[dof::Z];
    let vertical = -sp * qd[dof::X] + cp * qd[dof::Z];
    Observation {
        clock: clock(state.phase, two_pi_clock),
        latent: latent.to_vec(),
        proprio: [
            state.relative_height(),
            q[dof::PITCH],
            q[3],
            q[4],
            q[5],
            q[6],
            heading,
            vertical,
            qd[dof::PITCH],
            qd[3],
            qd[4],
            qd[5],
            qd[6],
        ],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Running,
    Fallen,
    Blowup,
}

/// Fallen when the base sinks below a fraction of the nominal height over the
/// support plane, drops below that height over the lowest walkable ground
/// (a gap fall), or tips past the pitch limit.
pub fn termination(state: &SimState, terrain: &Terrain) -> Termination {
    if !state.is_finite() {
        return Termination::Blowup;
    }
    let floor = FALL_HEIGHT_FRACTION * NOMINAL_BASE_HEIGHT;
    if state.relative_height() < floor
        || state.q[dof::Z] - terrain.ground_level() < floor
        || state.q[dof::PITCH].abs() > FALL_PITCH
    {
        Termination::Fallen
    } else {
        Termination::Running
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub error: TrackingError,
    pub reference: RefPose,
    pub status: Termination,
}

/// A single robot tracking references from a mode library.
pub struct BipedEnv<'a> {
    pub cfg: &'a EnvConfig,
    pub library: &'a ModeLibrary,
    pub state: SimState,
    pub mode: usize,
    pub tracker: ReferenceTracker,
}

impl<'a> BipedEnv<'a> {
    /// Standing start at x = 0 in `mode`.
    pub fn new(cfg: &'a EnvConfig, library: &'a ModeLibrary, mode: usize) -> Result<Self> {
        Self::start(cfg, library, mode, None::<&mut Rng>)
    }

    /// Standing start with joint angles and pitch jittered by `init_noise`.
    pub fn perturbed<R: rand::Rng + ?Sized>(
        cfg: &'a EnvConfig,
        library: &'a ModeLibrary,
        mode: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::start(cfg, library, mode, Some(rng))
    }

    fn start<R: rand::Rng + ?Sized>(
        cfg: &'a EnvConfig,
        library: &'a ModeLibrary,
        mode: usize,
        rng: Option<&mut R>,
    ) -> Result<Self> {
        if mode >= library.len() {
            return Err(Error::invalid(format!("mode index {mode} out of range for {} modes", library.len())));
        }
        let mut state = robot::standing_state(0.0, &cfg.terrain, &cfg.robot);
        state.clock_rate = cfg.clock_rate;
        if let Some(rng) = rng {
            if cfg.init_noise > 0.0 {
                let n = cfg.init_noise;
                state.q[dof::PITCH] += rng.random_range(-n..n) * 0.5;
                for j in 3..3 + NJ {
                    state.q[j] += rng.random_range(-n..n);
                }
            }
        }
        let tracker = ReferenceTracker::start(library.motion(mode), state.phase, state.q[dof::X]);
        Ok(Self {
            cfg,
            library,
            state,
            mode,
            tracker,
        })
    }

    pub fn steps_per_cycle(&self) -> usize {
        self.cfg.robot.steps_per_cycle()
    }

    pub fn observation(&self) -> Result<Observation> {
        let latent = self.library.latent(self.mode)?;
        Ok(observe(&self.state, &latent.z, self.cfg.two_pi_clock))
    }

    /// Change the commanded mode, keeping the phase. The new reference is
    /// rebased so its x continues from the old one, which carries the
    /// tracking error across the switch unchanged.
    pub fn switch_mode(&mut self, mode: usize) -> Result<()> {
        if mode >= self.library.len() {
            return Err(Error::invalid(format!("mode index {mode} out of range")));
        }
        if mode != self.mode {
            let anchor = self.reference().x;
            self.mode = mode;
            self.tracker = ReferenceTracker::start(self.library.motion(mode), self.state.phase, anchor);
        }
        Ok(())
    }

    pub fn reference(&self) -> RefPose {
        self.tracker.pose(self.library.motion(self.mode), self.state.phase)
    }

    /// Apply a policy output, interpreted as an offset from the nominal joint
    /// pose, for one control period.
    pub fn step(&mut self, action: &[f64; NJ]) -> StepOutcome {
        let targets: [f64; NJ] = std::array::from_fn(|j| self.cfg.robot.nominal_pose[j] + action[j]);
        let old_phase = self.state.phase;
        match robot::step(&self.state, &targets, &self.cfg.terrain, &self.cfg.robot) {
            Ok(next) => self.state = next,
            Err(_) => {
                return StepOutcome {
                    reward: 0.0,
                    error: TrackingError::default(),
                    reference: self.reference(),
                    status: Termination::Blowup,
                }
            }
        }
        let motion = self.library.motion(self.mode);
        self.tracker.advance(motion, old_phase, self.state.phase);
        let reference = self.reference();
        let (r, error) = reward(&self.state, &reference, &self.cfg.reward);
        StepOutcome {
            reward: r,
            error,
            reference,
            status: termination(&self.state, &self.cfg.terrain),
        }
    }
}

/// One row per control step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub q: [f64; robot::NQ],
    pub qd: [f64; robot::NQ],
    pub contact: [bool; 2],
    pub reward: f64,
    pub mode: usize,
}

impl TraceRow {
    pub fn new(state: &SimState, reward: f64, mode: usize) -> Self {
        Self {
            t: state.t,
            q: state.q,
            qd: state.qd,
            contact: state.contact,
            reward,
            mode,
        }
    }
}

pub const TRACE_KIND: &str = "episode_trace";

pub fn trace_to_csv(rows: &[TraceRow], header: &Header) -> String {
    let mut out = artifact::csv_preamble(header);
    let names = ["x", "z", "pitch", "hip_l", "knee_l", "hip_r", "knee_r"];
    let mut cols = vec!["t".to_string()];
    cols.extend(names.iter().map(|n| n.to_string()));
    cols.extend(names.iter().map(|n| format!("d_{n}")));
    cols.extend(["contact_l", "contact_r", "reward", "mode"].map(String::from));
    out.push_str(&cols.join(","));
    out.push('\n');
    for r in rows {
        let mut f: Vec<String> = vec![r.t.to_string()];
        f.extend(r.q.iter().chain(&r.qd).map(|v| v.to_string()));
        f.extend(r.contact.iter().map(|&c| u8::from(c).to_string()));
        f.push(r.reward.to_string());
        f.push(r.mode.to_string());
        out.push_str(&f.join(","));
        out.push('\n');
    }
    out
}
