//! Rough reference motions built from keyframes.
//!
//! A clip stores five channels per control step: the per-step forward
//! displacement `dx`, base height `z` (relative to the support plane), base
//! pitch, and binary left/right contact flags. Absolute `x` is never stored;
//! the tracker in [`crate::biped_sim`] accumulates `dx` from an anchor so clips
//! can be replayed from wherever the robot currently stands.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{self, Header};
use crate::error::{Error, Result};
use crate::mode_encoder::LatentMode;

/// Nominal standing height of the base above the support plane (m).
pub const NOMINAL_BASE_HEIGHT: f64 = 0.5;
pub const DEFAULT_CLIP_DURATION: f64 = 1.0;
pub const DEFAULT_DT: f64 = 0.02;
pub const CHANNELS: usize = 5;

pub mod channel {
    pub const DX: usize = 0;
    pub const Z: usize = 1;
    pub const PITCH: usize = 2;
    pub const CONTACT_LEFT: usize = 3;
    pub const CONTACT_RIGHT: usize = 4;
}

pub type Sample = [f64; CHANNELS];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub time: f64,
    pub base_x: f64,
    pub base_z: f64,
    pub base_pitch: f64,
}

impl Keyframe {
    pub fn new(time: f64, base_x: f64, base_z: f64, base_pitch: f64) -> Self {
        Self {
            time,
            base_x,
            base_z,
            base_pitch,
        }
    }
}

/// A stretch of the clip's phase with a fixed contact pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPhase {
    pub start_phase: f64,
    pub end_phase: f64,
    pub left: bool,
    pub right: bool,
}

impl ContactPhase {
    pub fn new(start_phase: f64, end_phase: f64, left: bool, right: bool) -> Self {
        Self {
            start_phase,
            end_phase,
            left,
            right,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Periodic,
    Transient,
    SteadyState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMotion {
    pub name: String,
    pub kind: MotionKind,
    pub dt: f64,
    pub samples: Vec<Sample>,
}

/// Reference channels evaluated at an arbitrary phase of one clip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSample {
    /// Displacement accumulated from phase 0 up to the queried phase.
    pub displacement: f64,
    pub z: f64,
    pub pitch: f64,
    pub contact: [bool; 2],
}

/// Sample keyframes on a uniform grid with piecewise-linear interpolation.
///
/// The result is named `"unnamed"` and marked periodic; use
/// [`ReferenceMotion::with_name`] / [`ReferenceMotion::with_kind`] to adjust.
pub fn interpolate_keyframes(keyframes: &[Keyframe], dt: f64) -> Result<ReferenceMotion> {
    if keyframes.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 keyframes, got {}",
            keyframes.len()
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    for k in keyframes {
        if ![k.time, k.base_x, k.base_z, k.base_pitch].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("keyframe values must be finite"));
        }
    }
    if keyframes[0].time < 0.0 {
        return Err(Error::invalid("keyframe times must be non-negative"));
    }
    if keyframes.windows(2).any(|w| w[1].time <= w[0].time) {
        return Err(Error::invalid("keyframe times must be strictly increasing"));
    }

    let t0 = keyframes[0].time;
    let span = keyframes[keyframes.len() - 1].time - t0;
    let n = (span / dt + 1e-9).floor() as usize + 1;
    if n < 2 {
        return Err(Error::invalid(format!(
            "keyframe span {span} s is shorter than one step of {dt} s"
        )));
    }

    let mut seg = 0;
    let poses: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let t = t0 + i as f64 * dt;
            while seg + 2 < keyframes.len() && t > keyframes[seg + 1].time {
                seg += 1;
            }
            let (a, b) = (&keyframes[seg], &keyframes[seg + 1]);
            let s = ((t - a.time) / (b.time - a.time)).clamp(0.0, 1.0);
            [
                a.base_x + s * (b.base_x - a.base_x),
                a.base_z + s * (b.base_z - a.base_z),
                a.base_pitch + s * (b.base_pitch - a.base_pitch),
            ]
        })
        .collect();

    let samples = (0..n)
        .map(|i| {
            // Forward difference; the final row repeats the last interval.
            let dx = if i + 1 < n {
                poses[i + 1][0] - poses[i][0]
            } else {
                poses[i][0] - poses[i - 1][0]
            };
            [dx, poses[i][1], poses[i][2], 0.0, 0.0]
        })
        .collect();

    Ok(ReferenceMotion {
        name: "unnamed".to_string(),
        kind: MotionKind::Periodic,
        dt,
        samples,
    })
}

fn validate_tiling(phases: &[ContactPhase]) -> Result<()> {
    const TOL: f64 = 1e-12;
    if phases.is_empty() {
        return Err(Error::invalid("contact schedule is empty"));
    }
    for p in phases {
        if !(p.start_phase < p.end_phase) || p.start_phase < -TOL || p.end_phase > 1.0 + TOL {
            return Err(Error::invalid(format!(
                "contact phase [{}, {}) is not a sub-interval of [0, 1]",
                p.start_phase, p.end_phase
            )));
        }
    }
    if phases[0].start_phase.abs() > TOL {
        return Err(Error::invalid("contact schedule must start at phase 0"));
    }
    for w in phases.windows(2) {
        if (w[1].start_phase - w[0].end_phase).abs() > TOL {
            let what = if w[1].start_phase < w[0].end_phase {
                "overlap"
            } else {
                "gap"
            };
            return Err(Error::invalid(format!(
                "contact phases {what} at {} / {}",
                w[0].end_phase, w[1].start_phase
            )));
        }
    }
    if (phases[phases.len() - 1].end_phase - 1.0).abs() > TOL {
        return Err(Error::invalid("contact schedule must end at phase 1"));
    }
    Ok(())
}

fn contact_at(phases: &[ContactPhase], phase: f64) -> (bool, bool) {
    let p = phases
        .iter()
        .find(|p| phase >= p.start_phase && phase < p.end_phase)
        .unwrap_or(&phases[phases.len() - 1]);
    (p.left, p.right)
}

/// Fill the contact channels from a schedule that tiles the clip phase.
pub fn apply_contact_schedule(
    motion: &ReferenceMotion,
    phases: &[ContactPhase],
) -> Result<ReferenceMotion> {
    validate_tiling(phases)?;
    let mut out = motion.clone();
    let last = out.samples.len() - 1;
    let periodic = motion.kind == MotionKind::Periodic;
    for (i, s) in out.samples.iter_mut().enumerate() {
        // The closing sample of a periodic clip is the opening sample of the next.
        let phase = if periodic && i == last {
            0.0
        } else {
            i as f64 / last as f64
        };
        let (l, r) = contact_at(phases, phase);
        s[channel::CONTACT_LEFT] = f64::from(u8::from(l));
        s[channel::CONTACT_RIGHT] = f64::from(u8::from(r));
    }
    Ok(out)
}

impl ReferenceMotion {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_kind(mut self, kind: MotionKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt
    }

    /// `cum[j]` is the displacement from sample 0 to sample `j`.
    pub fn cumulative_displacement(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            out.push(acc);
            acc += s[channel::DX];
        }
        out
    }

    /// Net displacement over one clip.
    pub fn clip_displacement(&self) -> f64 {
        self.samples[..self.samples.len() - 1]
            .iter()
            .map(|s| s[channel::DX])
            .sum()
    }

    /// Absolute x positions assuming the clip starts at `x0`.
    pub fn positions(&self, x0: f64) -> Vec<f64> {
        self.cumulative_displacement().into_iter().map(|c| x0 + c).collect()
    }

    /// Channels at a phase in `[0, 1]`; continuous channels interpolate
    /// linearly, contacts take the sample at or before the phase.
    pub fn at_phase(&self, phase: f64) -> PhaseSample {
        let last = self.samples.len() - 1;
        let u = phase.clamp(0.0, 1.0) * last as f64;
        let i = (u.floor() as usize).min(last - 1);
        let s = u - i as f64;
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let cum_i: f64 = self.samples[..i].iter().map(|r| r[channel::DX]).sum();
        let lerp = |c: usize| a[c] + s * (b[c] - a[c]);
        let contact_row = if s >= 1.0 - 1e-9 { b } else { a };
        PhaseSample {
            displacement: cum_i + s * a[channel::DX],
            z: lerp(channel::Z),
            pitch: lerp(channel::PITCH),
            contact: [
                contact_row[channel::CONTACT_LEFT] > 0.5,
                contact_row[channel::CONTACT_RIGHT] > 0.5,
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::invalid(format!("motion `{}` has fewer than 2 samples", self.name)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(format!("motion `{}` has non-positive dt", self.name)));
        }
        for s in &self.samples {
            if !s.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("motion `{}` has non-finite samples", self.name)));
            }
            for c in [channel::CONTACT_LEFT, channel::CONTACT_RIGHT] {
                if s[c] != 0.0 && s[c] != 1.0 {
                    return Err(Error::invalid(format!(
                        "motion `{}` has a non-binary contact channel",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub motion: ReferenceMotion,
    pub latent: Option<LatentMode>,
}

/// Ordered set of modes; the position of an entry is its mode index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeLibrary {
    pub entries: Vec<ModeEntry>,
}

pub const LIBRARY_KIND: &str = "mode_library";

impl ModeLibrary {
    pub fn new(motions: Vec<ReferenceMotion>) -> Result<Self> {
        let lib = Self {
            entries: motions
                .into_iter()
                .map(|motion| ModeEntry { motion, latent: None })
                .collect(),
        };
        lib.validate()?;
        Ok(lib)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::invalid("mode library is empty"));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.motion.name.as_str()) {
                return Err(Error::invalid(format!("duplicate mode name `{}`", e.motion.name)));
            }
            e.motion.validate()?;
        }
        let dims: HashSet<usize> = self
            .entries
            .iter()
            .filter_map(|e| e.latent.as_ref().map(|l| l.z.len()))
            .collect();
        if dims.len() > 1 {
            return Err(Error::invalid("latent modes have inconsistent lengths"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.motion.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.motion.name == name)
    }

    pub fn motion(&self, index: usize) -> &ReferenceMotion {
        &self.entries[index].motion
    }

    pub fn latent(&self, index: usize) -> Result<&LatentMode> {
        self.entries[index].latent.as_ref().ok_or_else(|| {
            Error::invalid(format!(
                "mode `{}` has no latent; train the encoder first",
                self.entries[index].motion.name
            ))
        })
    }

    pub fn has_latents(&self) -> bool {
        self.entries.iter().all(|e| e.latent.is_some())
    }

    pub fn latent_dim(&self) -> Option<usize> {
        self.entries.first()?.latent.as_ref().map(|l| l.z.len())
    }

    /// Keep only the named modes, in the given order.
    pub fn subset(&self, names: &[&str]) -> Result<Self> {
        let entries = names
            .iter()
            .map(|n| {
                self.index_of(n)
                    .map(|i| self.entries[i].clone())
                    .ok_or_else(|| Error::invalid(format!("unknown mode `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let lib = Self { entries };
        lib.validate()?;
        Ok(lib)
    }

    pub fn to_json_string(&self, config_hash: &str) -> String {
        artifact::to_json_string(&Header::new(LIBRARY_KIND, config_hash), self)
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        artifact::write_text(path, &self.to_json_string(config_hash))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (_, lib): (_, Self) = artifact::read_json(path, LIBRARY_KIND)?;
        lib.validate()?;
        Ok(lib)
    }
}

// ---------------------------------------------------------------------------
// Mode definitions (human-edited TOML)
// ---------------------------------------------------------------------------

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// One mode as written in a mode-set definition file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeDef {
    pub name: String,
    pub kind: MotionKind,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub keyframes: Vec<Keyframe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contacts: Option<Vec<ContactPhase>>,
}

impl ModeDef {
    pub fn build(&self) -> Result<ReferenceMotion> {
        let motion = interpolate_keyframes(&self.keyframes, self.dt)
            .map_err(|e| Error::invalid(format!("mode `{}`: {e}", self.name)))?
            .with_name(self.name.clone())
            .with_kind(self.kind);
        match &self.contacts {
            Some(phases) => apply_contact_schedule(&motion, phases)
                .map_err(|e| Error::invalid(format!("mode `{}`: {e}", self.name))),
            None => Ok(motion),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSetDef {
    #[serde(rename = "mode")]
    pub modes: Vec<ModeDef>,
}

impl ModeSetDef {
    pub fn build(&self) -> Result<ModeLibrary> {
        ModeLibrary::new(self.modes.iter().map(ModeDef::build).collect::<Result<_>>()?)
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("mode set is serialisable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&artifact::read_text(path)?, path)
    }
}

pub const MODESET_SELECTORS: &[&str] = &["pi1", "pi2", "pi3", "idle_walk"];

fn kf(t: f64, x: f64, z: f64, p: f64) -> Keyframe {
    Keyframe::new(t, x, z, p)
}

fn idle_def() -> ModeDef {
    let h = NOMINAL_BASE_HEIGHT;
    ModeDef {
        name: "idle".into(),
        kind: MotionKind::SteadyState,
        dt: DEFAULT_DT,
        keyframes: vec![kf(0.0, 0.0, h, 0.0), kf(DEFAULT_CLIP_DURATION, 0.0, h, 0.0)],
        contacts: None,
    }
}

fn walk_def(name: &str, stride: f64) -> ModeDef {
    let h = NOMINAL_BASE_HEIGHT;
    ModeDef {
        name: name.into(),
        kind: MotionKind::Periodic,
        dt: DEFAULT_DT,
        keyframes: vec![kf(0.0, 0.0, h, 0.0), kf(DEFAULT_CLIP_DURATION, stride, h, 0.0)],
        contacts: None,
    }
}

/// One bound per clip: crouch, rise to an apex, land, settle.
fn leap_def(name: &str, stride: f64) -> ModeDef {
    let h = NOMINAL_BASE_HEIGHT;
    let lean = 0.1 * stride.signum();
    ModeDef {
        name: name.into(),
        kind: MotionKind::Periodic,
        dt: DEFAULT_DT,
        keyframes: vec![
            kf(0.0, 0.0, h, 0.0),
            kf(0.2, 0.2 * stride, h - 0.08, lean),
            kf(0.5, 0.5 * stride, h + 0.12, 0.0),
            kf(0.8, 0.8 * stride, h, -0.5 * lean),
            kf(1.0, stride, h, 0.0),
        ],
        contacts: None,
    }
}

/// Single time-critical jump: crouch, launch, land on a raised support.
fn launch_def() -> ModeDef {
    let h = NOMINAL_BASE_HEIGHT;
    ModeDef {
        name: "launch".into(),
        kind: MotionKind::Transient,
        dt: DEFAULT_DT,
        keyframes: vec![
            kf(0.0, 0.0, h, 0.0),
            kf(0.3, 0.05, h - 0.1, 0.15),
            kf(0.6, 0.3, h + 0.25, -0.05),
            kf(1.0, 0.4, h, 0.0),
        ],
        contacts: None,
    }
}

fn with_contacts(mut def: ModeDef, phases: Vec<ContactPhase>) -> ModeDef {
    def.contacts = Some(phases);
    def
}

/// Mode-set definitions for the built-in selectors.
///
/// Lateral directions have no planar counterpart; `l` and `r` variants are
/// backward motions with shorter strides so every mode stays distinct.
pub fn builtin_modeset(selector: &str) -> Result<ModeSetDef> {
    let modes = match selector {
        "pi1" => vec![
            idle_def(),
            walk_def("walk_f", 0.5),
            walk_def("walk_b", -0.5),
            walk_def("walk_l", -0.3),
            walk_def("walk_r", -0.2),
            leap_def("leap_f", 0.5),
            leap_def("leap_b", -0.5),
            leap_def("leap_l", -0.3),
            leap_def("leap_r", -0.2),
        ],
        "pi2" => vec![
            idle_def(),
            walk_def("walk_f", 0.5),
            leap_def("leap_f", 0.5),
            launch_def(),
        ],
        "pi3" => {
            let both = |a, b, on| ContactPhase::new(a, b, on, on);
            vec![
                with_contacts(idle_def(), vec![both(0.0, 1.0, true)]),
                // Legs out of synchronisation.
                with_contacts(
                    walk_def("walk_f", 0.5),
                    vec![
                        ContactPhase::new(0.0, 0.5, true, false),
                        ContactPhase::new(0.5, 1.0, false, true),
                    ],
                ),
                // Same base pose, legs in synchronisation.
                with_contacts(
                    walk_def("hop_f", 0.5),
                    vec![both(0.0, 0.5, true), both(0.5, 1.0, false)],
                ),
                with_contacts(
                    leap_def("leap_f", 0.5),
                    vec![both(0.0, 0.3, true), both(0.3, 0.7, false), both(0.7, 1.0, true)],
                ),
            ]
        }
        "idle_walk" => vec![idle_def(), walk_def("walk_f", 0.5)],
        other => {
            return Err(Error::invalid(format!(
                "unknown mode set `{other}`; valid selectors: {}",
                MODESET_SELECTORS.join(", ")
            )))
        }
    };
    Ok(ModeSetDef { modes })
}

pub fn builtin_library(selector: &str) -> Result<ModeLibrary> {
    builtin_modeset(selector)?.build()
}
