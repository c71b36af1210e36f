//! Reference pose generator that follows a clip through its phase and
//! accumulates forward displacement across cycles.

use serde::{Deserialize, Serialize};

use super::reward::RefPose;
use crate::refmotion::{MotionKind, ReferenceMotion};

/// Reference pose of `motion` at phase `phase` for a clip that started at
/// `entry_x`. With `held` set, the final sample of the clip is returned.
pub fn reference_pose(motion: &ReferenceMotion, phase: f64, entry_x: f64, held: bool) -> RefPose {
    if held {
        let s = motion.at_phase(1.0);
        return RefPose {
            x: entry_x,
            z: s.z,
            pitch: s.pitch,
            contact: s.contact,
        };
    }
    let s = motion.at_phase(phase);
    RefPose {
        x: entry_x + s.displacement,
        z: s.z,
        pitch: s.pitch,
        contact: s.contact,
    }
}

/// Tracks which clip of the active mode is playing and where it started.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTracker {
    pub entry_x: f64,
    /// Set once a transient clip has played through; its final pose is held.
    pub held: bool,
}

impl ReferenceTracker {
    /// Start a mode at `phase` such that the reference passes through `anchor_x`.
    pub fn start(motion: &ReferenceMotion, phase: f64, anchor_x: f64) -> Self {
        Self {
            entry_x: anchor_x - motion.at_phase(phase).displacement,
            held: false,
        }
    }

    pub fn pose(&self, motion: &ReferenceMotion, phase: f64) -> RefPose {
        reference_pose(motion, phase, self.entry_x, self.held)
    }

    /// Account for the phase moving from `old` to `new`; a decrease means the
    /// clip wrapped around.
    pub fn advance(&mut self, motion: &ReferenceMotion, old: f64, new: f64) {
        if new >= old || self.held {
            return;
        }
        self.entry_x += motion.clip_displacement();
        if motion.kind == MotionKind::Transient {
            self.held = true;
        }
    }
}
