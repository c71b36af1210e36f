use mmloco::refmotion::{
    builtin_library, channel, interpolate_keyframes, Keyframe, ModeLibrary, MotionKind, CHANNELS,
};
use proptest::prelude::*;

/// Keyframes on a `dt` grid: integer step gaps and bounded poses.
fn keyframes() -> impl Strategy<Value = (Vec<Keyframe>, f64)> {
    let dt = prop::sample::select(vec![0.01, 0.02, 0.05]);
    let frames = prop::collection::vec((1usize..12, -1.0f64..1.0, 0.3f64..0.7, -0.4f64..0.4), 1..6);
    (dt, -0.5f64..0.5, frames).prop_map(|(dt, x0, frames)| {
        let mut out = vec![Keyframe::new(0.0, x0, 0.5, 0.0)];
        let mut step = 0;
        for (gap, x, z, p) in frames {
            step += gap;
            out.push(Keyframe::new(step as f64 * dt, x, z, p));
        }
        (out, dt)
    })
}

fn index_at(kf: &Keyframe, dt: f64) -> usize {
    (kf.time / dt).round() as usize
}

proptest! {
    #[test]
    fn samples_hit_every_keyframe((kfs, dt) in keyframes()) {
        let m = interpolate_keyframes(&kfs, dt).unwrap();
        let xs = m.positions(kfs[0].base_x);
        for k in &kfs {
            let i = index_at(k, dt);
            prop_assert!((xs[i] - k.base_x).abs() < 1e-12);
            prop_assert!((m.samples[i][channel::Z] - k.base_z).abs() < 1e-12);
            prop_assert!((m.samples[i][channel::PITCH] - k.base_pitch).abs() < 1e-12);
        }
    }

    #[test]
    fn half_step_resampling_keeps_every_other_sample((kfs, dt) in keyframes()) {
        let coarse = interpolate_keyframes(&kfs, dt).unwrap();
        let fine = interpolate_keyframes(&kfs, dt / 2.0).unwrap();
        prop_assert_eq!(fine.len(), 2 * coarse.len() - 1);
        let (xc, xf) = (coarse.positions(0.0), fine.positions(0.0));
        for (i, s) in coarse.samples.iter().enumerate() {
            let f = &fine.samples[2 * i];
            prop_assert!((xc[i] - xf[2 * i]).abs() < 1e-12);
            prop_assert!((s[channel::Z] - f[channel::Z]).abs() < 1e-12);
            prop_assert!((s[channel::PITCH] - f[channel::PITCH]).abs() < 1e-12);
        }
    }
}

#[test]
fn builtin_contacts_are_binary() {
    for sel in ["pi1", "pi2", "pi3", "idle_walk"] {
        let lib = builtin_library(sel).unwrap();
        for m in &lib.entries {
            for s in &m.motion.samples {
                for c in [channel::CONTACT_LEFT, channel::CONTACT_RIGHT] {
                    assert!(s[c] == 0.0 || s[c] == 1.0, "{sel}/{}", m.motion.name);
                }
                assert_eq!(s.len(), CHANNELS);
            }
        }
    }
}

#[test]
fn pi3_walk_alternates_support() {
    let lib = builtin_library("pi3").unwrap();
    let walk = lib.motion(lib.index_of("walk_f").unwrap());
    let pairs: Vec<(f64, f64)> = walk
        .samples
        .iter()
        .map(|s| (s[channel::CONTACT_LEFT], s[channel::CONTACT_RIGHT]))
        .collect();
    assert!(pairs.contains(&(1.0, 0.0)) && pairs.contains(&(0.0, 1.0)));
}

#[test]
fn launch_is_the_only_transient() {
    let lib = builtin_library("pi2").unwrap();
    let kinds: Vec<MotionKind> = lib.entries.iter().map(|e| e.motion.kind).collect();
    assert_eq!(
        kinds,
        [MotionKind::SteadyState, MotionKind::Periodic, MotionKind::Periodic, MotionKind::Transient]
    );
}

#[test]
fn library_file_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("library.json");
    let lib = builtin_library("pi1").unwrap();
    lib.save(&path, "abc").unwrap();
    let back = ModeLibrary::load(&path).unwrap();
    assert_eq!(back, lib);
    assert_eq!(back.to_json_string("abc"), std::fs::read_to_string(&path).unwrap());
}
