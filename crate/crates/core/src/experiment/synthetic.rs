use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataio::{SkeletonSequence, ACTIONS};
use crate::dgnn::SKELETON_JOINTS;

/// Standing pose in meters: x to the subject's left, y up, z away from the
/// sensor.
const REST_POSE: [[f64; 3]; SKELETON_JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.2, 0.0],
    [0.0, 0.45, 0.0],
    [0.0, 0.62, 0.0],
    [-0.18, 0.4, 0.0],
    [-0.25, 0.15, 0.0],
    [-0.28, -0.05, 0.0],
    [-0.29, -0.12, 0.0],
    [0.18, 0.4, 0.0],
    [0.25, 0.15, 0.0],
    [0.28, -0.05, 0.0],
    [0.29, -0.12, 0.0],
    [-0.1, -0.05, 0.0],
    [-0.11, -0.45, 0.0],
    [-0.12, -0.85, 0.0],
    [-0.12, -0.9, -0.1],
    [0.1, -0.05, 0.0],
    [0.11, -0.45, 0.0],
    [0.12, -0.85, 0.0],
    [0.12, -0.9, -0.1],
];

const UPPER_BODY: std::ops::Range<usize> = 0..12;
const LEFT_LEG: [usize; 3] = [13, 14, 15];
const RIGHT_LEG: [usize; 3] = [17, 18, 19];
const LEFT_ARM: [usize; 3] = [5, 6, 7];
const RIGHT_ARM: [usize; 3] = [9, 10, 11];

/// Pose of `action` at progress `s` in `[0, 1]` with cycle phase `phase`.
fn pose(action: usize, s: f64, phase: f64) -> [[f64; 3]; SKELETON_JOINTS] {
    let mut p = REST_POSE;
    let t = 2.0 * PI * s + phase;
    match ACTIONS[action] {
        "walk" => {
            for (i, &j) in LEFT_LEG.iter().enumerate() {
                p[j][2] += 0.15 * (i + 1) as f64 * t.sin();
            }
            for (i, &j) in RIGHT_LEG.iter().enumerate() {
                p[j][2] -= 0.15 * (i + 1) as f64 * t.sin();
            }
            for &j in &LEFT_ARM {
                p[j][2] -= 0.1 * t.sin();
            }
            for &j in &RIGHT_ARM {
                p[j][2] += 0.1 * t.sin();
            }
        }
        "sitDown" | "standUp" => {
            let depth = if ACTIONS[action] == "sitDown" { s } else { 1.0 - s };
            for j in UPPER_BODY {
                p[j][1] -= 0.45 * depth;
            }
            for j in [12, 16] {
                p[j][1] -= 0.45 * depth;
                p[j][2] -= 0.1 * depth;
            }
            for j in [13, 17] {
                p[j][2] -= 0.4 * depth;
                p[j][1] -= 0.05 * depth;
            }
        }
        "pickUp" => {
            let bend = (PI * s).sin();
            for j in 2..12 {
                let lever = p[j][1] - p[0][1];
                p[j][2] -= 0.8 * bend * lever;
                p[j][1] -= 0.5 * bend * lever;
            }
            for &j in LEFT_ARM.iter().chain(&RIGHT_ARM) {
                p[j][1] -= 0.3 * bend;
            }
        }
        "waveHands" => {
            for (i, &j) in RIGHT_ARM.iter().enumerate() {
                p[j][1] += 0.45 + 0.2 * i as f64;
                p[j][0] += 0.1 * (i + 1) as f64 * (2.0 * t).sin();
            }
        }
        "clapHands" => {
            let open = 0.5 + 0.5 * (3.0 * t).cos();
            for &j in LEFT_ARM.iter().chain(&RIGHT_ARM) {
                p[j][0] *= 0.15 + 0.85 * open;
                p[j][1] += 0.3;
                p[j][2] -= 0.25;
            }
        }
        other => unreachable!("no motion model for {other}"),
    }
    p
}

/// Six-action skeleton sequences for `recordings` ids `sXX_eYY`. Each
/// recording draws its own body scale, placement, phase and speed; frames
/// carry 1 cm joint jitter.
pub fn synthetic_skeletons(recordings: usize, frames: usize, seed: u64) -> Vec<SkeletonSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.01).expect("valid sigma");
    let mut out = Vec::with_capacity(recordings * ACTIONS.len());
    for r in 0..recordings {
        let subject = format!("s{:02}_e{:02}", r / 2 + 1, r % 2 + 1);
        let scale = rng.random_range(0.85..1.15);
        let origin = [rng.random_range(-0.5..0.5), rng.random_range(-0.2..0.2), rng.random_range(2.0..3.5)];
        for action in 0..ACTIONS.len() {
            let phase = rng.random_range(0.0..2.0 * PI);
            let speed = rng.random_range(0.8..1.2);
            let frames = (0..frames)
                .map(|f| {
                    let s = (f as f64 / frames.max(2).saturating_sub(1) as f64 * speed).min(1.0);
                    let mut p = pose(action, s, phase);
                    for joint in p.iter_mut() {
                        for (a, v) in joint.iter_mut().enumerate() {
                            *v = origin[a] + scale * *v + jitter.sample(&mut rng);
                        }
                    }
                    p
                })
                .collect();
            out.push(SkeletonSequence {
                subject: subject.clone(),
                action,
                frames,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_determinism() {
        let a = synthetic_skeletons(4, 10, 3);
        assert_eq!(a.len(), 24);
        assert!(a.iter().all(|s| s.frames.len() == 10));
        assert_eq!(a[6].subject, "s01_e02");
        assert_eq!(a, synthetic_skeletons(4, 10, 3));
        assert_ne!(a, synthetic_skeletons(4, 10, 4));
    }
}
