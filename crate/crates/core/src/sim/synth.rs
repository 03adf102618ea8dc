//! Synthetic two-person handshake recordings.
//!
//! Two facing skeletons reach for each other with minimum-jerk wrist
//! profiles: idle stand, reach, then a held grasp. The generator writes
//! standard `.skeleton` files so the whole ingestion pipeline runs on them,
//! plus a sidecar truth file with the exact segment bounds (computed from
//! the noiseless paths with the default segmentation thresholds), final
//! wrist positions and bone lengths.

use super::PipelineError;
use crate::skeleton::{
    write_skeleton_file, RawJoint, RawSkeletonFrame, RawSkeletonSequence, SegmentationConfig,
    TrackingState, NOMINAL_FRAME_RATE, RAW_JOINT_COUNT,
};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    /// Standard deviation of additive Gaussian joint noise, meters.
    pub noise_std: f64,
    /// How many of the interactions shake with the left hand instead.
    pub left_handed: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 10,
            seed: 0,
            noise_std: 0.0,
            left_handed: 0,
        }
    }
}

/// Ground truth embedded next to each generated recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub frames: usize,
    pub left_handed: bool,
    /// First frame with wrist speed above the default start threshold.
    pub t_start: usize,
    /// First sustained wrist contact under the default grasp threshold.
    pub t_grasp: usize,
    pub final_wrist_a: [f64; 3],
    pub final_wrist_b: [f64; 3],
    /// Upper-arm and forearm length of person A, meters.
    pub bones_a: [f64; 2],
    pub bones_b: [f64; 2],
}

const UP: Vector3<f64> = Vector3::new(0.0, 1.0, 0.0);

struct Person {
    base: Vector3<f64>,
    facing: Vector3<f64>,
    right: Vector3<f64>,
    upper_arm: f64,
    forearm: f64,
    /// Preferred elbow bend direction, varies per person so demonstrations
    /// cover a spread of roll/yaw combinations.
    bend_hint: Vector3<f64>,
    /// Rest-pose wrist offset from straight-down, varies per person.
    hang_offset: Vector3<f64>,
}

impl Person {
    fn spine_shoulder(&self) -> Vector3<f64> {
        self.base + UP * 0.48
    }

    fn shoulder(&self, right_side: bool) -> Vector3<f64> {
        let sign = if right_side { 1.0 } else { -1.0 };
        self.spine_shoulder() + self.right * (0.185 * sign) - UP * 0.02
    }

    /// Rest pose of a hanging wrist: almost straight down with a personal
    /// offset, kept strictly inside the reachable ball.
    fn hang_wrist(&self, right_side: bool) -> Vector3<f64> {
        let reach = self.upper_arm + self.forearm;
        let s = self.shoulder(right_side);
        let raw = -UP * (0.95 * reach) + self.hang_offset;
        let limit = 0.98 * reach;
        let scaled = if raw.norm() > limit {
            raw * (limit / raw.norm())
        } else {
            raw
        };
        s + scaled
    }

    /// Elbow position for a wrist target via planar two-link geometry. The
    /// bend direction follows `hint` projected off the shoulder-wrist line;
    /// the achieved direction is written back so the caller can carry it to
    /// the next frame, which keeps the elbow path continuous even when the
    /// original hint momentarily aligns with the arm axis.
    fn elbow(&self, right_side: bool, wrist: Vector3<f64>, hint: &mut Vector3<f64>) -> Vector3<f64> {
        let s = self.shoulder(right_side);
        let l_u = self.upper_arm;
        let l_f = self.forearm;
        let d = wrist - s;
        let dist = d.norm().min(l_u + l_f - 1e-9).max(1e-9);
        let along = d.normalize();
        let a = (l_u * l_u - l_f * l_f + dist * dist) / (2.0 * dist);
        let h = (l_u * l_u - a * a).max(0.0).sqrt();
        let mut perp = *hint - along * hint.dot(&along);
        if perp.norm() < 1e-6 {
            perp = self.facing - along * self.facing.dot(&along);
        }
        if perp.norm() < 1e-6 {
            perp = self.right - along * self.right.dot(&along);
        }
        let perp = perp.normalize();
        *hint = perp;
        s + along * a + perp * h
    }

    /// All 25 joints in the raw capture order for given wrist positions.
    fn raw_joints(
        &self,
        wrist_r: Vector3<f64>,
        wrist_l: Vector3<f64>,
        hint_r: &mut Vector3<f64>,
        hint_l: &mut Vector3<f64>,
    ) -> [Vector3<f64>; RAW_JOINT_COUNT] {
        let elbow_r = self.elbow(true, wrist_r, hint_r);
        let elbow_l = self.elbow(false, wrist_l, hint_l);
        let fore_r = (wrist_r - elbow_r).normalize();
        let fore_l = (wrist_l - elbow_l).normalize();
        let hip_l = self.base - self.right * 0.09;
        let hip_r = self.base + self.right * 0.09;

        let mut joints = [Vector3::zeros(); RAW_JOINT_COUNT];
        joints[0] = self.base;
        joints[1] = self.base + UP * 0.24;
        joints[2] = self.base + UP * 0.55; // neck
        joints[3] = self.base + UP * 0.66; // head
        joints[4] = self.shoulder(false);
        joints[5] = elbow_l;
        joints[6] = wrist_l;
        joints[7] = wrist_l + fore_l * 0.07;
        joints[8] = self.shoulder(true);
        joints[9] = elbow_r;
        joints[10] = wrist_r;
        joints[11] = wrist_r + fore_r * 0.07;
        joints[12] = hip_l;
        joints[13] = hip_l - UP * 0.45;
        joints[14] = hip_l - UP * 0.87;
        joints[15] = hip_l - UP * 0.87 + self.facing * 0.12;
        joints[16] = hip_r;
        joints[17] = hip_r - UP * 0.45;
        joints[18] = hip_r - UP * 0.87;
        joints[19] = hip_r - UP * 0.87 + self.facing * 0.12;
        joints[20] = self.spine_shoulder();
        joints[21] = wrist_l + fore_l * 0.125;
        joints[22] = wrist_l + fore_l * 0.05 - self.right * 0.03;
        joints[23] = wrist_r + fore_r * 0.125;
        joints[24] = wrist_r + fore_r * 0.05 + self.right * 0.03;
        joints
    }
}

fn minimum_jerk(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

/// Wrist position timeline: hold, a brisk minimum-jerk reach along a gently
/// curved path to a waypoint just outside contact, a short minimum-jerk
/// closing move onto the goal, then hold. Every point is clamped inside the
/// reachable ball around the shoulder.
#[allow(clippy::too_many_arguments)]
fn wrist_path(
    start: Vector3<f64>,
    waypoint: Vector3<f64>,
    goal: Vector3<f64>,
    arc: Vector3<f64>,
    shoulder: Vector3<f64>,
    reach: f64,
    pre: usize,
    mid: usize,
    arrive: usize,
    total: usize,
) -> Vec<Vector3<f64>> {
    let reach_frames = (mid - pre).max(1);
    let close_frames = (arrive - mid).max(1);
    (0..total)
        .map(|t| {
            let p = if t <= pre {
                start
            } else if t <= mid {
                let s = minimum_jerk((t - pre) as f64 / reach_frames as f64);
                start + (waypoint - start) * s + arc * (std::f64::consts::PI * s).sin()
            } else {
                let s = minimum_jerk((t - mid) as f64 / close_frames as f64);
                waypoint + (goal - waypoint) * s
            };
            let rel = p - shoulder;
            let limit = 0.985 * reach;
            if rel.norm() > limit {
                shoulder + rel * (limit / rel.norm())
            } else {
                p
            }
        })
        .collect()
}

/// Mirror of the segmenter's published velocity semantics: least-squares
/// slope over the trailing window, above threshold for max_gap consecutive
/// frames. Evaluated on the noiseless paths.
fn first_motion(paths: &[&[Vector3<f64>]], cfg: &SegmentationConfig) -> Option<usize> {
    let window = crate::skeleton::VELOCITY_WINDOW;
    let n = paths[0].len();
    let speed = |path: &[Vector3<f64>], t: usize| -> f64 {
        if t + 1 < window {
            return 0.0;
        }
        let lo = t + 1 - window;
        let mean_x = (window as f64 - 1.0) / 2.0;
        let mut sxx = 0.0;
        let mut sxy = Vector3::zeros();
        for (i, u) in (lo..=t).enumerate() {
            let dx = i as f64 - mean_x;
            sxx += dx * dx;
            sxy += path[u] * dx;
        }
        (sxy / sxx).norm() * NOMINAL_FRAME_RATE
    };
    let moving = |t: usize| {
        paths
            .iter()
            .any(|p| speed(p, t) > cfg.start_velocity_threshold)
    };
    let persist = cfg.max_gap.max(1);
    (0..n).find(|&t| (t..(t + persist).min(n)).all(moving))
}

fn first_sustained_contact(
    a: &[Vector3<f64>],
    b: &[Vector3<f64>],
    from: usize,
    cfg: &SegmentationConfig,
) -> Option<usize> {
    let n = a.len();
    't: for t in from..n {
        let hold = (t + cfg.max_gap).min(n - 1);
        for u in t..=hold {
            if (a[u] - b[u]).norm() > cfg.grasp_distance_threshold {
                continue 't;
            }
        }
        return Some(t);
    }
    None
}

/// Builds one interaction; returns the `.skeleton` file text and its truth.
pub fn generate_interaction_text(seed: u64, noise_std: f64, left_handed: bool) -> (String, SynthTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let depth = rng.gen_range(2.4..3.2);
    let sep = rng.gen_range(0.62..0.72);
    let base_y_a = rng.gen_range(0.88..1.0);
    let base_y_b = rng.gen_range(0.88..1.0);

    fn sample_person(
        rng: &mut ChaCha8Rng,
        base: Vector3<f64>,
        facing: Vector3<f64>,
    ) -> Person {
        let right = facing.cross(&UP);
        Person {
            base,
            facing,
            right,
            upper_arm: 0.0,
            forearm: 0.0,
            bend_hint: (-UP
                + right * rng.gen_range(-0.9..0.9)
                + facing * rng.gen_range(0.0..0.9))
            .normalize(),
            hang_offset: facing * rng.gen_range(0.02..0.14)
                + right * rng.gen_range(-0.08..0.08),
        }
    }
    let mut a = sample_person(
        &mut rng,
        Vector3::new(-sep / 2.0, base_y_a, depth),
        Vector3::new(1.0, 0.0, 0.0),
    );
    let depth_b = depth + rng.gen_range(-0.03..0.03);
    let mut b = sample_person(
        &mut rng,
        Vector3::new(sep / 2.0, base_y_b, depth_b),
        Vector3::new(-1.0, 0.0, 0.0),
    );

    // The animated side: right hands normally, left hands for a left shake.
    let side_right = !left_handed;

    // Bone lengths are chosen so the meeting point sits at a varied but
    // comfortable fraction of each reach.
    let shoulder_mid = (a.shoulder(side_right) + b.shoulder(side_right)) * 0.5;
    let meet = shoulder_mid
        + Vector3::new(
            rng.gen_range(-0.08..0.08),
            -rng.gen_range(0.0..0.32),
            rng.gen_range(-0.10..0.10),
        );
    for person in [&mut a, &mut b] {
        let dist = (meet - person.shoulder(side_right)).norm();
        let reach = dist / rng.gen_range(0.68..0.90);
        person.upper_arm = reach * rng.gen_range(0.52..0.56);
        person.forearm = reach - person.upper_arm;
    }

    // Final wrists straddle the meeting point across the shoulder-offset
    // axis, comfortably inside the grasp threshold.
    let offset = Vector3::new(0.0, 0.0, 0.02);
    let goal_a = meet + offset;
    let goal_b = meet - offset;

    let pre_a = rng.gen_range(6..=12);
    let pre_b = rng.gen_range(6..=12);
    // A brisk reach to just outside contact distance, then a short closing
    // move; grasp detection fires mid-close, so cropped segments come out
    // around the 32-frame median.
    let reach_frames = rng.gen_range(26..=34);
    let close_frames = rng.gen_range(10..=16);
    let mid = pre_a.max(pre_b) + reach_frames;
    let arrive = mid + close_frames;
    let total = arrive + 14;

    // Waypoints where the wrist-to-wrist gap is about 0.20 m.
    let start_a = a.hang_wrist(side_right);
    let start_b = b.hang_wrist(side_right);
    let rest_gap = (start_a - start_b).norm();
    let s1 = (1.0 - 0.20 / rest_gap).clamp(0.4, 0.95);
    let way_a = start_a + (goal_a - start_a) * s1;
    let way_b = start_b + (goal_b - start_b) * s1;

    // Sideways arc perpendicular to the reach direction, personal per side.
    fn sample_arc(
        rng: &mut ChaCha8Rng,
        person: &Person,
        start: Vector3<f64>,
        waypoint: Vector3<f64>,
    ) -> Vector3<f64> {
        let chord = waypoint - start;
        let mix = UP + person.right * rng.gen_range(-1.0..1.0);
        let perp = chord.cross(&mix);
        if perp.norm() < 1e-6 {
            Vector3::zeros()
        } else {
            perp.normalize() * rng.gen_range(0.0..0.05)
        }
    }
    let arc_a = sample_arc(&mut rng, &a, start_a, way_a);
    let arc_b = sample_arc(&mut rng, &b, start_b, way_b);

    let path_a = wrist_path(
        start_a,
        way_a,
        goal_a,
        arc_a,
        a.shoulder(side_right),
        a.upper_arm + a.forearm,
        pre_a,
        mid,
        arrive,
        total,
    );
    let path_b = wrist_path(
        start_b,
        way_b,
        goal_b,
        arc_b,
        b.shoulder(side_right),
        b.upper_arm + b.forearm,
        pre_b,
        mid,
        arrive,
        total,
    );

    // Truth bounds from the noiseless paths, default thresholds.
    let seg_cfg = SegmentationConfig::default();
    let t_start = first_motion(&[&path_a, &path_b], &seg_cfg)
        .expect("synthetic reach always moves");
    let t_grasp = first_sustained_contact(&path_a, &path_b, t_start, &seg_cfg)
        .expect("synthetic reach always meets");

    let truth = SynthTruth {
        frames: total,
        left_handed,
        t_start,
        t_grasp,
        final_wrist_a: goal_a.into(),
        final_wrist_b: goal_b.into(),
        bones_a: [a.upper_arm, a.forearm],
        bones_b: [b.upper_arm, b.forearm],
    };

    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("valid noise std");
    let mut body =
        |person: &Person, path: &[Vector3<f64>], id: u64, rng: &mut ChaCha8Rng| -> RawSkeletonSequence {
            let mut hint_r = person.bend_hint;
            let mut hint_l = person.bend_hint;
            let frames = (0..total)
                .map(|t| {
                    let (wr, wl) = if side_right {
                        (path[t], person.hang_wrist(false))
                    } else {
                        (person.hang_wrist(true), path[t])
                    };
                    let mut joints = person.raw_joints(wr, wl, &mut hint_r, &mut hint_l);
                    if noise_std > 0.0 {
                        for p in joints.iter_mut() {
                            *p += Vector3::new(
                                noise.sample(rng),
                                noise.sample(rng),
                                noise.sample(rng),
                            );
                        }
                    }
                    RawSkeletonFrame {
                        joints: joints
                            .iter()
                            .map(|p| RawJoint {
                                position: *p,
                                extra: [0.0; 8],
                                tracking: TrackingState::Tracked,
                            })
                            .collect(),
                        body_meta: format!("{id} 0 0 0 0 0 0 0 0 2"),
                        timestamp_index: t,
                    }
                })
                .collect();
            RawSkeletonSequence {
                body_id: id.to_string(),
                frames,
                frame_rate: NOMINAL_FRAME_RATE,
                source_label: String::new(),
            }
        };

    let id_base = 72_057_594_037_931_000 + (seed % 400_000) * 2;
    let seq_a = body(&a, &path_a, id_base, &mut rng);
    let seq_b = body(&b, &path_b, id_base + 1, &mut rng);
    (write_skeleton_file(&[seq_a, seq_b]), truth)
}

/// Writes `count` interactions (`interaction_XXX.skeleton` plus
/// `.truth.json`) into `out_dir`. The first `left_handed` of them shake with
/// the left hand. Deterministic for a given seed.
pub fn generate_synthetic_dataset(
    out_dir: &Path,
    cfg: &SynthConfig,
) -> Result<Vec<(PathBuf, SynthTruth)>, PipelineError> {
    if cfg.count == 0 {
        return Err(PipelineError::NoInput("zero interactions requested".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut out = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let seed = cfg.seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let (text, truth) = generate_interaction_text(seed, cfg.noise_std, i < cfg.left_handed);
        let path = out_dir.join(format!("interaction_{i:03}.skeleton"));
        fs::write(&path, text)?;
        fs::write(
            out_dir.join(format!("interaction_{i:03}.truth.json")),
            serde_json::to_string_pretty(&truth).expect("truth serializes"),
        )?;
        out.push((path, truth));
    }
    Ok(out)
}
