//! Reach-phase segmentation for a recorded two-person handshake.
//!
//! The reach phase runs from the first frame with right-hand movement to the
//! first sustained wrist-to-wrist contact. Everything before (idle standing)
//! and after (grasping, shaking) is cut away.

use super::{SegmentationConfig, SkeletonSequence, UpperBodyJoint};
use thiserror::Error;

/// Inclusive frame range `[start, end]` within the input sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReachSegment {
    pub start: usize,
    pub end: usize,
}

impl ReachSegment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Both persons' sequences cropped to the reach phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedPair {
    pub a: SkeletonSequence,
    pub b: SkeletonSequence,
    pub bounds: ReachSegment,
}

/// Why a recording was not usable as a reach-phase trajectory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegmentRejection {
    #[error("no movement")]
    NoMovement,
    #[error("no grasp")]
    NoGrasp,
    #[error("left-hand")]
    LeftHanded,
    #[error("too short: {len} < {min} frames")]
    TooShort { len: usize, min: usize },
    #[error("irregular contact before the grasp")]
    IrregularContact,
    #[error("mismatched pair: {0}")]
    MismatchedPair(String),
}

/// Frames of history used by the velocity estimate.
pub const VELOCITY_WINDOW: usize = 10;

/// Wrist speed at frame `t` as the least-squares slope of the position over
/// the last [`VELOCITY_WINDOW`] frames, m/s. Fitting a line instead of
/// differencing adjacent frames keeps per-frame tracking jitter from
/// registering as movement. `None` until enough history exists.
fn estimated_speed(path: &[nalgebra::Vector3<f64>], t: usize, rate: f64) -> Option<f64> {
    if t + 1 < VELOCITY_WINDOW {
        return None;
    }
    let lo = t + 1 - VELOCITY_WINDOW;
    let mean_x = (VELOCITY_WINDOW as f64 - 1.0) / 2.0;
    let mut sxx = 0.0;
    let mut sxy = nalgebra::Vector3::zeros();
    for (i, u) in (lo..=t).enumerate() {
        let dx = i as f64 - mean_x;
        sxx += dx * dx;
        sxy += path[u] * dx;
    }
    Some((sxy / sxx).norm() * rate)
}

fn wrist_path(seq: &SkeletonSequence, joint: UpperBodyJoint) -> Vec<nalgebra::Vector3<f64>> {
    seq.frames.iter().map(|f| f.joint(joint)).collect()
}

fn wrist_distance(a: &SkeletonSequence, b: &SkeletonSequence, joint: UpperBodyJoint, t: usize) -> f64 {
    (a.frames[t].joint(joint) - b.frames[t].joint(joint)).norm()
}

/// First frame at or after `from` where the wrist pair stays within the grasp
/// distance for `max_gap` consecutive frames (or to the end of the sequence).
/// Single-frame contact blips from tracking noise do not count.
fn first_sustained_contact(
    a: &SkeletonSequence,
    b: &SkeletonSequence,
    joint: UpperBodyJoint,
    from: usize,
    cfg: &SegmentationConfig,
) -> Option<usize> {
    let n = a.len();
    't: for t in from..n {
        let hold = (t + cfg.max_gap).min(n - 1);
        for u in t..=hold {
            if wrist_distance(a, b, joint, u) > cfg.grasp_distance_threshold {
                continue 't;
            }
        }
        return Some(t);
    }
    None
}

/// Cuts the reach phase `[t_start, t_grasp]` out of an aligned two-person
/// recording. `t_start` is the first frame where either person's right wrist
/// moves faster than the start threshold; `t_grasp` is the first sustained
/// right-wrist contact. Recordings where the left wrists meet first, or where
/// the segment is shorter than `min_length`, are rejected.
pub fn segment_reach_phase(
    a: &SkeletonSequence,
    b: &SkeletonSequence,
    cfg: &SegmentationConfig,
) -> Result<SegmentedPair, SegmentRejection> {
    if a.len() != b.len() {
        return Err(SegmentRejection::MismatchedPair(format!(
            "lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if (a.frame_rate - b.frame_rate).abs() > 1e-9 {
        return Err(SegmentRejection::MismatchedPair(format!(
            "frame rates {} vs {}",
            a.frame_rate, b.frame_rate
        )));
    }
    if a.len() < 2 {
        return Err(SegmentRejection::NoMovement);
    }

    let right = UpperBodyJoint::WristRight;
    let left = UpperBodyJoint::WristLeft;

    // Movement onset over both persons' wrists, either side, so that a
    // left-handed shake is still seen as movement and can then be rejected
    // by the contact classification below. Like the grasp test, onset must
    // persist for max_gap frames; single-frame speed spikes do not count.
    let paths = [
        wrist_path(a, right),
        wrist_path(b, right),
        wrist_path(a, left),
        wrist_path(b, left),
    ];
    let n = a.len();
    let moving = |t: usize| {
        paths.iter().any(|p| {
            estimated_speed(p, t, a.frame_rate).is_some_and(|v| v > cfg.start_velocity_threshold)
        })
    };
    let persist = cfg.max_gap.max(1);
    let t_start = (0..n).find(|&t| (t..(t + persist).min(n)).all(&moving));
    let t_start = match t_start {
        Some(t) => t,
        None => return Err(SegmentRejection::NoMovement),
    };

    let right_grasp = first_sustained_contact(a, b, right, t_start, cfg);
    let left_grasp = first_sustained_contact(a, b, left, t_start, cfg);
    let t_grasp = match (right_grasp, left_grasp) {
        (Some(r), Some(l)) if l < r => return Err(SegmentRejection::LeftHanded),
        (Some(r), _) => r,
        (None, Some(_)) => return Err(SegmentRejection::LeftHanded),
        (None, None) => return Err(SegmentRejection::NoGrasp),
    };

    let bounds = ReachSegment {
        start: t_start,
        end: t_grasp,
    };
    if bounds.len() < cfg.min_length {
        return Err(SegmentRejection::TooShort {
            len: bounds.len(),
            min: cfg.min_length,
        });
    }

    // Contact must appear only at the segment end: any earlier within-grasp
    // frame not within max_gap of the end marks an irregular recording.
    for t in t_start..t_grasp {
        if wrist_distance(a, b, right, t) <= cfg.grasp_distance_threshold
            && t + cfg.max_gap < t_grasp
        {
            return Err(SegmentRejection::IrregularContact);
        }
    }

    let crop = |seq: &SkeletonSequence| SkeletonSequence {
        frames: seq.frames[bounds.start..=bounds.end].to_vec(),
        frame_rate: seq.frame_rate,
        source_label: seq.source_label.clone(),
    };
    Ok(SegmentedPair {
        a: crop(a),
        b: crop(b),
        bounds,
    })
}
