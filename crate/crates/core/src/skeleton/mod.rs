//! Skeleton recording ingestion: parsing, upper-body reduction, tracking
//! validation and reach-phase segmentation.

mod ntu;
mod segment;

pub use ntu::{parse_skeleton_file, write_skeleton_file, ParseError};
pub use segment::{
    segment_reach_phase, ReachSegment, SegmentRejection, SegmentedPair, VELOCITY_WINDOW,
};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Nominal capture rate of the recordings, Hz.
pub const NOMINAL_FRAME_RATE: f64 = 30.0;

/// Number of joints in a raw capture frame.
pub const RAW_JOINT_COUNT: usize = 25;

/// Number of joints kept after upper-body reduction.
pub const UPPER_BODY_JOINT_COUNT: usize = 15;

/// Per-joint confidence reported by the capture device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackingState {
    NotTracked,
    Inferred,
    Tracked,
}

impl TrackingState {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(Self::NotTracked),
            1 => Some(Self::Inferred),
            2 => Some(Self::Tracked),
            _ => None,
        }
    }

    pub fn code(self) -> i64 {
        match self {
            Self::NotTracked => 0,
            Self::Inferred => 1,
            Self::Tracked => 2,
        }
    }
}

/// One joint of a raw frame. Position is in meters, camera frame. The eight
/// non-positional numeric fields of the file format are carried along
/// untouched so a parsed recording can be written back without loss.
#[derive(Debug, Clone, PartialEq)]
pub struct RawJoint {
    pub position: Vector3<f64>,
    pub extra: [f64; 8],
    pub tracking: TrackingState,
}

/// One 25-joint frame of a single tracked body.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSkeletonFrame {
    pub joints: Vec<RawJoint>,
    /// Body metadata line from the source file, kept verbatim (id + 9 flags).
    pub body_meta: String,
    /// Ordinal of the frame within the recording; strictly increasing.
    pub timestamp_index: usize,
}

/// All frames of one tracked body, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSkeletonSequence {
    pub body_id: String,
    pub frames: Vec<RawSkeletonFrame>,
    pub frame_rate: f64,
    pub source_label: String,
}

/// The 15 upper-body joints, in the order used throughout this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum UpperBodyJoint {
    SpineBase = 0,
    SpineMid = 1,
    SpineShoulder = 2,
    Neck = 3,
    Head = 4,
    ShoulderLeft = 5,
    ElbowLeft = 6,
    WristLeft = 7,
    HandLeft = 8,
    ShoulderRight = 9,
    ElbowRight = 10,
    WristRight = 11,
    HandRight = 12,
    HandTipLeft = 13,
    HandTipRight = 14,
}

/// Source indices of the upper-body joints within a 25-joint raw frame.
/// This is the single authoritative map; entry `i` is the raw index of
/// `UpperBodyJoint` with discriminant `i`.
pub const UPPER_BODY_FROM_RAW: [usize; UPPER_BODY_JOINT_COUNT] =
    [0, 1, 20, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 21, 23];

/// One reduced frame: the 15 upper-body joint positions, meters, camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperBodyFrame {
    pub joints: [Vector3<f64>; UPPER_BODY_JOINT_COUNT],
}

impl UpperBodyFrame {
    pub fn joint(&self, j: UpperBodyJoint) -> Vector3<f64> {
        self.joints[j as usize]
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// A time-indexed upper-body recording of one person.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub frames: Vec<UpperBodyFrame>,
    pub frame_rate: f64,
    /// Where the sequence came from (file stem + body id).
    pub source_label: String,
}

impl SkeletonSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Thresholds controlling reach-phase segmentation. All values positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Right-hand speed that marks movement onset, m/s.
    pub start_velocity_threshold: f64,
    /// Wrist-to-wrist distance that counts as a grasp, m.
    pub grasp_distance_threshold: f64,
    /// Minimum accepted segment length, frames.
    pub min_length: usize,
    /// Contact must persist this many frames before it counts as the grasp;
    /// also the allowance for spurious contact blips near the segment end.
    pub max_gap: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            start_velocity_threshold: 0.05,
            grasp_distance_threshold: 0.12,
            min_length: 15,
            max_gap: 3,
        }
    }
}

/// Default inter-frame joint jump that counts as a tracking glitch, m/frame.
/// At 30 Hz this is ~9 m/s, above any human hand speed.
pub const DEFAULT_DISCONTINUITY_THRESHOLD: f64 = 0.3;

/// A problem found in a sequence by [`validate_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct Defect {
    pub frame: usize,
    pub joint: usize,
    pub kind: DefectKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DefectKind {
    /// Joint moved more than the threshold between consecutive frames.
    Discontinuity { jump_m: f64 },
    /// Coordinate is NaN or infinite.
    NonFinite,
}

/// Reduces a 25-joint body sequence to the 15 upper-body joints.
///
/// The joint order of the output is [`UpperBodyJoint`]; ordering is identical
/// across frames.
pub fn select_upper_body(seq: &RawSkeletonSequence) -> SkeletonSequence {
    let frames = seq
        .frames
        .iter()
        .map(|f| {
            let mut joints = [Vector3::zeros(); UPPER_BODY_JOINT_COUNT];
            for (dst, &src) in UPPER_BODY_FROM_RAW.iter().enumerate() {
                joints[dst] = f.joints[src].position;
            }
            UpperBodyFrame { joints }
        })
        .collect();
    SkeletonSequence {
        frames,
        frame_rate: seq.frame_rate,
        source_label: format!("{}#{}", seq.source_label, seq.body_id),
    }
}

/// Scans a sequence for tracking glitches: inter-frame joint jumps above
/// `discontinuity_threshold` (m/frame) and non-finite coordinates. An empty
/// result means the sequence is clean.
pub fn validate_sequence(seq: &SkeletonSequence, discontinuity_threshold: f64) -> Vec<Defect> {
    let mut defects = Vec::new();
    for (t, frame) in seq.frames.iter().enumerate() {
        for (j, p) in frame.joints.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                defects.push(Defect {
                    frame: t,
                    joint: j,
                    kind: DefectKind::NonFinite,
                });
                continue;
            }
            if t > 0 {
                let prev = seq.frames[t - 1].joints[j];
                if prev.iter().all(|v| v.is_finite()) {
                    let jump = (p - prev).norm();
                    if jump > discontinuity_threshold {
                        defects.push(Defect {
                            frame: t,
                            joint: j,
                            kind: DefectKind::Discontinuity { jump_m: jump },
                        });
                    }
                }
            }
        }
    }
    defects
}
