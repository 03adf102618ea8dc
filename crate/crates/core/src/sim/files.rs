//! On-disk formats for prepared data: cleaned trajectories (JSON lines plus
//! a sidecar metadata file), joint-angle trajectories and the arm model.

use super::PipelineError;
use crate::kinematics::{ArmModel, JointAngleTrajectory, JointAngles};
use crate::skeleton::{
    ReachSegment, SkeletonSequence, UpperBodyFrame, UPPER_BODY_JOINT_COUNT,
};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CleanedFrameRecord {
    t: usize,
    joints: Vec<[f64; 3]>,
}

/// Sidecar metadata next to each cleaned trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanedMeta {
    pub frame_rate: f64,
    pub source_label: String,
    /// [start, end] frame ordinals of the reach segment in the recording.
    pub segment_bounds: [usize; 2],
}

/// Path of the sidecar for a cleaned trajectory file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn write_cleaned_trajectory(
    path: &Path,
    seq: &SkeletonSequence,
    bounds: ReachSegment,
) -> Result<(), PipelineError> {
    let mut out = String::new();
    for (t, frame) in seq.frames.iter().enumerate() {
        let record = CleanedFrameRecord {
            t,
            joints: frame.joints.iter().map(|p| [p.x, p.y, p.z]).collect(),
        };
        out.push_str(&serde_json::to_string(&record).expect("frame record serializes"));
        out.push('\n');
    }
    fs::write(path, out)?;
    let meta = CleanedMeta {
        frame_rate: seq.frame_rate,
        source_label: seq.source_label.clone(),
        segment_bounds: [bounds.start, bounds.end],
    };
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;
    Ok(())
}

pub fn read_cleaned_trajectory(
    path: &Path,
) -> Result<(SkeletonSequence, CleanedMeta), PipelineError> {
    let meta: CleanedMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)
        .map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))?;
    let text = fs::read_to_string(path)?;
    let mut frames = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CleanedFrameRecord = serde_json::from_str(line)
            .map_err(|e| PipelineError::Format(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if record.joints.len() != UPPER_BODY_JOINT_COUNT {
            return Err(PipelineError::Format(format!(
                "{} line {}: {} joints",
                path.display(),
                i + 1,
                record.joints.len()
            )));
        }
        if record.t != frames.len() {
            return Err(PipelineError::Format(format!(
                "{} line {}: frame index {} out of order",
                path.display(),
                i + 1,
                record.t
            )));
        }
        let mut joints = [Vector3::zeros(); UPPER_BODY_JOINT_COUNT];
        for (j, p) in record.joints.iter().enumerate() {
            joints[j] = Vector3::new(p[0], p[1], p[2]);
        }
        frames.push(UpperBodyFrame { joints });
    }
    if frames.is_empty() {
        return Err(PipelineError::Format(format!(
            "{}: empty trajectory",
            path.display()
        )));
    }
    Ok((
        SkeletonSequence {
            frames,
            frame_rate: meta.frame_rate,
            source_label: meta.source_label.clone(),
        },
        meta,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AngleRecord {
    t: usize,
    /// yaw, pitch, roll, elbow — radians.
    q: [f64; 4],
}

pub fn write_angle_trajectory(path: &Path, traj: &JointAngleTrajectory) -> Result<(), PipelineError> {
    let mut out = String::new();
    for (t, q) in traj.samples.iter().enumerate() {
        let record = AngleRecord { t, q: q.to_array() };
        out.push_str(&serde_json::to_string(&record).expect("angle record serializes"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_angle_trajectory(
    path: &Path,
    frame_rate: f64,
) -> Result<JointAngleTrajectory, PipelineError> {
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AngleRecord = serde_json::from_str(line)
            .map_err(|e| PipelineError::Format(format!("{} line {}: {e}", path.display(), i + 1)))?;
        samples.push(JointAngles::from_array(record.q));
    }
    if samples.is_empty() {
        return Err(PipelineError::Format(format!(
            "{}: empty angle trajectory",
            path.display()
        )));
    }
    Ok(JointAngleTrajectory {
        samples,
        frame_rate,
        flagged: Vec::new(),
    })
}

pub fn write_arm_model(path: &Path, model: &ArmModel) -> Result<(), PipelineError> {
    fs::write(
        path,
        serde_json::to_string_pretty(model).expect("arm model serializes"),
    )?;
    Ok(())
}

pub fn read_arm_model(path: &Path) -> Result<ArmModel, PipelineError> {
    let model: ArmModel = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))?;
    if !(model.upper_arm_length > 0.0 && model.forearm_length > 0.0) {
        return Err(PipelineError::Format(format!(
            "{}: non-positive bone length",
            path.display()
        )));
    }
    Ok(model)
}
