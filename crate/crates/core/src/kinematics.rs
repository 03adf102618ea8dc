//! Right-arm retargeting: torso-relative joint-angle extraction from
//! skeleton frames, and the matching two-link forward kinematics with its
//! analytic Jacobian.
//!
//! Conventions, chosen once and used by both directions so that
//! extract → forward-kinematics reproduces the wrist exactly:
//!
//! * Torso frame: x along left→right shoulder, z along spine-base→
//!   spine-shoulder orthogonalized against x, y = z × x, origin at the right
//!   shoulder.
//! * The shoulder rotation is `MOUNT · Rz(yaw) · Ry(pitch) · Rx(roll)` with
//!   `MOUNT = Ry(π/2)`. The upper arm points along the rotated local x axis,
//!   so roll spins about the upper-arm axis and the zero pose hangs straight
//!   down (−z in the torso frame). Gimbal lock sits at pitch = ±π/2, i.e.
//!   the arm pointing along the shoulder line, which reaching rarely visits.
//! * Elbow flexion is a rotation about the rotated local z axis, 0 = fully
//!   extended, range [0, π]. At extraction time the flexion axis is the
//!   normal of the (upper arm, forearm) plane.

use crate::skeleton::{SkeletonSequence, UpperBodyFrame, UpperBodyJoint};
use nalgebra::{Matrix3, Matrix3x4, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum joint separation for geometry to count as non-degenerate, meters.
const DEGENERACY_EPS: f64 = 0.01;

/// |cos(pitch)| below which yaw and roll are no longer separable.
const GIMBAL_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("too few frames for estimation: got {got}, need {need}")]
    TooFewFrames { got: usize, need: usize },
}

/// Four right-arm angles, radians. Shoulder angles lie in (−π, π], the elbow
/// in [0, π] with 0 meaning fully extended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub shoulder_yaw: f64,
    pub shoulder_pitch: f64,
    pub shoulder_roll: f64,
    pub elbow: f64,
}

impl JointAngles {
    pub const ZERO: JointAngles = JointAngles {
        shoulder_yaw: 0.0,
        shoulder_pitch: 0.0,
        shoulder_roll: 0.0,
        elbow: 0.0,
    };

    pub fn to_array(self) -> [f64; 4] {
        [self.shoulder_yaw, self.shoulder_pitch, self.shoulder_roll, self.elbow]
    }

    pub fn from_array(q: [f64; 4]) -> Self {
        Self {
            shoulder_yaw: q[0],
            shoulder_pitch: q[1],
            shoulder_roll: q[2],
            elbow: q[3],
        }
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Rigid two-link arm. Positions are expressed in the torso frame, where the
/// right shoulder is the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub shoulder_origin: [f64; 3],
    pub upper_arm_length: f64,
    pub forearm_length: f64,
}

impl ArmModel {
    pub fn new(upper_arm_length: f64, forearm_length: f64) -> Self {
        Self {
            shoulder_origin: [0.0; 3],
            upper_arm_length,
            forearm_length,
        }
    }

    pub fn origin(&self) -> Vector3<f64> {
        Vector3::from(self.shoulder_origin)
    }

    pub fn reach(&self) -> f64 {
        self.upper_arm_length + self.forearm_length
    }
}

/// Right-handed orthonormal torso basis anchored at the right shoulder.
#[derive(Debug, Clone)]
pub struct TorsoFrame {
    pub origin: Vector3<f64>,
    pub axes: Rotation3<f64>,
}

impl TorsoFrame {
    /// Camera-frame point expressed in torso coordinates.
    pub fn to_local(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.axes.inverse() * (p - self.origin)
    }

    /// Torso-frame point expressed in camera coordinates.
    pub fn to_camera(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.axes * p + self.origin
    }
}

/// Result of angle extraction for one frame. Frames near gimbal lock carry a
/// flag; trajectories containing flagged frames are excluded from primitive
/// fitting because the yaw/roll split is unreliable there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractedAngles {
    pub angles: JointAngles,
    pub gimbal_flag: bool,
}

/// A 4-DoF right-arm angle recording, the training signal for the movement
/// primitive. Phases annotate each sample with its normalized time in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct JointAngleTrajectory {
    pub samples: Vec<JointAngles>,
    pub frame_rate: f64,
    /// Indices of gimbal-flagged frames.
    pub flagged: Vec<usize>,
}

impl JointAngleTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Normalized time of each sample: i / (len − 1).
    pub fn phases(&self) -> Vec<f64> {
        let n = self.samples.len();
        if n <= 1 {
            return vec![0.0; n];
        }
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }
}

fn mount() -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2)
}

fn shoulder_rotation(q: &JointAngles) -> Rotation3<f64> {
    mount()
        * Rotation3::from_axis_angle(&Vector3::z_axis(), q.shoulder_yaw)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), q.shoulder_pitch)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), q.shoulder_roll)
}

/// Builds the torso frame from one upper-body frame.
pub fn torso_frame(frame: &UpperBodyFrame) -> Result<TorsoFrame, KinematicsError> {
    let sl = frame.joint(UpperBodyJoint::ShoulderLeft);
    let sr = frame.joint(UpperBodyJoint::ShoulderRight);
    let sb = frame.joint(UpperBodyJoint::SpineBase);
    let ss = frame.joint(UpperBodyJoint::SpineShoulder);

    let x_raw = sr - sl;
    if x_raw.norm() < DEGENERACY_EPS {
        return Err(KinematicsError::Degenerate("coincident shoulders".into()));
    }
    let z_raw = ss - sb;
    if z_raw.norm() < DEGENERACY_EPS {
        return Err(KinematicsError::Degenerate("degenerate spine".into()));
    }
    let x = x_raw.normalize();
    let z_ortho = z_raw - x * z_raw.dot(&x);
    if z_ortho.norm() < DEGENERACY_EPS {
        return Err(KinematicsError::Degenerate(
            "spine parallel to shoulder line".into(),
        ));
    }
    let z = z_ortho.normalize();
    let y = z.cross(&x);
    let axes = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    Ok(TorsoFrame { origin: sr, axes })
}

fn wrap_angle(a: f64) -> f64 {
    // (−π, π]
    if a <= -std::f64::consts::PI {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

/// Decomposes `g = Rz(yaw) · Ry(pitch) · Rx(roll)`. Near pitch = ±π/2 the
/// yaw/roll split degenerates; roll is then fixed to 0, yaw absorbs the
/// remaining rotation and the gimbal flag is raised.
fn euler_zyx(g: &Matrix3<f64>) -> (f64, f64, f64, bool) {
    let cy = g[(0, 0)].hypot(g[(1, 0)]);
    let pitch = (-g[(2, 0)]).atan2(cy);
    if cy < GIMBAL_EPS {
        let yaw = (-g[(0, 1)]).atan2(g[(1, 1)]);
        (wrap_angle(yaw), pitch, 0.0, true)
    } else {
        let yaw = g[(1, 0)].atan2(g[(0, 0)]);
        let roll = g[(2, 1)].atan2(g[(2, 2)]);
        (wrap_angle(yaw), pitch, wrap_angle(roll), false)
    }
}

/// Extracts the four right-arm angles from one frame.
///
/// The upper-arm direction, expressed in the torso frame, fixes yaw and
/// pitch; the normal of the (upper arm, forearm) plane fixes roll; the angle
/// between the two segments is the elbow value. For a straight arm the plane
/// is undefined and roll is reported as 0.
pub fn extract_joint_angles(frame: &UpperBodyFrame) -> Result<ExtractedAngles, KinematicsError> {
    let tf = torso_frame(frame)?;
    let s = frame.joint(UpperBodyJoint::ShoulderRight);
    let e = frame.joint(UpperBodyJoint::ElbowRight);
    let w = frame.joint(UpperBodyJoint::WristRight);

    let u_cam = e - s;
    let f_cam = w - e;
    if u_cam.norm() < DEGENERACY_EPS {
        return Err(KinematicsError::Degenerate("elbow coincident with shoulder".into()));
    }
    if f_cam.norm() < DEGENERACY_EPS {
        return Err(KinematicsError::Degenerate("wrist coincident with elbow".into()));
    }
    let inv = tf.axes.inverse();
    let u = (inv * u_cam).normalize();
    let f = (inv * f_cam).normalize();

    let cross = u.cross(&f);
    let elbow = cross.norm().atan2(u.dot(&f));

    let m_t = mount().inverse();
    let (yaw, pitch, roll, gimbal) = if cross.norm() > 1e-8 {
        // Full pose: the shoulder rotation maps local x to the upper arm and
        // local z to the flexion-plane normal.
        let n = cross.normalize();
        let r_sh = Matrix3::from_columns(&[u, n.cross(&u), n]);
        let g = m_t.matrix() * r_sh;
        euler_zyx(&g)
    } else {
        // Straight arm: roll is unobservable; recover yaw/pitch from the
        // upper-arm direction alone.
        let v = m_t * u;
        let cy = v.x.hypot(v.y);
        if cy < GIMBAL_EPS {
            (0.0, (-v.z).atan2(cy), 0.0, true)
        } else {
            (wrap_angle(v.y.atan2(v.x)), (-v.z).atan2(cy), 0.0, false)
        }
    };

    Ok(ExtractedAngles {
        angles: JointAngles {
            shoulder_yaw: yaw,
            shoulder_pitch: pitch,
            shoulder_roll: roll,
            elbow,
        },
        gimbal_flag: gimbal,
    })
}

/// Extracts the right-arm angle trajectory of a whole sequence.
pub fn extract_joint_trajectory(
    seq: &SkeletonSequence,
) -> Result<JointAngleTrajectory, KinematicsError> {
    let mut samples = Vec::with_capacity(seq.len());
    let mut flagged = Vec::new();
    for (t, frame) in seq.frames.iter().enumerate() {
        let ex = extract_joint_angles(frame)?;
        if ex.gimbal_flag {
            flagged.push(t);
        }
        samples.push(ex.angles);
    }
    Ok(JointAngleTrajectory {
        samples,
        frame_rate: seq.frame_rate,
        flagged,
    })
}

/// Wrist position of the two-link arm, torso frame.
pub fn forward_kinematics(model: &ArmModel, q: &JointAngles) -> Vector3<f64> {
    let r_sh = shoulder_rotation(q);
    let u = r_sh * Vector3::x();
    let f = r_sh * (Rotation3::from_axis_angle(&Vector3::z_axis(), q.elbow) * Vector3::x());
    model.origin() + u * model.upper_arm_length + f * model.forearm_length
}

/// Analytic 3×4 Jacobian of the wrist position w.r.t. (yaw, pitch, roll,
/// elbow). Every column is an axis × lever-arm cross product.
pub fn jacobian(model: &ArmModel, q: &JointAngles) -> Matrix3x4<f64> {
    let m = mount();
    let r_sh = shoulder_rotation(q);
    let u = r_sh * Vector3::x();
    let n = r_sh * Vector3::z();
    let elbow_pos = model.origin() + u * model.upper_arm_length;
    let wrist = forward_kinematics(model, q);

    let rel_shoulder = wrist - model.origin();
    let rel_elbow = wrist - elbow_pos;

    let axis_yaw = m * Vector3::z();
    let axis_pitch = m * (Rotation3::from_axis_angle(&Vector3::z_axis(), q.shoulder_yaw)
        * Vector3::y());
    let axis_roll = u;

    Matrix3x4::from_columns(&[
        axis_yaw.cross(&rel_shoulder),
        axis_pitch.cross(&rel_shoulder),
        axis_roll.cross(&rel_shoulder),
        n.cross(&rel_elbow),
    ])
}

/// Straight-arm pose pointing the arm axis along `direction` in the torso
/// frame, with a small elbow bend to stay off the joint limit. Useful as a
/// second starting point for target-reaching optimizations.
pub fn aim_pose(direction: &Vector3<f64>) -> JointAngles {
    let v = mount().inverse() * direction.normalize();
    let cy = v.x.hypot(v.y);
    let yaw = if cy < GIMBAL_EPS { 0.0 } else { v.y.atan2(v.x) };
    JointAngles {
        shoulder_yaw: yaw,
        shoulder_pitch: (-v.z).atan2(cy),
        shoulder_roll: 0.0,
        elbow: 0.1,
    }
}

/// Estimates bone lengths as medians of per-frame segment lengths.
pub fn estimate_arm_model(seq: &SkeletonSequence) -> Result<ArmModel, KinematicsError> {
    const MIN_FRAMES: usize = 5;
    if seq.len() < MIN_FRAMES {
        return Err(KinematicsError::TooFewFrames {
            got: seq.len(),
            need: MIN_FRAMES,
        });
    }
    let mut upper: Vec<f64> = Vec::with_capacity(seq.len());
    let mut fore: Vec<f64> = Vec::with_capacity(seq.len());
    for frame in &seq.frames {
        let s = frame.joint(UpperBodyJoint::ShoulderRight);
        let e = frame.joint(UpperBodyJoint::ElbowRight);
        let w = frame.joint(UpperBodyJoint::WristRight);
        upper.push((e - s).norm());
        fore.push((w - e).norm());
    }
    Ok(ArmModel::new(median(&mut upper), median(&mut fore)))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
