//! The per-frame interaction loop: predict the partner's final hand, blend
//! it with the currently observed hand, condition the movement primitive on
//! the blended target and emit a joint command.
//!
//! The blend weight follows a sigmoid over the frame index: early in the
//! interaction the (already informative) prediction dominates, towards the
//! end the controller hands over to the tracked hand so the arms actually
//! meet. Conditioning always restarts from the stored prior; chaining
//! near-exact conditionings step after step would collapse the primitive's
//! covariance and freeze the motion.

use crate::kinematics::{forward_kinematics, ArmModel, JointAngles, TorsoFrame};
use crate::predictor::{PredictorSession, PredictorWeights};
use crate::promp::{Phase, ProMP, PrompError, TaskTarget};
use crate::skeleton::{UpperBodyFrame, UpperBodyJoint};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("interaction finished without a single step")]
    EmptyInteraction,
    #[error(transparent)]
    Promp(#[from] PrompError),
    #[error("malformed interaction log: {0}")]
    Format(String),
}

/// Parameters of the prediction/observation blend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendConfig {
    /// Nominal sigmoid offset the center fraction was derived from.
    pub alpha: f64,
    /// Expected reach duration in frames (median of the training segments).
    pub expected_length: usize,
    /// Sigmoid steepness per frame.
    pub sigmoid_slope: f64,
    /// The blend crosses 1/2 at `center_fraction * expected_length` frames.
    pub center_fraction: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            alpha: 0.67,
            expected_length: 32,
            sigmoid_slope: 0.3,
            center_fraction: 0.625,
        }
    }
}

impl BlendConfig {
    pub fn center_frame(&self) -> f64 {
        self.center_fraction * self.expected_length as f64
    }
}

/// Weight of the observed hand at frame `t`: σ(slope · (t − t_c)).
/// Strictly increasing in t and exactly 1/2 at the center frame.
pub fn blend_weight(t: f64, cfg: &BlendConfig) -> f64 {
    let x = cfg.sigmoid_slope * (t - cfg.center_frame());
    1.0 / (1.0 + (-x).exp())
}

/// Convex combination of prediction and observation,
/// h* = (1 − w)·ĥ + w·h.
pub fn blend_target(
    h_hat: Vector3<f64>,
    h_obs: Vector3<f64>,
    t: f64,
    cfg: &BlendConfig,
) -> Vector3<f64> {
    let w = blend_weight(t, cfg);
    h_hat * (1.0 - w) + h_obs * w
}

/// Controller parameters beyond the blend itself.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub blend: BlendConfig,
    /// Task-space accuracy Σ_x used for conditioning, camera-frame meters².
    pub task_accuracy: Matrix3<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            blend: BlendConfig::default(),
            task_accuracy: Matrix3::identity() * 1e-4, // (1 cm)²
        }
    }
}

/// Everything logged for one controller step. Positions are camera-frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub h_obs: [f64; 3],
    pub h_hat: [f64; 3],
    pub h_star: [f64; 3],
    pub z: f64,
    pub command_q: [f64; 4],
    pub fk_position: [f64; 3],
    /// Prediction was non-finite; the observed hand stood in for it.
    #[serde(default)]
    pub prediction_fallback: bool,
    /// Task-space conditioning hit its iteration budget.
    #[serde(default)]
    pub non_converged: bool,
}

/// Closing summary of one interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSummary {
    pub steps: usize,
    /// ‖FK(last command) − last observed hand‖, meters.
    pub final_error: f64,
    pub non_convergence_steps: usize,
    pub prediction_fallback_steps: usize,
}

/// Immutable record of one simulated interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLog {
    pub steps: Vec<StepRecord>,
    pub summary: InteractionSummary,
}

/// Per-interaction controller state. One instance per interaction, stepped
/// strictly frame by frame.
pub struct Controller<'a> {
    prior: ProMP,
    arm: ArmModel,
    /// Pose of the controlled arm's torso frame in camera coordinates.
    mount: TorsoFrame,
    session: PredictorSession<'a>,
    cfg: ControllerConfig,
    step_count: usize,
    records: Vec<StepRecord>,
}

impl<'a> Controller<'a> {
    pub fn new(
        prior: ProMP,
        arm: ArmModel,
        mount: TorsoFrame,
        predictor: &'a PredictorWeights,
        cfg: ControllerConfig,
    ) -> Self {
        Self {
            prior,
            arm,
            mount,
            session: PredictorSession::new(predictor),
            cfg,
            step_count: 0,
            records: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step_count
    }

    /// Advances the loop by one observed partner frame and returns the joint
    /// command: predict, blend, condition the prior on the blended target at
    /// the current phase, then take the conditioned marginal mean.
    pub fn step(&mut self, frame: &UpperBodyFrame) -> Result<JointAngles, ControlError> {
        let t = self.step_count;
        let h_obs = frame.joint(UpperBodyJoint::WristRight);

        let raw_prediction = self.session.step(frame);
        let prediction_fallback = !raw_prediction.iter().all(|v| v.is_finite());
        let h_hat = if prediction_fallback { h_obs } else { raw_prediction };

        let h_star = blend_target(h_hat, h_obs, t as f64, &self.cfg.blend);
        let z = Phase::from_frame(t, 0, self.cfg.blend.expected_length);

        let target = TaskTarget {
            position: self.mount.to_local(h_star),
            accuracy: self.cfg.task_accuracy,
        };
        let conditioned = self.prior.condition_task_space(z, &target, &self.arm)?;
        let mean = conditioned.promp.marginal(z).mean;
        let command = JointAngles::from_array([mean[0], mean[1], mean[2], mean[3]]);
        let fk_cam = self
            .mount
            .to_camera(forward_kinematics(&self.arm, &command));

        self.records.push(StepRecord {
            t,
            h_obs: h_obs.into(),
            h_hat: h_hat.into(),
            h_star: h_star.into(),
            z: z.value(),
            command_q: command.to_array(),
            fk_position: fk_cam.into(),
            prediction_fallback,
            non_converged: !conditioned.converged,
        });
        self.step_count += 1;
        Ok(command)
    }

    /// Seals the interaction into an immutable log.
    pub fn finish(self) -> Result<InteractionLog, ControlError> {
        let last = self.records.last().ok_or(ControlError::EmptyInteraction)?;
        let fk = Vector3::from(last.fk_position);
        let obs = Vector3::from(last.h_obs);
        let summary = InteractionSummary {
            steps: self.records.len(),
            final_error: (fk - obs).norm(),
            non_convergence_steps: self.records.iter().filter(|r| r.non_converged).count(),
            prediction_fallback_steps: self
                .records
                .iter()
                .filter(|r| r.prediction_fallback)
                .count(),
        };
        Ok(InteractionLog {
            steps: self.records,
            summary,
        })
    }
}

// ── Log file: one JSON record per step, then a trailing summary record ───

#[derive(Serialize, Deserialize)]
struct SummaryRecord {
    summary: InteractionSummary,
}

impl InteractionLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("step record serializes"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::to_string(&SummaryRecord {
                summary: self.summary.clone(),
            })
            .expect("summary record serializes"),
        );
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ControlError> {
        let mut steps = Vec::new();
        let mut summary = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Ok(s) = serde_json::from_str::<SummaryRecord>(line) {
                if summary.replace(s.summary).is_some() {
                    return Err(ControlError::Format("duplicate summary record".into()));
                }
                continue;
            }
            let step: StepRecord = serde_json::from_str(line)
                .map_err(|e| ControlError::Format(format!("line {}: {e}", i + 1)))?;
            steps.push(step);
        }
        let summary = summary.ok_or_else(|| ControlError::Format("missing summary".into()))?;
        if summary.steps != steps.len() {
            return Err(ControlError::Format(format!(
                "summary says {} steps, found {}",
                summary.steps,
                steps.len()
            )));
        }
        Ok(InteractionLog { steps, summary })
    }
}
