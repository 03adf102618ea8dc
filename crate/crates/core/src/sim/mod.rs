//! End-to-end pipeline orchestration: dataset preparation, model fitting,
//! replayed interactions, evaluation and plot-ready reports.

pub mod files;
pub mod reports;
mod synth;

pub use synth::{generate_interaction_text, generate_synthetic_dataset, SynthConfig, SynthTruth};

use crate::control::{
    BlendConfig, ControlError, Controller, ControllerConfig, InteractionLog,
};
use crate::kinematics::{
    estimate_arm_model, extract_joint_trajectory, torso_frame, ArmModel, KinematicsError,
};
use crate::predictor::{PredictorConfig, PredictorError, PredictorWeights};
use crate::promp::{
    fit_promp, fit_weights, BasisConfig, ProMP, PrompError, Regularizer, WeightSample,
};
use crate::skeleton::{
    parse_skeleton_file, segment_reach_phase, select_upper_body, validate_sequence, ParseError,
    RawSkeletonSequence, ReachSegment, SegmentationConfig, SkeletonSequence,
    DEFAULT_DISCONTINUITY_THRESHOLD,
};
use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no usable input: {0}")]
    NoInput(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Promp(#[from] PrompError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad or missing input data, malformed files, contract violations.
    Validation,
    /// The numbers went wrong: singular systems, non-finite losses.
    Numerical,
}

impl PipelineError {
    pub fn kind(&self) -> FailureKind {
        match self {
            PipelineError::Promp(PrompError::Numerical(_)) => FailureKind::Numerical,
            PipelineError::Predictor(PredictorError::NonFiniteLoss { .. }) => {
                FailureKind::Numerical
            }
            PipelineError::Control(ControlError::Promp(PrompError::Numerical(_))) => {
                FailureKind::Numerical
            }
            _ => FailureKind::Validation,
        }
    }
}

// ── Pipeline configuration ───────────────────────────────────────────────

const CONFIG_VERSION: u32 = 1;

fn default_config_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisSettings {
    pub n_basis: usize,
    pub width: f64,
    pub normalize: bool,
}

impl Default for BasisSettings {
    fn default() -> Self {
        Self {
            n_basis: 3,
            width: 0.01,
            normalize: true,
        }
    }
}

impl BasisSettings {
    pub fn to_basis(&self) -> Result<BasisConfig, PrompError> {
        BasisConfig::equally_spaced(self.n_basis, self.width, self.normalize)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrompSettings {
    pub lambda: f64,
    /// "ridge" or "jerk".
    pub regularizer: String,
    pub obs_noise_std: f64,
}

impl Default for PrompSettings {
    fn default() -> Self {
        Self {
            lambda: 1e-10,
            regularizer: "ridge".into(),
            obs_noise_std: 0.01,
        }
    }
}

impl PrompSettings {
    pub fn to_regularizer(&self) -> Result<Regularizer, PipelineError> {
        match self.regularizer.as_str() {
            "ridge" => Ok(Regularizer::Ridge(self.lambda)),
            "jerk" => Ok(Regularizer::Jerk(self.lambda)),
            other => Err(PipelineError::Format(format!(
                "unknown regularizer {other:?} (expected \"ridge\" or \"jerk\")"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSettings {
    pub train_fraction: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
        }
    }
}

/// Everything the command-line pipeline needs, loadable from one versioned
/// JSON file; every field has a default.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(rename = "version", default = "default_config_version")]
    pub version: u32,
    pub segmentation: SegmentationConfig,
    pub discontinuity_threshold: Option<f64>,
    pub basis: BasisSettings,
    pub promp: PrompSettings,
    pub predictor: PredictorConfig,
    pub blend: BlendConfig,
    pub task_accuracy_std: Option<f64>,
    pub split: SplitSettings,
}

impl PipelineConfig {
    pub fn discontinuity_threshold(&self) -> f64 {
        self.discontinuity_threshold
            .unwrap_or(DEFAULT_DISCONTINUITY_THRESHOLD)
    }

    pub fn controller_config(&self) -> ControllerConfig {
        let std = self.task_accuracy_std.unwrap_or(0.01);
        ControllerConfig {
            blend: self.blend.clone(),
            task_accuracy: Matrix3::identity() * std * std,
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(PipelineError::Format(format!(
                "unsupported config version {}",
                cfg.version
            )));
        }
        Ok(cfg)
    }
}

// ── Dataset manifest ─────────────────────────────────────────────────────

const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// The person whose arm the controller reproduces.
    Subject,
    /// The tracked human the controller reacts to.
    Partner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonArtifacts {
    pub body_id: String,
    pub role: Role,
    /// Cleaned trajectory path, relative to the output directory.
    pub cleaned: String,
    /// Joint-angle trajectory path, relative to the output directory.
    pub angles: String,
    /// False when angle extraction flagged gimbal-locked frames; such
    /// trajectories are excluded from primitive fitting.
    pub angles_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionStatus {
    Accepted {
        split: Split,
        segment: [usize; 2],
        persons: Vec<PersonArtifacts>,
    },
    Rejected {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source: String,
    pub status: InteractionStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub accepted: usize,
    pub rejected: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub entries: Vec<ManifestEntry>,
    pub counts: ManifestCounts,
}

impl DatasetManifest {
    pub fn accepted(&self, split: Option<Split>) -> impl Iterator<Item = (&ManifestEntry, &[PersonArtifacts], [usize; 2])> {
        self.entries.iter().filter_map(move |e| match &e.status {
            InteractionStatus::Accepted {
                split: s,
                persons,
                segment,
            } if split.is_none() || split == Some(*s) => Some((e, persons.as_slice(), *segment)),
            _ => None,
        })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut counts = ManifestCounts::default();
        for e in &self.entries {
            match &e.status {
                InteractionStatus::Accepted { split, .. } => {
                    counts.accepted += 1;
                    match split {
                        Split::Train => counts.train += 1,
                        Split::Test => counts.test += 1,
                    }
                }
                InteractionStatus::Rejected { .. } => counts.rejected += 1,
            }
        }
        if counts != self.counts {
            return Err(PipelineError::Format(format!(
                "manifest counts {:?} disagree with entries {:?}",
                self.counts, counts
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        fs::write(
            path,
            serde_json::to_string_pretty(self).expect("manifest serializes"),
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(PipelineError::Format(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        manifest.validate()?;
        Ok(manifest)
    }
}

// ── Dataset preparation ──────────────────────────────────────────────────

struct AcceptedPair {
    source: String,
    segment: [usize; 2],
    persons: Vec<(String, Role, SkeletonSequence, crate::kinematics::JointAngleTrajectory)>,
}

/// Restricts both body sequences to the frame ordinals where both are
/// tracked, preserving order.
fn align_pair(
    a: &RawSkeletonSequence,
    b: &RawSkeletonSequence,
) -> (RawSkeletonSequence, RawSkeletonSequence) {
    let ords_b: std::collections::BTreeSet<usize> =
        b.frames.iter().map(|f| f.timestamp_index).collect();
    let common: Vec<usize> = a
        .frames
        .iter()
        .map(|f| f.timestamp_index)
        .filter(|t| ords_b.contains(t))
        .collect();
    let keep = |seq: &RawSkeletonSequence| RawSkeletonSequence {
        body_id: seq.body_id.clone(),
        frames: seq
            .frames
            .iter()
            .filter(|f| common.binary_search(&f.timestamp_index).is_ok())
            .cloned()
            .collect(),
        frame_rate: seq.frame_rate,
        source_label: seq.source_label.clone(),
    };
    (keep(a), keep(b))
}

fn process_recording(
    bytes: &[u8],
    source: &str,
    seg_cfg: &SegmentationConfig,
    discontinuity_threshold: f64,
) -> Result<AcceptedPair, String> {
    let mut bodies = parse_skeleton_file(bytes).map_err(|e| format!("parse: {e}"))?;
    if bodies.len() < 2 {
        return Err(format!("fewer than two tracked bodies ({})", bodies.len()));
    }
    for body in bodies.iter_mut() {
        body.source_label = source.to_string();
    }
    // The two longest-tracked bodies form the pair; stable sort keeps the
    // earlier body first on ties.
    bodies.sort_by_key(|b| std::cmp::Reverse(b.frames.len()));
    let (raw_a, raw_b) = align_pair(&bodies[0], &bodies[1]);
    if raw_a.frames.len() < 2 {
        return Err("insufficient tracking overlap between the two bodies".into());
    }

    let seq_a = select_upper_body(&raw_a);
    let seq_b = select_upper_body(&raw_b);
    for (name, seq) in [("first body", &seq_a), ("second body", &seq_b)] {
        let defects = validate_sequence(seq, discontinuity_threshold);
        if !defects.is_empty() {
            return Err(format!(
                "tracking discontinuities: {} defects in {name}",
                defects.len()
            ));
        }
    }

    let seg = segment_reach_phase(&seq_a, &seq_b, seg_cfg).map_err(|e| e.to_string())?;

    let mut persons = Vec::new();
    for (seq, raw, role) in [
        (&seg.a, &raw_a, Role::Subject),
        (&seg.b, &raw_b, Role::Partner),
    ] {
        let angles = extract_joint_trajectory(seq).map_err(|e| format!("angles: {e}"))?;
        persons.push((raw.body_id.clone(), role, seq.clone(), angles));
    }
    Ok(AcceptedPair {
        source: source.to_string(),
        segment: [seg.bounds.start, seg.bounds.end],
        persons,
    })
}

/// Runs the ingestion pipeline over every `.skeleton` file in `input_dir`:
/// parse, pair the two longest-tracked bodies, reduce, validate, segment,
/// extract angles; writes cleaned trajectories, angle files and the manifest
/// (with a seeded train/test split over accepted interactions) to `out_dir`.
pub fn prepare_dataset(
    input_dir: &Path,
    out_dir: &Path,
    seg_cfg: &SegmentationConfig,
    discontinuity_threshold: f64,
    split_seed: u64,
    train_fraction: f64,
) -> Result<DatasetManifest, PipelineError> {
    let mut sources: Vec<PathBuf> = fs::read_dir(input_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "skeleton"))
        .collect();
    sources.sort();
    if sources.is_empty() {
        return Err(PipelineError::NoInput(format!(
            "no .skeleton files in {}",
            input_dir.display()
        )));
    }

    fs::create_dir_all(out_dir.join("cleaned"))?;
    fs::create_dir_all(out_dir.join("angles"))?;

    let mut outcomes: Vec<(String, Result<AcceptedPair, String>)> = Vec::new();
    for path in &sources {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let bytes = fs::read(path)?;
        let outcome = process_recording(&bytes, &name, seg_cfg, discontinuity_threshold);
        outcomes.push((name, outcome));
    }

    let accepted_indices: Vec<usize> = outcomes
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| r.is_ok())
        .map(|(i, _)| i)
        .collect();
    if accepted_indices.is_empty() {
        return Err(PipelineError::NoInput(
            "no recording survived preparation".into(),
        ));
    }

    // Interaction-level split keeps both persons of a recording on the same
    // side, so replayed test interactions never saw training.
    let mut shuffled = accepted_indices.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    shuffled.shuffle(&mut rng);
    let train_count = ((shuffled.len() as f64) * train_fraction).round() as usize;
    let train_set: std::collections::BTreeSet<usize> =
        shuffled.iter().take(train_count).copied().collect();

    let mut entries = Vec::new();
    let mut counts = ManifestCounts::default();
    let mut pair_index = 0usize;
    for (i, (source, outcome)) in outcomes.into_iter().enumerate() {
        let status = match outcome {
            Err(reason) => {
                counts.rejected += 1;
                InteractionStatus::Rejected { reason }
            }
            Ok(pair) => {
                let split = if train_set.contains(&i) {
                    counts.train += 1;
                    Split::Train
                } else {
                    counts.test += 1;
                    Split::Test
                };
                counts.accepted += 1;
                let mut persons = Vec::new();
                for (body_id, role, seq, angles) in &pair.persons {
                    let tag = match role {
                        Role::Subject => "subject",
                        Role::Partner => "partner",
                    };
                    let cleaned_rel = format!("cleaned/pair_{pair_index:03}_{tag}.jsonl");
                    let angles_rel = format!("angles/pair_{pair_index:03}_{tag}.jsonl");
                    files::write_cleaned_trajectory(
                        &out_dir.join(&cleaned_rel),
                        seq,
                        ReachSegment {
                            start: pair.segment[0],
                            end: pair.segment[1],
                        },
                    )?;
                    files::write_angle_trajectory(&out_dir.join(&angles_rel), angles)?;
                    persons.push(PersonArtifacts {
                        body_id: body_id.clone(),
                        role: *role,
                        cleaned: cleaned_rel,
                        angles: angles_rel,
                        angles_ok: angles.flagged.is_empty(),
                    });
                }
                pair_index += 1;
                InteractionStatus::Accepted {
                    split,
                    segment: pair.segment,
                    persons,
                }
            }
        };
        entries.push(ManifestEntry { source, status });
    }

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        split_seed,
        train_fraction,
        entries,
        counts,
    };
    manifest.validate()?;
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

// ── Model fitting over a prepared dataset ────────────────────────────────

/// Fits the movement primitive to every gimbal-clean training trajectory
/// (both persons of each interaction) and estimates the arm model as the
/// per-sequence median bone lengths.
pub fn fit_promp_from_manifest(
    manifest: &DatasetManifest,
    data_dir: &Path,
    basis: BasisConfig,
    reg: Regularizer,
    obs_noise_std: f64,
) -> Result<(ProMP, ArmModel), PipelineError> {
    let mut samples: Vec<WeightSample> = Vec::new();
    let mut uppers = Vec::new();
    let mut forearms = Vec::new();
    for (_, persons, _) in manifest.accepted(Some(Split::Train)) {
        for person in persons {
            if !person.angles_ok {
                continue;
            }
            let (seq, _) = files::read_cleaned_trajectory(&data_dir.join(&person.cleaned))?;
            let traj = files::read_angle_trajectory(&data_dir.join(&person.angles), seq.frame_rate)?;
            samples.push(fit_weights(&traj, &basis, reg)?);
            let model = estimate_arm_model(&seq)?;
            uppers.push(model.upper_arm_length);
            forearms.push(model.forearm_length);
        }
    }
    if samples.len() < 2 {
        return Err(PipelineError::NoInput(format!(
            "only {} usable training trajectories for primitive fitting",
            samples.len()
        )));
    }
    let obs_noise = nalgebra::DMatrix::identity(4, 4) * obs_noise_std * obs_noise_std;
    let promp = fit_promp(&samples, basis, 4, obs_noise)?;

    let median = |values: &mut Vec<f64>| {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values[values.len() / 2]
    };
    let arm = ArmModel::new(median(&mut uppers), median(&mut forearms));
    Ok((promp, arm))
}

/// (sequence, final right-wrist position) training rows for the predictor:
/// every person of every interaction in the requested split.
pub fn predictor_dataset(
    manifest: &DatasetManifest,
    data_dir: &Path,
    split: Split,
) -> Result<Vec<(SkeletonSequence, Vector3<f64>)>, PipelineError> {
    let mut out = Vec::new();
    for (_, persons, _) in manifest.accepted(Some(split)) {
        for person in persons {
            let (seq, _) = files::read_cleaned_trajectory(&data_dir.join(&person.cleaned))?;
            let target = seq
                .frames
                .last()
                .expect("cleaned trajectories are non-empty")
                .joint(crate::skeleton::UpperBodyJoint::WristRight);
            out.push((seq, target));
        }
    }
    if out.is_empty() {
        return Err(PipelineError::NoInput("empty predictor dataset".into()));
    }
    Ok(out)
}

// ── Replay & evaluation ──────────────────────────────────────────────────

/// Replays one recorded interaction: the controller takes the subject's
/// place (its torso frame comes from the subject's first frame) and the
/// partner's frames stream in strictly one by one, so commands can never
/// depend on future observations.
pub fn run_interaction(
    subject: &SkeletonSequence,
    partner: &SkeletonSequence,
    promp: &ProMP,
    arm: &ArmModel,
    predictor: &PredictorWeights,
    cfg: ControllerConfig,
) -> Result<InteractionLog, PipelineError> {
    let first = subject
        .frames
        .first()
        .ok_or_else(|| PipelineError::NoInput("empty subject trajectory".into()))?;
    let mount = torso_frame(first)?;
    let mut controller = Controller::new(promp.clone(), arm.clone(), mount, predictor, cfg);
    for frame in &partner.frames {
        controller.step(frame)?;
    }
    Ok(controller.finish()?)
}

/// Per-interaction final reaching errors aggregated over a batch of logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub count: usize,
    /// Mean final reaching error, meters.
    pub mean: f64,
    /// Population standard deviation, meters.
    pub std: f64,
    pub errors: Vec<f64>,
    /// Total steps across all interactions where the task-space solver hit
    /// its iteration budget.
    pub non_convergence_flags: usize,
}

pub fn evaluate(logs: &[InteractionLog]) -> Result<EvaluationSummary, PipelineError> {
    if logs.is_empty() {
        return Err(PipelineError::NoInput("no interaction logs".into()));
    }
    let errors: Vec<f64> = logs.iter().map(|l| l.summary.final_error).collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / errors.len() as f64;
    Ok(EvaluationSummary {
        count: errors.len(),
        mean,
        std: var.sqrt(),
        errors,
        non_convergence_flags: logs
            .iter()
            .map(|l| l.summary.non_convergence_steps)
            .sum(),
    })
}

/// Convenience: replays every test interaction of a prepared dataset.
pub fn replay_split(
    manifest: &DatasetManifest,
    data_dir: &Path,
    split: Split,
    promp: &ProMP,
    arm: &ArmModel,
    predictor: &PredictorWeights,
    cfg: &ControllerConfig,
) -> Result<Vec<InteractionLog>, PipelineError> {
    let mut logs = Vec::new();
    for (_, persons, _) in manifest.accepted(Some(split)) {
        let subject = persons
            .iter()
            .find(|p| p.role == Role::Subject)
            .ok_or_else(|| PipelineError::Format("interaction without a subject".into()))?;
        let partner = persons
            .iter()
            .find(|p| p.role == Role::Partner)
            .ok_or_else(|| PipelineError::Format("interaction without a partner".into()))?;
        let (subject_seq, _) = files::read_cleaned_trajectory(&data_dir.join(&subject.cleaned))?;
        let (partner_seq, _) = files::read_cleaned_trajectory(&data_dir.join(&partner.cleaned))?;
        logs.push(run_interaction(
            &subject_seq,
            &partner_seq,
            promp,
            arm,
            predictor,
            cfg.clone(),
        )?);
    }
    Ok(logs)
}
