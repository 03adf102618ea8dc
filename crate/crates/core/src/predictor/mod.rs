//! Recurrent prediction of the partner's final hand position.
//!
//! A stacked LSTM (sigmoid gates, tanh cell/output nonlinearities, gate
//! order input/forget/cell/output) followed by an affine head emits a 3D
//! estimate of where the partner's right hand will end up, one estimate per
//! observed frame. Everything runs in double precision so the
//! finite-difference gradient check is meaningful.
//!
//! Inputs are standardized before entering the network: each frame is
//! translated so the spine base sits at the origin, then scaled by the
//! per-dataset mean torso length. The network therefore predicts the offset
//! of the final hand from the current spine base, in torso-length units;
//! estimates are mapped back to camera coordinates on the way out.

mod train;

pub use train::{gradient_check, train, Gradients};

use crate::skeleton::{SkeletonSequence, UpperBodyFrame, UpperBodyJoint, UPPER_BODY_JOINT_COUNT};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch} (gradient norm {grad_norm})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        grad_norm: f64,
    },
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed weight file: {0}")]
    Format(String),
}

/// Network and optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden_dim: 64,
            input_dim: 3 * UPPER_BODY_JOINT_COUNT,
            output_dim: 3,
            batch_size: 32,
            epochs: 200,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        if self.layers == 0
            || self.hidden_dim == 0
            || self.input_dim == 0
            || self.output_dim == 0
            || self.batch_size == 0
        {
            return Err(PredictorError::ShapeMismatch(
                "layer, dimension and batch sizes must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Input standardization statistics, stored with the weights so inference
/// applies the same transform as training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    /// Mean spine-base→spine-shoulder length over the training set, meters.
    pub torso_scale: f64,
}

impl Standardization {
    pub fn identity() -> Self {
        Self { torso_scale: 1.0 }
    }

    /// Mean torso length over every frame of the dataset.
    pub fn from_dataset(sequences: &[&SkeletonSequence]) -> Self {
        let mut sum = 0.0;
        let mut count = 0usize;
        for seq in sequences {
            for frame in &seq.frames {
                sum += (frame.joint(UpperBodyJoint::SpineShoulder)
                    - frame.joint(UpperBodyJoint::SpineBase))
                .norm();
                count += 1;
            }
        }
        let torso_scale = if count == 0 { 1.0 } else { sum / count as f64 };
        Self { torso_scale }
    }

    /// Flattens a frame to the 45-entry network input.
    pub fn encode(&self, frame: &UpperBodyFrame) -> DVector<f64> {
        let base = frame.joint(UpperBodyJoint::SpineBase);
        let mut x = DVector::zeros(3 * UPPER_BODY_JOINT_COUNT);
        for (j, p) in frame.joints.iter().enumerate() {
            let q = (p - base) / self.torso_scale;
            x[3 * j] = q.x;
            x[3 * j + 1] = q.y;
            x[3 * j + 2] = q.z;
        }
        x
    }

    /// Maps a network output back to camera coordinates for a given frame.
    pub fn decode(&self, y: &DVector<f64>, frame: &UpperBodyFrame) -> Vector3<f64> {
        let base = frame.joint(UpperBodyJoint::SpineBase);
        Vector3::new(y[0], y[1], y[2]) * self.torso_scale + base
    }
}

/// One LSTM layer: stacked gate weights (input, forget, cell, output) for
/// the input and recurrent paths plus one bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// 4·hidden × layer_input
    pub w_ih: DMatrix<f64>,
    /// 4·hidden × hidden
    pub w_hh: DMatrix<f64>,
    /// 4·hidden
    pub bias: DVector<f64>,
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub layers: Vec<LstmLayer>,
    /// output_dim × hidden
    pub head_w: DMatrix<f64>,
    pub head_b: DVector<f64>,
}

impl ParamSet {
    pub fn zeros(cfg: &PredictorConfig) -> Self {
        let h = cfg.hidden_dim;
        let layers = (0..cfg.layers)
            .map(|l| {
                let input = if l == 0 { cfg.input_dim } else { h };
                LstmLayer {
                    w_ih: DMatrix::zeros(4 * h, input),
                    w_hh: DMatrix::zeros(4 * h, h),
                    bias: DVector::zeros(4 * h),
                }
            })
            .collect();
        Self {
            layers,
            head_w: DMatrix::zeros(cfg.output_dim, h),
            head_b: DVector::zeros(cfg.output_dim),
        }
    }

    /// Applies `f` to every parameter in the documented file order:
    /// per layer w_ih (row-major), w_hh, bias; then head_w, head_b.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.layers {
            for i in 0..layer.w_ih.nrows() {
                for j in 0..layer.w_ih.ncols() {
                    f(&mut layer.w_ih[(i, j)]);
                }
            }
            for i in 0..layer.w_hh.nrows() {
                for j in 0..layer.w_hh.ncols() {
                    f(&mut layer.w_hh[(i, j)]);
                }
            }
            for v in layer.bias.iter_mut() {
                f(v);
            }
        }
        for i in 0..self.head_w.nrows() {
            for j in 0..self.head_w.ncols() {
                f(&mut self.head_w[(i, j)]);
            }
        }
        for v in self.head_b.iter_mut() {
            f(v);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut clone = self.clone();
        clone.for_each_mut(|v| out.push(*v));
        out
    }

    pub fn param_count(&self) -> usize {
        self.flatten().len()
    }
}

/// Trained predictor: parameters plus the configuration and standardization
/// needed to run it.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorWeights {
    pub config: PredictorConfig,
    pub standardization: Standardization,
    pub params: ParamSet,
}

impl PredictorWeights {
    /// Seeded initialization: uniform in ±1/√hidden, forget-gate bias +1.
    pub fn init(cfg: &PredictorConfig, standardization: Standardization) -> Result<Self, PredictorError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bound = 1.0 / (cfg.hidden_dim as f64).sqrt();
        let mut params = ParamSet::zeros(cfg);
        params.for_each_mut(|v| *v = rng.gen_range(-bound..bound));
        let h = cfg.hidden_dim;
        for layer in &mut params.layers {
            for i in h..2 * h {
                layer.bias[i] += 1.0;
            }
        }
        Ok(Self {
            config: cfg.clone(),
            standardization,
            params,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.params.flatten().iter().all(|v| v.is_finite())
    }
}

/// Per-step final-hand estimates for one observed prefix, camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace {
    pub estimates: Vec<Vector3<f64>>,
}

impl PredictionTrace {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

/// Mean squared Euclidean distance between the per-step estimates and the
/// final hand position.
pub fn loss(trace: &PredictionTrace, target: Vector3<f64>) -> f64 {
    assert!(!trace.is_empty(), "loss of an empty trace");
    trace
        .estimates
        .iter()
        .map(|e| (e - target).norm_squared())
        .sum::<f64>()
        / trace.len() as f64
}

/// Incremental evaluation state: one per interaction, fed one frame at a
/// time. Appending a frame does not recompute the prefix.
#[derive(Debug, Clone)]
pub struct PredictorSession<'a> {
    weights: &'a PredictorWeights,
    h: Vec<DVector<f64>>,
    c: Vec<DVector<f64>>,
}

impl<'a> PredictorSession<'a> {
    pub fn new(weights: &'a PredictorWeights) -> Self {
        let hdim = weights.config.hidden_dim;
        Self {
            weights,
            h: vec![DVector::zeros(hdim); weights.config.layers],
            c: vec![DVector::zeros(hdim); weights.config.layers],
        }
    }

    pub fn reset(&mut self) {
        for v in self.h.iter_mut().chain(self.c.iter_mut()) {
            v.fill(0.0);
        }
    }

    /// Advances the recurrence by one frame and returns the current
    /// final-hand estimate in camera coordinates.
    pub fn step(&mut self, frame: &UpperBodyFrame) -> Vector3<f64> {
        let w = self.weights;
        let x = w.standardization.encode(frame);
        let y = step_raw(&w.params, &mut self.h, &mut self.c, &x);
        w.standardization.decode(&y, frame)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One recurrence step over standardized input; updates the states in place
/// and returns the head output (standardized space).
pub(crate) fn step_raw(
    params: &ParamSet,
    h: &mut [DVector<f64>],
    c: &mut [DVector<f64>],
    x: &DVector<f64>,
) -> DVector<f64> {
    let mut input = x.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let hidden = layer.w_hh.ncols();
        let gates = &layer.w_ih * &input + &layer.w_hh * &h[l] + &layer.bias;
        let mut h_new = DVector::zeros(hidden);
        let mut c_new = DVector::zeros(hidden);
        for k in 0..hidden {
            let i_g = sigmoid(gates[k]);
            let f_g = sigmoid(gates[hidden + k]);
            let g_g = gates[2 * hidden + k].tanh();
            let o_g = sigmoid(gates[3 * hidden + k]);
            let cv = f_g * c[l][k] + i_g * g_g;
            c_new[k] = cv;
            h_new[k] = o_g * cv.tanh();
        }
        h[l] = h_new;
        c[l] = c_new;
        input = h[l].clone();
    }
    &params.head_w * input + &params.head_b
}

/// Runs the full recurrence over a frame sequence. Deterministic; identical
/// to feeding the frames one by one through a [`PredictorSession`].
pub fn forward(weights: &PredictorWeights, frames: &[UpperBodyFrame]) -> PredictionTrace {
    let mut session = PredictorSession::new(weights);
    PredictionTrace {
        estimates: frames.iter().map(|f| session.step(f)).collect(),
    }
}

/// Final-hand estimate after the whole prefix: the last element of the
/// forward trace.
pub fn predict_final_hand(weights: &PredictorWeights, prefix: &[UpperBodyFrame]) -> Vector3<f64> {
    assert!(!prefix.is_empty(), "prediction needs at least one frame");
    forward(weights, prefix).estimates.pop().map_or_else(
        || unreachable!("non-empty prefix yields non-empty trace"),
        |v| v,
    )
}

// ── Weight file ──────────────────────────────────────────────────────────

const WEIGHTS_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerFile {
    /// Row-major 4·hidden × input.
    w_ih: Vec<f64>,
    /// Row-major 4·hidden × hidden.
    w_hh: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    version: u32,
    config: PredictorConfig,
    standardization: Standardization,
    layers: Vec<LayerFile>,
    /// Row-major output × hidden.
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn matrix_from_rows(data: &[f64], rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, PredictorError> {
    if data.len() != rows * cols {
        return Err(PredictorError::ShapeMismatch(format!(
            "{what}: {} values for a {rows}x{cols} matrix",
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl PredictorWeights {
    pub fn to_json(&self) -> String {
        let file = WeightsFile {
            version: WEIGHTS_FILE_VERSION,
            config: self.config.clone(),
            standardization: self.standardization,
            layers: self
                .params
                .layers
                .iter()
                .map(|l| LayerFile {
                    w_ih: matrix_rows(&l.w_ih),
                    w_hh: matrix_rows(&l.w_hh),
                    bias: l.bias.iter().copied().collect(),
                })
                .collect(),
            head_w: matrix_rows(&self.params.head_w),
            head_b: self.params.head_b.iter().copied().collect(),
        };
        serde_json::to_string(&file).expect("weight serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, PredictorError> {
        let file: WeightsFile =
            serde_json::from_str(text).map_err(|e| PredictorError::Format(e.to_string()))?;
        if file.version != WEIGHTS_FILE_VERSION {
            return Err(PredictorError::UnsupportedVersion(file.version));
        }
        let cfg = file.config;
        cfg.validate()?;
        if file.layers.len() != cfg.layers {
            return Err(PredictorError::ShapeMismatch(format!(
                "{} layer blocks for {} configured layers",
                file.layers.len(),
                cfg.layers
            )));
        }
        let h = cfg.hidden_dim;
        let mut layers = Vec::with_capacity(cfg.layers);
        for (l, lf) in file.layers.iter().enumerate() {
            let input = if l == 0 { cfg.input_dim } else { h };
            if lf.bias.len() != 4 * h {
                return Err(PredictorError::ShapeMismatch(format!(
                    "layer {l} bias has {} entries, expected {}",
                    lf.bias.len(),
                    4 * h
                )));
            }
            layers.push(LstmLayer {
                w_ih: matrix_from_rows(&lf.w_ih, 4 * h, input, &format!("layer {l} w_ih"))?,
                w_hh: matrix_from_rows(&lf.w_hh, 4 * h, h, &format!("layer {l} w_hh"))?,
                bias: DVector::from_vec(lf.bias.clone()),
            });
        }
        if file.head_b.len() != cfg.output_dim {
            return Err(PredictorError::ShapeMismatch(format!(
                "head bias has {} entries, expected {}",
                file.head_b.len(),
                cfg.output_dim
            )));
        }
        let weights = PredictorWeights {
            standardization: file.standardization,
            params: ParamSet {
                layers,
                head_w: matrix_from_rows(&file.head_w, cfg.output_dim, h, "head_w")?,
                head_b: DVector::from_vec(file.head_b),
            },
            config: cfg,
        };
        if !weights.is_finite() {
            return Err(PredictorError::Format("non-finite parameter".into()));
        }
        Ok(weights)
    }
}
