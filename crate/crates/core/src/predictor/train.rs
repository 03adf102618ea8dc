//! Training: backpropagation through time over full sequences, Adam updates
//! and a finite-difference gradient check.
//!
//! Everything is single-threaded with a fixed summation order, so a given
//! seed reproduces the loss curve bit for bit.

use super::{
    sigmoid, LstmLayer, ParamSet, PredictorConfig, PredictorError, PredictorWeights,
    Standardization,
};
use crate::skeleton::{SkeletonSequence, UpperBodyFrame, UpperBodyJoint};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Parameter-shaped gradient accumulator.
pub type Gradients = ParamSet;

struct StepCache {
    /// Input to each layer (x for layer 0, h of the layer below otherwise).
    layer_inputs: Vec<DVector<f64>>,
    h_prev: Vec<DVector<f64>>,
    c_prev: Vec<DVector<f64>>,
    i: Vec<DVector<f64>>,
    f: Vec<DVector<f64>>,
    g: Vec<DVector<f64>>,
    o: Vec<DVector<f64>>,
    tanh_c: Vec<DVector<f64>>,
    /// Top-layer hidden state after the step.
    h_top: DVector<f64>,
}

/// Forward pass over one sequence that keeps everything the backward pass
/// needs. Returns the per-step head outputs (standardized space).
fn forward_cached(params: &ParamSet, inputs: &[DVector<f64>]) -> (Vec<DVector<f64>>, Vec<StepCache>) {
    let layers = params.layers.len();
    let hidden = params.layers[0].w_hh.ncols();
    let mut h = vec![DVector::zeros(hidden); layers];
    let mut c = vec![DVector::zeros(hidden); layers];
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());

    for x in inputs {
        let mut cache = StepCache {
            layer_inputs: Vec::with_capacity(layers),
            h_prev: Vec::with_capacity(layers),
            c_prev: Vec::with_capacity(layers),
            i: Vec::with_capacity(layers),
            f: Vec::with_capacity(layers),
            g: Vec::with_capacity(layers),
            o: Vec::with_capacity(layers),
            tanh_c: Vec::with_capacity(layers),
            h_top: DVector::zeros(hidden),
        };
        let mut input = x.clone();
        for (l, layer) in params.layers.iter().enumerate() {
            cache.layer_inputs.push(input.clone());
            cache.h_prev.push(h[l].clone());
            cache.c_prev.push(c[l].clone());

            let gates = &layer.w_ih * &input + &layer.w_hh * &h[l] + &layer.bias;
            let mut i_g = DVector::zeros(hidden);
            let mut f_g = DVector::zeros(hidden);
            let mut g_g = DVector::zeros(hidden);
            let mut o_g = DVector::zeros(hidden);
            let mut c_new = DVector::zeros(hidden);
            let mut tanh_c = DVector::zeros(hidden);
            for k in 0..hidden {
                i_g[k] = sigmoid(gates[k]);
                f_g[k] = sigmoid(gates[hidden + k]);
                g_g[k] = gates[2 * hidden + k].tanh();
                o_g[k] = sigmoid(gates[3 * hidden + k]);
                c_new[k] = f_g[k] * c[l][k] + i_g[k] * g_g[k];
                tanh_c[k] = c_new[k].tanh();
            }
            let mut h_new = DVector::zeros(hidden);
            for k in 0..hidden {
                h_new[k] = o_g[k] * tanh_c[k];
            }
            cache.i.push(i_g);
            cache.f.push(f_g);
            cache.g.push(g_g);
            cache.o.push(o_g);
            cache.tanh_c.push(tanh_c);
            h[l] = h_new;
            c[l] = c_new;
            input = h[l].clone();
        }
        cache.h_top = h[layers - 1].clone();
        outputs.push(&params.head_w * &cache.h_top + &params.head_b);
        caches.push(cache);
    }
    (outputs, caches)
}

/// Loss and analytic gradients for one (sequence, final-hand) pair.
///
/// The loss is the mean over steps of the squared camera-frame distance
/// between the decoded estimate and the target.
pub(crate) fn sequence_loss_and_gradients(
    weights: &PredictorWeights,
    frames: &[UpperBodyFrame],
    target: Vector3<f64>,
) -> (f64, Gradients) {
    let std = &weights.standardization;
    let inputs: Vec<DVector<f64>> = frames.iter().map(|f| std.encode(f)).collect();
    let bases: Vec<Vector3<f64>> = frames
        .iter()
        .map(|f| f.joint(UpperBodyJoint::SpineBase))
        .collect();
    let (outputs, caches) = forward_cached(&weights.params, &inputs);

    let t_len = frames.len();
    let scale = std.torso_scale;
    let mut loss = 0.0;
    // d(loss)/d(head output) per step.
    let mut d_outputs = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let estimate = Vector3::new(outputs[t][0], outputs[t][1], outputs[t][2]) * scale + bases[t];
        let err = estimate - target;
        loss += err.norm_squared() / t_len as f64;
        let d = err * (2.0 * scale / t_len as f64);
        d_outputs.push(DVector::from_vec(vec![d.x, d.y, d.z]));
    }

    let params = &weights.params;
    let layers = params.layers.len();
    let hidden = params.layers[0].w_hh.ncols();
    let mut grads = ParamSet::zeros(&weights.config);

    // Gradient flowing into each layer's hidden output per step; starts as
    // the head's contribution for the top layer.
    let mut grad_from_above: Vec<DVector<f64>> = (0..t_len)
        .map(|t| {
            let d = &d_outputs[t];
            grads.head_w += d * caches[t].h_top.transpose();
            grads.head_b += d;
            params.head_w.transpose() * d
        })
        .collect();

    for l in (0..layers).rev() {
        let layer: &LstmLayer = &params.layers[l];
        let mut dh_next = DVector::<f64>::zeros(hidden);
        let mut dc_next = DVector::<f64>::zeros(hidden);
        let mut grad_x: Vec<DVector<f64>> = Vec::with_capacity(t_len);
        grad_x.resize(t_len, DVector::zeros(0));

        for t in (0..t_len).rev() {
            let cache = &caches[t];
            let i_g = &cache.i[l];
            let f_g = &cache.f[l];
            let g_g = &cache.g[l];
            let o_g = &cache.o[l];
            let tanh_c = &cache.tanh_c[l];
            let c_prev = &cache.c_prev[l];
            let h_prev = &cache.h_prev[l];
            let x_t = &cache.layer_inputs[l];

            let dh = &grad_from_above[t] + &dh_next;
            let mut dc = DVector::<f64>::zeros(hidden);
            let mut d_gates = DVector::<f64>::zeros(4 * hidden);
            for k in 0..hidden {
                dc[k] = dh[k] * o_g[k] * (1.0 - tanh_c[k] * tanh_c[k]) + dc_next[k];
            }
            for k in 0..hidden {
                d_gates[k] = dc[k] * g_g[k] * i_g[k] * (1.0 - i_g[k]);
                d_gates[hidden + k] = dc[k] * c_prev[k] * f_g[k] * (1.0 - f_g[k]);
                d_gates[2 * hidden + k] = dc[k] * i_g[k] * (1.0 - g_g[k] * g_g[k]);
                d_gates[3 * hidden + k] = dh[k] * tanh_c[k] * o_g[k] * (1.0 - o_g[k]);
            }

            grads.layers[l].w_ih += &d_gates * x_t.transpose();
            grads.layers[l].w_hh += &d_gates * h_prev.transpose();
            grads.layers[l].bias += &d_gates;

            dh_next = layer.w_hh.transpose() * &d_gates;
            for k in 0..hidden {
                dc_next[k] = dc[k] * f_g[k];
            }
            grad_x[t] = layer.w_ih.transpose() * &d_gates;
        }

        if l > 0 {
            grad_from_above = grad_x;
        }
    }

    (loss, grads)
}

fn grad_norm(g: &Gradients) -> f64 {
    g.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct Adam {
    m: ParamSet,
    v: ParamSet,
    t: usize,
}

impl Adam {
    fn new(cfg: &PredictorConfig) -> Self {
        Self {
            m: ParamSet::zeros(cfg),
            v: ParamSet::zeros(cfg),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ParamSet, grads: &Gradients, cfg: &PredictorConfig) {
        self.t += 1;
        let b1 = cfg.beta1;
        let b2 = cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let lr = cfg.learning_rate;
        let eps = cfg.epsilon;

        let update = |p: &mut DMatrix<f64>, m: &mut DMatrix<f64>, v: &mut DMatrix<f64>, g: &DMatrix<f64>| {
            for ((p, m), (v, g)) in p
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut().zip(g.iter()))
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        let update_vec = |p: &mut DVector<f64>, m: &mut DVector<f64>, v: &mut DVector<f64>, g: &DVector<f64>| {
            for ((p, m), (v, g)) in p
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut().zip(g.iter()))
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };

        for l in 0..params.layers.len() {
            update(
                &mut params.layers[l].w_ih,
                &mut self.m.layers[l].w_ih,
                &mut self.v.layers[l].w_ih,
                &grads.layers[l].w_ih,
            );
            update(
                &mut params.layers[l].w_hh,
                &mut self.m.layers[l].w_hh,
                &mut self.v.layers[l].w_hh,
                &grads.layers[l].w_hh,
            );
            update_vec(
                &mut params.layers[l].bias,
                &mut self.m.layers[l].bias,
                &mut self.v.layers[l].bias,
                &grads.layers[l].bias,
            );
        }
        update(&mut params.head_w, &mut self.m.head_w, &mut self.v.head_w, &grads.head_w);
        update_vec(&mut params.head_b, &mut self.m.head_b, &mut self.v.head_b, &grads.head_b);
    }
}

fn scale_grads(g: &mut Gradients, factor: f64) {
    g.for_each_mut(|v| *v *= factor);
}

fn add_grads(acc: &mut Gradients, other: &Gradients) {
    for l in 0..acc.layers.len() {
        acc.layers[l].w_ih += &other.layers[l].w_ih;
        acc.layers[l].w_hh += &other.layers[l].w_hh;
        acc.layers[l].bias += &other.layers[l].bias;
    }
    acc.head_w += &other.head_w;
    acc.head_b += &other.head_b;
}

/// Trains a predictor on (sequence, final hand position) pairs.
///
/// Standardization statistics come from the dataset itself. Sequences are
/// shuffled into batches with a seeded generator; gradients within a batch
/// are accumulated in index order. Returns the weights and the per-epoch
/// mean training loss.
pub fn train(
    dataset: &[(SkeletonSequence, Vector3<f64>)],
    cfg: &PredictorConfig,
) -> Result<(PredictorWeights, Vec<f64>), PredictorError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(PredictorError::EmptyDataset);
    }
    for (i, (seq, _)) in dataset.iter().enumerate() {
        if seq.is_empty() {
            return Err(PredictorError::ShapeMismatch(format!("sequence {i} is empty")));
        }
    }

    let refs: Vec<&SkeletonSequence> = dataset.iter().map(|(s, _)| s).collect();
    let standardization = Standardization::from_dataset(&refs);
    let mut weights = PredictorWeights::init(cfg, standardization)?;
    let mut adam = Adam::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = ParamSet::zeros(cfg);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (seq, target) = &dataset[i];
                let (l, g) = sequence_loss_and_gradients(&weights, &seq.frames, *target);
                batch_loss += l;
                add_grads(&mut grads, &g);
            }
            let inv = 1.0 / batch.len() as f64;
            scale_grads(&mut grads, inv);
            batch_loss *= inv;
            epoch_loss += batch_loss * batch.len() as f64;

            if !batch_loss.is_finite() {
                return Err(PredictorError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    grad_norm: grad_norm(&grads),
                });
            }
            adam.step(&mut weights.params, &grads, cfg);
        }
        curve.push(epoch_loss / dataset.len() as f64);
    }
    Ok((weights, curve))
}

/// Compares analytic BPTT gradients with central finite differences over
/// every parameter and returns the maximum relative error. Meant for small
/// networks (hidden ≤ 8) in double precision.
pub fn gradient_check(
    weights: &PredictorWeights,
    frames: &[UpperBodyFrame],
    target: Vector3<f64>,
) -> f64 {
    const H: f64 = 1e-5;
    let (_, analytic) = sequence_loss_and_gradients(weights, frames, target);
    let analytic = analytic.flatten();

    let loss_with = |params: &ParamSet| {
        let probe = PredictorWeights {
            config: weights.config.clone(),
            standardization: weights.standardization,
            params: params.clone(),
        };
        let trace = super::forward(&probe, frames);
        super::loss(&trace, target)
    };

    let n = analytic.len();
    let mut max_rel = 0.0f64;
    for idx in 0..n {
        let mut plus = weights.params.clone();
        let mut k = 0usize;
        plus.for_each_mut(|v| {
            if k == idx {
                *v += H;
            }
            k += 1;
        });
        let mut minus = weights.params.clone();
        let mut k = 0usize;
        minus.for_each_mut(|v| {
            if k == idx {
                *v -= H;
            }
            k += 1;
        });
        let fd = (loss_with(&plus) - loss_with(&minus)) / (2.0 * H);
        let denom = analytic[idx].abs().max(fd.abs()).max(1e-6);
        max_rel = max_rel.max((analytic[idx] - fd).abs() / denom);
    }
    max_rel
}
