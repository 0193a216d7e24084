//! Small differentiable classifiers trained with native mini-batch SGD.
//!
//! Two architectures are supported: a softmax-linear model and a
//! one-hidden-layer tanh MLP, both over flat `f64` parameter vectors with a
//! fixed layout. Training uses plain SGD on mean cross-entropy with a
//! per-round learning-rate decay and a seeded shuffle per epoch; everything
//! is deterministic given its inputs.

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{FaflError, Result};
use crate::rng::{mix_seed, rng_from};

/// Architecture descriptor: `hidden_dim = 0` selects the linear model.
///
/// Parameter layout (row-major):
/// - linear: `W[C x D], b[C]`
/// - mlp:    `W1[H x D], b1[H], W2[C x H], b2[C]`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub class_count: usize,
}

impl Arch {
    pub fn linear(input_dim: usize, class_count: usize) -> Self {
        Self { input_dim, hidden_dim: 0, class_count }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, class_count: usize) -> Self {
        Self { input_dim, hidden_dim, class_count }
    }

    pub fn is_linear(&self) -> bool {
        self.hidden_dim == 0
    }

    pub fn param_count(&self) -> usize {
        if self.is_linear() {
            self.class_count * self.input_dim + self.class_count
        } else {
            self.hidden_dim * self.input_dim
                + self.hidden_dim
                + self.class_count * self.hidden_dim
                + self.class_count
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(FaflError::Config("input_dim must be positive".into()));
        }
        if self.class_count < 2 {
            return Err(FaflError::Config("class_count must be at least 2".into()));
        }
        Ok(())
    }
}

/// Flat model parameter vector tied to its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub arch: Arch,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(arch: Arch) -> Self {
        Self { values: vec![0.0; arch.param_count()], arch }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// w + delta, elementwise.
    pub fn plus(&self, delta: &ModelDelta) -> Result<ParamVector> {
        if delta.values.len() != self.values.len() {
            return Err(FaflError::Config("delta length mismatch".into()));
        }
        let values = self.values.iter().zip(&delta.values).map(|(w, d)| w + d).collect();
        Ok(ParamVector { arch: self.arch, values })
    }
}

/// Elementwise parameter change, same layout as the vector it was computed
/// against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDelta {
    pub values: Vec<f64>,
}

impl ModelDelta {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn between(new: &ParamVector, old: &ParamVector) -> Self {
        Self {
            values: new.values.iter().zip(&old.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Local SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, decay: 0.992, batch_size: 64, local_epochs: 1, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(FaflError::Config("learning_rate must be positive".into()));
        }
        if self.decay <= 0.0 || self.decay > 1.0 || self.decay.is_nan() {
            return Err(FaflError::Config("decay must lie in (0,1]".into()));
        }
        if self.batch_size == 0 {
            return Err(FaflError::Config("batch_size must be at least 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(FaflError::Config("local_epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// Effective step size at federated round `round`.
    pub fn rate_at(&self, round: usize) -> f64 {
        self.learning_rate * self.decay.powi(round as i32)
    }
}

/// Deterministic scaled-uniform initialization in `[-1/sqrt(fan_in),
/// +1/sqrt(fan_in)]` per layer.
pub fn init_model(arch: &Arch, seed: u64) -> Result<ParamVector> {
    arch.validate()?;
    let mut rng = rng_from(mix_seed(
        seed,
        &[0x1417, arch.input_dim as u64, arch.hidden_dim as u64, arch.class_count as u64],
    ));
    let mut values = Vec::with_capacity(arch.param_count());
    let mut fill = |count: usize, fan_in: usize, values: &mut Vec<f64>| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..count {
            let u: f64 = rng.random();
            values.push(bound * (2.0 * u - 1.0));
        }
    };
    if arch.is_linear() {
        fill(arch.class_count * arch.input_dim + arch.class_count, arch.input_dim, &mut values);
    } else {
        fill(arch.hidden_dim * arch.input_dim + arch.hidden_dim, arch.input_dim, &mut values);
        fill(arch.class_count * arch.hidden_dim + arch.class_count, arch.hidden_dim, &mut values);
    }
    Ok(ParamVector { arch: *arch, values })
}

fn check_dims(w: &ParamVector, data: &LabeledDataset) -> Result<()> {
    if data.dim() != w.arch.input_dim {
        return Err(FaflError::Config(format!(
            "feature dim {} does not match model input dim {}",
            data.dim(),
            w.arch.input_dim
        )));
    }
    if data.class_count() as usize > w.arch.class_count {
        return Err(FaflError::Config(format!(
            "dataset has {} classes but model expects {}",
            data.class_count(),
            w.arch.class_count
        )));
    }
    if w.values.len() != w.arch.param_count() {
        return Err(FaflError::Config("parameter vector length mismatch".into()));
    }
    Ok(())
}

/// Class logits for one sample; `hidden` receives the tanh activations for
/// the MLP (used by backprop) and stays empty for the linear model.
fn forward(w: &ParamVector, x: &[f64], hidden: &mut Vec<f64>) -> Vec<f64> {
    let arch = &w.arch;
    let v = &w.values;
    if arch.is_linear() {
        let d = arch.input_dim;
        let c = arch.class_count;
        let bias = c * d;
        (0..c)
            .map(|k| {
                let row = &v[k * d..(k + 1) * d];
                row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + v[bias + k]
            })
            .collect()
    } else {
        let d = arch.input_dim;
        let h = arch.hidden_dim;
        let c = arch.class_count;
        let b1 = h * d;
        let w2 = b1 + h;
        let b2 = w2 + c * h;
        hidden.clear();
        for j in 0..h {
            let row = &v[j * d..(j + 1) * d];
            let pre = row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + v[b1 + j];
            hidden.push(pre.tanh());
        }
        (0..c)
            .map(|k| {
                let row = &v[w2 + k * h..w2 + (k + 1) * h];
                row.iter().zip(hidden.iter()).map(|(wi, hi)| wi * hi).sum::<f64>() + v[b2 + k]
            })
            .collect()
    }
}

/// Numerically stable `(-log softmax[y], softmax - onehot(y))`.
fn softmax_ce(logits: &[f64], y: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = -(logits[y] - max - sum.ln());
    let mut dlogits: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    dlogits[y] -= 1.0;
    (loss, dlogits)
}

/// Mean cross-entropy and exact analytic gradient over the index subset.
pub fn loss_and_grad(w: &ParamVector, data: &LabeledDataset, idx: &[usize]) -> Result<(f64, ModelDelta)> {
    check_dims(w, data)?;
    if idx.is_empty() {
        return Err(FaflError::Training("batch must be non-empty".into()));
    }
    let arch = &w.arch;
    let mut grad = vec![0.0; w.values.len()];
    let mut total = 0.0;
    let mut hidden = Vec::new();
    let inv = 1.0 / idx.len() as f64;

    for &i in idx {
        let x = data.row(i);
        let y = data.label(i) as usize;
        let logits = forward(w, x, &mut hidden);
        let (loss, dlogits) = softmax_ce(&logits, y);
        total += loss;
        if arch.is_linear() {
            let d = arch.input_dim;
            let bias = arch.class_count * d;
            for (k, &dk) in dlogits.iter().enumerate() {
                let row = &mut grad[k * d..(k + 1) * d];
                for (g, &xi) in row.iter_mut().zip(x) {
                    *g += dk * xi * inv;
                }
                grad[bias + k] += dk * inv;
            }
        } else {
            let d = arch.input_dim;
            let h = arch.hidden_dim;
            let b1 = h * d;
            let w2 = b1 + h;
            let b2 = w2 + arch.class_count * h;
            // Output layer.
            for (k, &dk) in dlogits.iter().enumerate() {
                let row = &mut grad[w2 + k * h..w2 + (k + 1) * h];
                for (g, &hj) in row.iter_mut().zip(&hidden) {
                    *g += dk * hj * inv;
                }
                grad[b2 + k] += dk * inv;
            }
            // Hidden layer through the tanh derivative.
            for j in 0..h {
                let mut dh = 0.0;
                for (k, &dk) in dlogits.iter().enumerate() {
                    dh += w.values[w2 + k * h + j] * dk;
                }
                let dpre = dh * (1.0 - hidden[j] * hidden[j]);
                let row = &mut grad[j * d..(j + 1) * d];
                for (g, &xi) in row.iter_mut().zip(x) {
                    *g += dpre * xi * inv;
                }
                grad[b1 + j] += dpre * inv;
            }
        }
    }
    Ok((total * inv, ModelDelta { values: grad }))
}

/// Mean cross-entropy of the index subset without the gradient.
pub fn mean_loss(w: &ParamVector, data: &LabeledDataset, idx: &[usize]) -> Result<f64> {
    check_dims(w, data)?;
    if idx.is_empty() {
        return Err(FaflError::Evaluation("cannot evaluate an empty set".into()));
    }
    let mut hidden = Vec::new();
    let mut total = 0.0;
    for &i in idx {
        let logits = forward(w, data.row(i), &mut hidden);
        total += softmax_ce(&logits, data.label(i) as usize).0;
    }
    Ok(total / idx.len() as f64)
}

/// Outcome of [`local_train`]: updated weights, their elementwise change and
/// the shard's mean loss at the received weights (before training).
pub type TrainOutcome = (ParamVector, ModelDelta, f64);

/// `local_epochs` of mini-batch SGD on cross-entropy with step size
/// `learning_rate * decay^round`. The per-epoch sample order is a seeded
/// shuffle; the last short batch is kept.
pub fn local_train(
    w: &ParamVector,
    shard: &LabeledDataset,
    cfg: &TrainConfig,
    round: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_dims(w, shard)?;
    if shard.n() == 0 {
        return Err(FaflError::Training("shard must be non-empty".into()));
    }

    let all: Vec<usize> = (0..shard.n()).collect();
    let loss_before = mean_loss(w, shard, &all)?;
    let rate = cfg.rate_at(round);
    let mut current = w.clone();

    for epoch in 0..cfg.local_epochs {
        let mut order = all.clone();
        let mut rng = rng_from(mix_seed(cfg.seed, &[0x10ca1, round as u64, epoch as u64]));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, grad) = loss_and_grad(&current, shard, batch)?;
            for (wi, gi) in current.values.iter_mut().zip(&grad.values) {
                *wi -= rate * gi;
            }
        }
    }

    // Ship w_new as w + delta so the reconstruction identity holds exactly
    // in float arithmetic; the adjustment is at most one ulp per entry.
    let delta = ModelDelta::between(&current, w);
    let w_new = w.plus(&delta)?;
    Ok((w_new, delta, loss_before))
}

/// Evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// Mean loss per group, for every group with at least one sample.
    pub per_group_loss: std::collections::BTreeMap<u32, f64>,
}

/// Top-1 accuracy (argmax ties break to the lowest class index), mean loss
/// and per-group losses. Groups come from `groups` when given, else the
/// dataset's group column, else the label classes.
pub fn evaluate(
    w: &ParamVector,
    data: &LabeledDataset,
    groups: Option<&[u32]>,
) -> Result<EvalReport> {
    check_dims(w, data)?;
    if data.n() == 0 {
        return Err(FaflError::Evaluation("cannot evaluate an empty dataset".into()));
    }
    if let Some(g) = groups {
        if g.len() != data.n() {
            return Err(FaflError::Evaluation("group labels length mismatch".into()));
        }
    }

    let mut hidden = Vec::new();
    let mut correct = 0usize;
    let mut total_loss = 0.0;
    let mut group_loss: std::collections::BTreeMap<u32, (f64, usize)> = Default::default();

    for i in 0..data.n() {
        let logits = forward(w, data.row(i), &mut hidden);
        let y = data.label(i) as usize;
        let (loss, _) = softmax_ce(&logits, y);
        total_loss += loss;

        let mut best = 0usize;
        for (k, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = k;
            }
        }
        if best == y {
            correct += 1;
        }

        let g = match groups {
            Some(gs) => gs[i],
            None => data.effective_group(i),
        };
        let entry = group_loss.entry(g).or_insert((0.0, 0));
        entry.0 += loss;
        entry.1 += 1;
    }

    Ok(EvalReport {
        accuracy: correct as f64 / data.n() as f64,
        mean_loss: total_loss / data.n() as f64,
        per_group_loss: group_loss
            .into_iter()
            .map(|(g, (sum, count))| (g, sum / count as f64))
            .collect(),
    })
}
