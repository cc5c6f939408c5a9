//! Softmax regression trained with mini-batch SGD, plus the update algebra
//! shared by every aggregation protocol.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledDataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model shape {found:?} does not match {expected:?} (classes, features)")]
    Shape { expected: (usize, usize), found: (usize, usize) },
    #[error("cannot train or evaluate on an empty sample set")]
    EmptyBatch,
    #[error("cannot average an empty list")]
    EmptyList,
    #[error("model has non-finite parameters")]
    NonFinite,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
}

/// Weights (`C×F`, row per class) followed by the bias (`C`), stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    classes: usize,
    features: usize,
    values: Vec<f64>,
}

/// Parameter difference `new − reference`, same layout as [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDelta {
    classes: usize,
    features: usize,
    values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.02, local_epochs: 1, batch_size: 10, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        if self.local_epochs == 0 {
            return Err(ModelError::Config("local_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }
}

/// Accuracy and mean cross-entropy of a model on a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Zero-initialized model. The seed is accepted for API stability; zero
/// initialization does not consume randomness.
pub fn init_model(features: usize, classes: usize, _seed: u64) -> ModelParams {
    ModelParams::zeros(classes, features)
}

impl ModelParams {
    pub fn zeros(classes: usize, features: usize) -> Self {
        ModelParams { classes, features, values: vec![0.0; classes * (features + 1)] }
    }

    pub fn from_parts(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self, ModelError> {
        let classes = bias.len();
        let features = weights.first().map_or(0, Vec::len);
        if weights.len() != classes || weights.iter().any(|r| r.len() != features) {
            return Err(ModelError::Shape {
                expected: (classes, features),
                found: (weights.len(), weights.iter().map(Vec::len).max().unwrap_or(0)),
            });
        }
        let mut values: Vec<f64> = weights.into_iter().flatten().collect();
        values.extend(bias);
        let m = ModelParams { classes, features, values };
        m.check_finite()?;
        Ok(m)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.classes, self.features)
    }

    pub fn weights(&self) -> &[f64] {
        &self.values[..self.classes * self.features]
    }

    pub fn weight_row(&self, class: usize) -> &[f64] {
        &self.values[class * self.features..(class + 1) * self.features]
    }

    pub fn bias(&self) -> &[f64] {
        &self.values[self.classes * self.features..]
    }

    /// Flat parameter view: weights row-major, then bias.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_finite(&self) -> Result<(), ModelError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(ModelError::NonFinite)
        }
    }

    fn check_shape(&self, found: (usize, usize)) -> Result<(), ModelError> {
        if self.shape() == found {
            Ok(())
        } else {
            Err(ModelError::Shape { expected: self.shape(), found })
        }
    }

    /// `self + d`.
    pub fn apply(&self, d: &ModelDelta) -> Result<ModelParams, ModelError> {
        self.check_shape(d.shape())?;
        let values = self.values.iter().zip(&d.values).map(|(a, b)| a + b).collect();
        Ok(ModelParams { values, ..*self })
    }

    /// Class scores for one feature vector.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let bias = self.bias();
        (0..self.classes)
            .map(|c| dot(self.weight_row(c), x) + bias[c])
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Flat-text checkpoint: `C F`, then C weight rows, then the bias row.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!("{} {}\n", self.classes, self.features);
        let row = |out: &mut String, xs: &[f64]| {
            let line: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        };
        for c in 0..self.classes {
            row(&mut out, self.weight_row(c));
        }
        row(&mut out, self.bias());
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<ModelParams, ModelError> {
        let err = |line: usize, msg: &str| ModelError::Checkpoint { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| err(1, "header must be `C F`"))?;
        let [classes, features] = dims[..] else {
            return Err(err(1, "header must be `C F`"));
        };
        let mut rows = Vec::with_capacity(classes + 1);
        for (i, line) in lines {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| err(i + 1, "non-numeric value"))?;
            rows.push((i + 1, row));
        }
        if rows.len() != classes + 1 {
            return Err(err(0, &format!("expected {} rows, found {}", classes + 1, rows.len())));
        }
        let mut values = Vec::with_capacity(classes * (features + 1));
        for (k, (line, row)) in rows.into_iter().enumerate() {
            let want = if k < classes { features } else { classes };
            if row.len() != want {
                return Err(err(line, &format!("expected {want} values, found {}", row.len())));
            }
            values.extend(row);
        }
        let m = ModelParams { classes, features, values };
        m.check_finite()?;
        Ok(m)
    }
}

impl ModelDelta {
    pub fn zeros(classes: usize, features: usize) -> Self {
        ModelDelta { classes, features, values: vec![0.0; classes * (features + 1)] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.classes, self.features)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.values[..self.classes * self.features]
    }

    pub fn bias(&self) -> &[f64] {
        &self.values[self.classes * self.features..]
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `new − reference`.
pub fn delta(new: &ModelParams, reference: &ModelParams) -> Result<ModelDelta, ModelError> {
    reference.check_shape(new.shape())?;
    let values = new.values.iter().zip(&reference.values).map(|(a, b)| a - b).collect();
    Ok(ModelDelta { classes: new.classes, features: new.features, values })
}

/// `m + mean(deltas)`; deltas are summed in the order given.
pub fn apply_averaged_deltas<'a, I>(m: &ModelParams, deltas: I) -> Result<ModelParams, ModelError>
where
    I: IntoIterator<Item = &'a ModelDelta>,
{
    let mut sum = vec![0.0; m.values.len()];
    let mut count = 0usize;
    for d in deltas {
        m.check_shape(d.shape())?;
        for (s, v) in sum.iter_mut().zip(&d.values) {
            *s += v;
        }
        count += 1;
    }
    if count == 0 {
        return Err(ModelError::EmptyList);
    }
    let k = count as f64;
    let values = m.values.iter().zip(&sum).map(|(a, s)| a + s / k).collect();
    let out = ModelParams { values, ..*m };
    out.check_finite()?;
    Ok(out)
}

/// Elementwise mean of models.
pub fn average_models<'a, I>(models: I) -> Result<ModelParams, ModelError>
where
    I: IntoIterator<Item = &'a ModelParams>,
{
    let mut iter = models.into_iter();
    let first = iter.next().ok_or(ModelError::EmptyList)?;
    let mut sum = first.values.clone();
    let mut count = 1usize;
    for m in iter {
        first.check_shape(m.shape())?;
        for (s, v) in sum.iter_mut().zip(&m.values) {
            *s += v;
        }
        count += 1;
    }
    let k = count as f64;
    for s in &mut sum {
        *s /= k;
    }
    Ok(ModelParams { values: sum, ..*first })
}

/// Four running sums so the loop vectorizes; the order is fixed, so results
/// are still deterministic.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// In-place softmax with max subtraction; returns `ln Σ exp(z)`.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

fn check_dataset(m: &ModelParams, ds: &LabeledDataset) -> Result<(), ModelError> {
    m.check_shape((ds.class_count(), ds.feature_count()))
}

/// Adds the mean cross-entropy gradient over `batch` into `grad`.
fn accumulate_gradient(m: &ModelParams, ds: &LabeledDataset, batch: &[usize], grad: &mut [f64]) {
    let (c, f) = m.shape();
    let scale = 1.0 / batch.len() as f64;
    let mut p = vec![0.0; c];
    for &i in batch {
        let x = ds.features(i);
        for (k, pk) in p.iter_mut().enumerate() {
            *pk = dot(m.weight_row(k), x) + m.bias()[k];
        }
        softmax_in_place(&mut p);
        p[ds.label(i)] -= 1.0;
        for (k, &pk) in p.iter().enumerate() {
            let g = pk * scale;
            if g != 0.0 {
                for (w, &xj) in grad[k * f..(k + 1) * f].iter_mut().zip(x) {
                    *w += g * xj;
                }
            }
            grad[c * f + k] += g;
        }
    }
}

/// Exact gradient of the mean cross-entropy over `batch`.
pub fn gradient(m: &ModelParams, ds: &LabeledDataset, batch: &[usize]) -> Result<ModelDelta, ModelError> {
    check_dataset(m, ds)?;
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut g = ModelDelta::zeros(m.classes, m.features);
    accumulate_gradient(m, ds, batch, &mut g.values);
    Ok(g)
}

/// Mini-batch SGD on the samples `shard` of `ds`, starting from `m`.
///
/// The shard order is reshuffled every epoch from a generator seeded with
/// `cfg.seed`; the input model is not modified.
pub fn sgd_train(
    m: &ModelParams,
    ds: &LabeledDataset,
    shard: &[usize],
    cfg: &TrainConfig,
) -> Result<ModelParams, ModelError> {
    cfg.validate()?;
    check_dataset(m, ds)?;
    if shard.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut model = m.clone();
    if cfg.learning_rate == 0.0 {
        return Ok(model);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = shard.to_vec();
    let mut grad = vec![0.0; model.values.len()];
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            accumulate_gradient(&model, ds, batch, &mut grad);
            for (w, g) in model.values.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
        }
    }
    model.check_finite()?;
    Ok(model)
}

/// Accuracy (argmax, ties to the lowest class) and mean negative
/// log-likelihood.
pub fn evaluate(m: &ModelParams, ds: &LabeledDataset) -> Result<Evaluation, ModelError> {
    check_dataset(m, ds)?;
    if ds.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    let mut z = vec![0.0; m.classes];
    for i in 0..ds.len() {
        let x = ds.features(i);
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = dot(m.weight_row(k), x) + m.bias()[k];
        }
        let label = ds.label(i);
        if argmax(&z) == label {
            correct += 1;
        }
        let target = z[label];
        let lse = softmax_in_place(&mut z);
        loss += lse - target;
    }
    let n = ds.len() as f64;
    Ok(Evaluation { accuracy: correct as f64 / n, loss: loss / n })
}
