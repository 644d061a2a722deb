use std::io::Write;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{log_sum_exp, Layer, MlpModel};
use crate::error::{Error, Result};
use crate::posterior::argmax;

/// Adam and mini-batch settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::arg("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::arg("Adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::arg("Adam epsilon must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Per-epoch training curve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub loss: Vec<f64>,
    pub frame_accuracy: Vec<f64>,
}

impl TrainTrace {
    pub fn epochs(&self) -> usize {
        self.loss.len()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,loss,frame_accuracy")?;
        for (i, (l, a)) in self.loss.iter().zip(&self.frame_accuracy).enumerate() {
            writeln!(w, "{},{l},{a}", i + 1)?;
        }
        Ok(())
    }
}

/// Gradients with the same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

/// Gradients of the mean cross-entropy over `(x, labels)` plus that mean loss.
///
/// `x` must already be scaled.
pub fn backward(model: &MlpModel, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(Gradients, f64)> {
    let n = x.nrows();
    if n == 0 || labels.len() != n {
        return Err(Error::arg(format!("batch has {n} rows and {} labels", labels.len())));
    }
    if x.ncols() != model.input_dim() {
        return Err(Error::arg("batch width does not match model input"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.output_dim()) {
        return Err(Error::arg(format!("label {bad} out of range")));
    }
    let (grads, loss, _) = backward_unchecked(model, x, labels);
    Ok((grads, loss))
}

/// Returns gradients, mean loss and the number of correct argmax predictions.
fn backward_unchecked(model: &MlpModel, x: ArrayView2<'_, f64>, labels: &[usize]) -> (Gradients, f64, usize) {
    let n = x.nrows() as f64;
    let cache = model.forward_cached(x);

    let mut loss = 0.0;
    let mut correct = 0;
    // d(mean loss)/d(logits) = (softmax - one_hot) / n
    let mut delta = cache.logits.clone();
    for (mut row, &label) in delta.axis_iter_mut(Axis(0)).zip(labels) {
        let logits = row.as_slice().expect("contiguous");
        let lse = log_sum_exp(logits);
        loss += lse - logits[label];
        if argmax(logits) == label {
            correct += 1;
        }
        row.mapv_inplace(|l| (l - lse).exp() / n);
        row[label] -= 1.0 / n;
    }

    let mut layers: Vec<Layer> = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate().rev() {
        let input = &cache.activations[i];
        let weights = delta.t().dot(input);
        let bias = delta.sum_axis(Axis(0));
        if i > 0 {
            let mut upstream = delta.dot(&layer.weights);
            // ReLU gate: activation is zero exactly where the unit was inactive
            upstream.zip_mut_with(input, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = upstream;
        }
        layers.push(Layer { weights, bias });
    }
    layers.reverse();
    (Gradients { layers }, loss / n, correct)
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        let zeros: Vec<Layer> = model
            .layers
            .iter()
            .map(|l| Layer::zeros(l.inputs(), l.outputs()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place. `step` is 1-based.
pub fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], step: u64, cfg: &TrainConfig) {
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if grads.layers.len() != model.layers.len() || state.m.len() != model.layers.len() {
        return Err(Error::arg("gradient/state layer count does not match the model"));
    }
    state.step += 1;
    let step = state.step;
    for (((layer, g), m), v) in model
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        if layer.weights.dim() != g.weights.dim() || layer.weights.dim() != m.weights.dim() {
            return Err(Error::arg("gradient/state shapes do not match the model"));
        }
        adam_update(
            layer.weights.as_slice_mut().expect("standard layout"),
            g.weights.as_slice().expect("standard layout"),
            m.weights.as_slice_mut().expect("standard layout"),
            v.weights.as_slice_mut().expect("standard layout"),
            step,
            cfg,
        );
        adam_update(
            layer.bias.as_slice_mut().expect("contiguous"),
            g.bias.as_slice().expect("contiguous"),
            m.bias.as_slice_mut().expect("contiguous"),
            v.bias.as_slice_mut().expect("contiguous"),
            step,
            cfg,
        );
    }
    Ok(())
}

/// Mini-batch Adam training on raw (unscaled) rows.
///
/// The model's scaler is applied to `raw` first; it should have been fitted on
/// exactly these rows. Shuffling is seeded from `cfg.seed`.
pub fn train(
    mut model: MlpModel,
    raw: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainTrace)> {
    cfg.validate()?;
    if raw.nrows() == 0 {
        return Err(Error::arg("empty training set"));
    }
    if labels.len() != raw.nrows() {
        return Err(Error::arg(format!("{} rows but {} labels", raw.nrows(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.output_dim()) {
        return Err(Error::arg(format!("label {bad} out of range")));
    }
    let x = model.scaler.apply(raw)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("non-finite training input"));
    }

    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model);
    let mut trace = TrainTrace::default();
    let mut batch_labels = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total_loss = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = x.select(Axis(0), chunk);
            batch_labels.clear();
            batch_labels.extend(chunk.iter().map(|&i| labels[i]));
            let (grads, loss, hits) = backward_unchecked(&model, batch.view(), &batch_labels);
            total_loss += loss * chunk.len() as f64;
            correct += hits;
            adam_step(&mut model, &grads, &mut state, cfg)?;
        }
        let mean_loss = total_loss / n as f64;
        if !mean_loss.is_finite() || !model.is_finite() {
            return Err(Error::Numeric(format!("training diverged at epoch {}", epoch + 1)));
        }
        log::debug!("epoch {}: loss {mean_loss:.5}, frame accuracy {:.4}", epoch + 1, correct as f64 / n as f64);
        trace.loss.push(mean_loss);
        trace.frame_accuracy.push(correct as f64 / n as f64);
    }
    Ok((model, trace))
}

/// Fraction of rows whose argmax posterior matches the label. Rows are raw.
pub fn frame_accuracy(model: &MlpModel, raw: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    if raw.nrows() == 0 || labels.len() != raw.nrows() {
        return Err(Error::arg("frame accuracy needs matching, non-empty rows and labels"));
    }
    let x = model.scaler.apply(raw)?;
    let logits = model.logits_batch(x.view())?;
    let hits = logits
        .outer_iter()
        .zip(labels)
        .filter(|(row, &l)| argmax(row.as_slice().expect("contiguous")) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}
