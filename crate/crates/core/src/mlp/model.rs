use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::emotion::{EmotionClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, ScalerStats, FEATURE_DIM};
use crate::posterior::{Posterior, ProbTrajectory};

/// Layer widths used by default: 41 inputs, hidden 256 and 128, 4 classes.
pub const DEFAULT_LAYER_DIMS: [usize; 4] = [FEATURE_DIM, 256, 128, NUM_CLASSES];

/// Dense layer `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Feed-forward classifier: ReLU hidden layers and a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Layer>,
    pub scaler: ScalerStats,
    pub class_order: Vec<String>,
}

/// Activations kept from a batch forward pass for backpropagation.
pub(crate) struct ForwardCache {
    /// Input followed by every hidden activation (post-ReLU).
    pub activations: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::arg(format!("invalid layer dims {dims:?}")));
    }
    Ok(())
}

impl MlpModel {
    /// All weights and biases zero; identity scaler.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        let layers = layer_dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            scaler: ScalerStats::identity(layer_dims[0]),
            class_order: default_class_order(*layer_dims.last().unwrap()),
        })
    }

    /// He-uniform weights (`±sqrt(6 / fan_in)`), zero biases.
    pub fn he_uniform(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let limit = (6.0 / layer.inputs() as f64).sqrt();
            layer.weights.mapv_inplace(|_| rng.random_range(-limit..limit));
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Logits for a batch of already-scaled rows.
    pub(crate) fn forward_cached(&self, x: ArrayView2<'_, f64>) -> ForwardCache {
        let mut activations = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations.last().unwrap().dot(&layer.weights.t());
            z += &layer.bias;
            if i == last {
                return ForwardCache { activations, logits: z };
            }
            z.mapv_inplace(|v| v.max(0.0));
            activations.push(z);
        }
        unreachable!("model has at least one layer")
    }

    pub fn logits_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::arg(format!(
                "expected {} input columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite input"));
        }
        Ok(self.forward_cached(x).logits)
    }

    /// Posterior for one already-scaled input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::arg(e.to_string()))?;
        let logits = self.logits_batch(view)?;
        Ok(softmax(logits.row(0).as_slice().expect("contiguous")))
    }

    /// Row-wise posteriors for already-scaled inputs.
    pub fn posteriors_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut logits = self.logits_batch(x)?;
        for mut row in logits.axis_iter_mut(Axis(0)) {
            let p = softmax(row.as_slice().expect("contiguous"));
            row.iter_mut().zip(p).for_each(|(d, s)| *d = s);
        }
        Ok(logits)
    }

    /// Scales raw feature rows with the stored scaler and classifies every frame.
    pub fn predict_frames(&self, features: &FeatureMatrix) -> Result<ProbTrajectory> {
        self.predict_rows(features.rows().view())
    }

    pub fn predict_rows(&self, raw: ArrayView2<'_, f64>) -> Result<ProbTrajectory> {
        if self.output_dim() != NUM_CLASSES {
            return Err(Error::arg(format!(
                "model has {} outputs, trajectories need {NUM_CLASSES}",
                self.output_dim()
            )));
        }
        if raw.ncols() != self.input_dim() {
            return Err(Error::arg(format!(
                "expected {} feature columns, got {}",
                self.input_dim(),
                raw.ncols()
            )));
        }
        if raw.nrows() == 0 {
            return Ok(ProbTrajectory::default());
        }
        let scaled = self.scaler.apply(raw)?;
        let post = self.posteriors_batch(scaled.view())?;
        let rows = post
            .outer_iter()
            .map(|r| {
                let mut p: Posterior = [0.0; NUM_CLASSES];
                p.iter_mut().zip(r.iter()).for_each(|(d, s)| *d = *s);
                p
            })
            .collect();
        Ok(ProbTrajectory::new(rows))
    }
}

fn default_class_order(outputs: usize) -> Vec<String> {
    if outputs == NUM_CLASSES {
        EmotionClass::canonical_names()
    } else {
        (0..outputs).map(|i| format!("class_{i}")).collect()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// `-ln p[label]` for a posterior already on the simplex.
pub fn cross_entropy(posterior: &[f64], label: usize) -> f64 {
    -posterior[label].ln()
}

/// Cross-entropy computed from logits via log-sum-exp.
pub fn cross_entropy_from_logits(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}
