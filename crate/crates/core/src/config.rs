//! Flat JSON pipeline configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{FramingConfig, DEFAULT_FRAME_LENGTH, DEFAULT_HOP_LENGTH, DEFAULT_TRIM_DB, TARGET_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::eval::FusionRule;
use crate::features::{FeatureExtractor, MelFilterbank, DEFAULT_DELTA_WIDTH, DEFAULT_N_MELS, FEATURE_DIM, N_MFCC};
use crate::kalman::{KalmanConfig, DEFAULT_Q, DEFAULT_R};
use crate::mlp::TrainConfig;
use crate::emotion::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sample_rate: u32,
    pub trim_threshold_db: f64,
    pub frame_length: usize,
    pub hop_length: usize,
    pub center: bool,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub delta_width: usize,
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle: bool,
    pub kalman_q: f64,
    pub kalman_r: f64,
    pub renormalize: bool,
    pub joseph_form: bool,
    pub fixed_interval: bool,
    pub fusion: FusionRule,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            sample_rate: TARGET_SAMPLE_RATE,
            trim_threshold_db: DEFAULT_TRIM_DB,
            frame_length: DEFAULT_FRAME_LENGTH,
            hop_length: DEFAULT_HOP_LENGTH,
            center: false,
            n_mels: DEFAULT_N_MELS,
            n_mfcc: N_MFCC,
            delta_width: DEFAULT_DELTA_WIDTH,
            hidden_layers: vec![256, 128],
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            epochs: t.epochs,
            shuffle: t.shuffle,
            kalman_q: DEFAULT_Q,
            kalman_r: DEFAULT_R,
            renormalize: true,
            joseph_form: false,
            fixed_interval: false,
            fusion: FusionRule::Mean,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::arg("sample_rate must be positive"));
        }
        if !self.trim_threshold_db.is_finite() || self.trim_threshold_db <= 0.0 {
            return Err(Error::arg("trim_threshold_db must be positive"));
        }
        if self.n_mfcc != N_MFCC {
            return Err(Error::arg(format!("n_mfcc is fixed at {N_MFCC}, got {}", self.n_mfcc)));
        }
        if self.n_mels < N_MFCC {
            return Err(Error::arg(format!("n_mels must be at least {N_MFCC}")));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::arg("hidden layer widths must be positive"));
        }
        self.feature_extractor()?;
        self.train_config().validate()?;
        self.kalman_config()?;
        Ok(())
    }

    pub fn framing(&self) -> FramingConfig {
        FramingConfig {
            frame_length: self.frame_length,
            hop_length: self.hop_length,
            center: self.center,
        }
    }

    pub fn feature_extractor(&self) -> Result<FeatureExtractor> {
        let fb = MelFilterbank::new(
            self.n_mels,
            self.frame_length,
            self.sample_rate,
            0.0,
            self.sample_rate as f64 / 2.0,
        )?;
        FeatureExtractor::new(self.framing(), fb, self.delta_width)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![FEATURE_DIM];
        dims.extend_from_slice(&self.hidden_layers);
        dims.push(NUM_CLASSES);
        dims
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            shuffle: self.shuffle,
        }
    }

    pub fn kalman_config(&self) -> Result<KalmanConfig> {
        let mut k = KalmanConfig::emotion(self.kalman_q, self.kalman_r)?;
        k.renormalize = self.renormalize;
        k.joseph_form = self.joseph_form;
        k.fixed_interval = self.fixed_interval;
        Ok(k)
    }
}
