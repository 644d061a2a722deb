//! Speech emotion recognition with temporally stabilized posteriors.
//!
//! Audio is resampled to 22.05 kHz, silence-trimmed and framed; each frame
//! becomes a 41-dim vector (13 MFCC, their first and second deltas, RMS energy
//! and zero-crossing rate). A small MLP maps frames to posteriors over
//! angry/calm/happy/sad, and a Kalman filter smooths the posterior trajectory
//! before the utterance-level decision.

pub mod config;
pub mod dataset;
pub mod dsp;
pub mod emotion;
pub mod error;
pub mod eval;
pub mod features;
pub mod kalman;
pub mod mlp;
pub mod pipeline;
pub mod posterior;

pub use config::PipelineConfig;
pub use dataset::{
    build_manifest, generate_synthetic_dataset, parse_ravdess_filename, split_manifest,
    Intensity, Manifest, SynthSpec, UtteranceRecord,
};
pub use dsp::{AudioClip, FramingConfig};
pub use emotion::{EmotionClass, NUM_CLASSES};
pub use error::{Error, Result};
pub use eval::{
    ConfusionMatrix, EvalReport, FusionRule, GainReport, PipelineEvaluation, TrajectoryNoise,
};
pub use features::{FeatureExtractor, FeatureMatrix, MelFilterbank, ScalerStats, FEATURE_DIM};
pub use kalman::{KalmanConfig, KalmanState, SmoothedTrajectory, TuneResult};
pub use mlp::{MlpModel, TrainConfig, TrainTrace};
pub use posterior::{Posterior, ProbTrajectory};
