//! End-to-end glue: audio files to features, features to a trained model and reports.

use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::config::PipelineConfig;
use crate::dataset::Manifest;
use crate::dsp::{decode_wav, resample, trim_silence_with, AudioClip, FramingConfig};
use crate::emotion::EmotionClass;
use crate::error::{Error, Result};
use crate::eval::{evaluate_pipeline, PipelineEvaluation};
use crate::features::{FeatureExtractor, FeatureMatrix, ScalerStats, FEATURE_DIM};
use crate::kalman::{filter_trajectory, SmoothedTrajectory};
use crate::mlp::{train, MlpModel, TrainTrace};

/// Decode, resample to the configured rate, trim leading/trailing silence.
pub fn load_audio(path: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<AudioClip> {
    let clip = decode_wav(path)?;
    preprocess(&clip, cfg)
}

pub fn preprocess(clip: &AudioClip, cfg: &PipelineConfig) -> Result<AudioClip> {
    let clip = resample(clip, cfg.sample_rate)?;
    let analysis = FramingConfig {
        center: false,
        ..cfg.framing()
    };
    trim_silence_with(&clip, cfg.trim_threshold_db, &analysis)
}

pub fn extract_file(
    path: impl AsRef<Path>,
    extractor: &FeatureExtractor,
    cfg: &PipelineConfig,
) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let clip = load_audio(path, cfg)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    extractor.extract(&clip, id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Binary,
    Csv,
}

impl FeatureFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FeatureFormat::Binary => "bin",
            FeatureFormat::Csv => "csv",
        }
    }
}

impl std::str::FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bin" | "binary" => Ok(FeatureFormat::Binary),
            "csv" => Ok(FeatureFormat::Csv),
            _ => Err(Error::arg(format!("unknown feature format `{s}` (bin|csv)"))),
        }
    }
}

/// `<dir>/<index:05>.<ext>`
pub fn feature_path(dir: impl AsRef<Path>, index: usize, format: FeatureFormat) -> PathBuf {
    dir.as_ref().join(format!("{index:05}.{}", format.extension()))
}

fn find_feature_file(dir: &Path, index: usize) -> Option<PathBuf> {
    [FeatureFormat::Binary, FeatureFormat::Csv]
        .into_iter()
        .map(|f| feature_path(dir, index, f))
        .find(|p| p.is_file())
}

/// Loads the stored feature matrices for `indices`, labelled from the manifest.
pub fn load_features(
    manifest: &Manifest,
    indices: &[usize],
    dir: impl AsRef<Path>,
) -> Result<Vec<(FeatureMatrix, EmotionClass)>> {
    let dir = dir.as_ref();
    let mut missing = Vec::new();
    let mut found = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= manifest.records.len() {
            return Err(Error::arg(format!("index {i} is not in the manifest")));
        }
        match find_feature_file(dir, i) {
            Some(p) => found.push((i, p)),
            None => missing.push(i),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Format(format!(
            "{} has no features for manifest indices {missing:?}",
            dir.display()
        )));
    }
    found
        .into_iter()
        .map(|(i, p)| Ok((FeatureMatrix::load(&p)?, manifest.records[i].emotion)))
        .collect()
}

/// Stacks every frame of every utterance, each frame labelled with its utterance's class.
pub fn stack_frames(data: &[(FeatureMatrix, EmotionClass)]) -> Result<(Array2<f64>, Vec<usize>)> {
    let views: Vec<ArrayView2<'_, f64>> = data.iter().map(|(m, _)| m.rows().view()).collect();
    let rows = if views.is_empty() {
        Array2::zeros((0, FEATURE_DIM))
    } else {
        concatenate(Axis(0), &views).map_err(|e| Error::Format(e.to_string()))?
    };
    let labels = data
        .iter()
        .flat_map(|(m, c)| std::iter::repeat_n(c.index(), m.num_frames()))
        .collect();
    Ok((rows, labels))
}

/// Fits the scaler on the training frames, initializes and trains the network.
pub fn train_model(
    train_set: &[(FeatureMatrix, EmotionClass)],
    cfg: &PipelineConfig,
) -> Result<(MlpModel, TrainTrace)> {
    let (raw, labels) = stack_frames(train_set)?;
    if raw.nrows() < 2 {
        return Err(Error::EmptyDataset("training split has fewer than two frames".into()));
    }
    let mut model = MlpModel::he_uniform(&cfg.layer_dims(), cfg.seed)?;
    model.scaler = ScalerStats::fit(raw.view())?;
    train(model, raw.view(), &labels, &cfg.train_config())
}

pub fn train_from_manifest(
    manifest: &Manifest,
    features_dir: impl AsRef<Path>,
    cfg: &PipelineConfig,
) -> Result<(MlpModel, TrainTrace)> {
    if manifest.train_indices.is_empty() {
        return Err(Error::EmptyDataset("manifest has no training split".into()));
    }
    let data = load_features(manifest, &manifest.train_indices, features_dir)?;
    train_model(&data, cfg)
}

/// Errors unless the model's outputs are the four emotions in canonical order.
pub fn check_class_order(model: &MlpModel) -> Result<()> {
    let expected = EmotionClass::canonical_names();
    if model.class_order != expected {
        return Err(Error::Checkpoint {
            section: "class_order".into(),
            reason: format!("model classes {:?}, expected {expected:?}", model.class_order),
        });
    }
    Ok(())
}

pub fn evaluate_indices(
    model: &MlpModel,
    manifest: &Manifest,
    indices: &[usize],
    features_dir: impl AsRef<Path>,
    cfg: &PipelineConfig,
) -> Result<PipelineEvaluation> {
    check_class_order(model)?;
    if indices.is_empty() {
        return Err(Error::EmptyDataset("evaluation split is empty".into()));
    }
    let data = load_features(manifest, indices, features_dir)?;
    evaluate_pipeline(model, &cfg.kalman_config()?, cfg.fusion, &data)
}

/// Raw and filtered posteriors for one audio file.
pub fn trajectory_for_file(
    path: impl AsRef<Path>,
    model: &MlpModel,
    cfg: &PipelineConfig,
) -> Result<SmoothedTrajectory> {
    check_class_order(model)?;
    let features = extract_file(path, &cfg.feature_extractor()?, cfg)?;
    let raw = model.predict_frames(&features)?;
    filter_trajectory(&raw, &cfg.kalman_config()?)
}
