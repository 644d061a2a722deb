//! The 41-column frame feature vector and its z-score scaler.

mod matrix;
mod mel;
mod scaler;
mod spectral;

pub use matrix::{feature_names, FeatureMatrix, FEATURE_DIM, RMSE_COLUMN, ZCR_COLUMN};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use scaler::{ScalerStats, SCALER_EPSILON};
pub use spectral::{
    compute_delta, compute_rmse, compute_zcr, dct2_ortho, dct3_ortho, hann_window,
    MfccExtractor, DEFAULT_LOG_FLOOR, N_MFCC,
};

use ndarray::Array2;

use crate::dsp::{frame_signal, AudioClip, FramingConfig};
use crate::error::{Error, Result};

pub const DEFAULT_DELTA_WIDTH: usize = 9;
pub const DEFAULT_N_MELS: usize = 40;

/// Turns a preprocessed clip into a [`FeatureMatrix`].
#[derive(Debug)]
pub struct FeatureExtractor {
    framing: FramingConfig,
    mfcc: MfccExtractor,
    delta_width: usize,
}

impl FeatureExtractor {
    pub fn new(framing: FramingConfig, filterbank: MelFilterbank, delta_width: usize) -> Result<Self> {
        framing.validate()?;
        if filterbank.n_fft != framing.frame_length {
            return Err(Error::arg(format!(
                "filterbank n_fft {} differs from frame length {}",
                filterbank.n_fft, framing.frame_length
            )));
        }
        if delta_width < 3 || delta_width % 2 == 0 {
            return Err(Error::arg(format!("delta width must be odd and >= 3, got {delta_width}")));
        }
        Ok(Self {
            framing,
            mfcc: MfccExtractor::new(filterbank, DEFAULT_LOG_FLOOR)?,
            delta_width,
        })
    }

    /// Default framing (2048/512), 40 mel filters over `[0, sr/2]`, delta width 9.
    pub fn standard(sample_rate: u32) -> Result<Self> {
        Self::new(
            FramingConfig::default(),
            MelFilterbank::standard(sample_rate)?,
            DEFAULT_DELTA_WIDTH,
        )
    }

    pub fn framing(&self) -> &FramingConfig {
        &self.framing
    }

    pub fn mfcc(&self) -> &MfccExtractor {
        &self.mfcc
    }

    pub fn extract(&self, clip: &AudioClip, utterance_id: impl Into<String>) -> Result<FeatureMatrix> {
        let sr = self.mfcc.filterbank().sample_rate;
        if clip.sample_rate != sr {
            return Err(Error::arg(format!(
                "clip is at {} Hz, extractor expects {sr} Hz",
                clip.sample_rate
            )));
        }
        let frames = frame_signal(&clip.samples, &self.framing)?;
        let mfcc: Vec<Vec<f64>> = frames
            .iter()
            .map(|f| self.mfcc.compute(f).map(|c| c.to_vec()))
            .collect::<Result<_>>()?;
        let delta = compute_delta(&mfcc, self.delta_width)?;
        let delta2 = compute_delta(&delta, self.delta_width)?;

        let mut rows = Array2::zeros((frames.len(), FEATURE_DIM));
        for (t, mut row) in rows.outer_iter_mut().enumerate() {
            let parts = mfcc[t].iter().chain(&delta[t]).chain(&delta2[t]);
            for (dst, src) in row.iter_mut().zip(parts) {
                *dst = *src;
            }
            row[RMSE_COLUMN] = compute_rmse(&frames[t]);
            row[ZCR_COLUMN] = compute_zcr(&frames[t]);
        }
        FeatureMatrix::new(utterance_id, rows)
    }
}
