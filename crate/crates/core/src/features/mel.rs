use crate::error::{Error, Result};

/// HTK mel scale: `2595 * log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> Result<f64> {
    if !(hz >= 0.0) {
        return Err(Error::arg(format!("frequency must be non-negative, got {hz}")));
    }
    Ok(2595.0 * (1.0 + hz / 700.0).log10())
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, equally spaced on the mel axis with unit peak height.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_filters: usize,
    pub n_fft: usize,
    pub sample_rate: u32,
    pub fmin: f64,
    pub fmax: f64,
    /// `n_filters` rows of `n_fft / 2 + 1` weights.
    pub filters: Vec<Vec<f64>>,
    /// Peak frequency of each filter, in Hz.
    pub center_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, n_fft: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Result<Self> {
        if n_filters == 0 {
            return Err(Error::arg("filterbank needs at least one filter"));
        }
        if n_fft < 2 {
            return Err(Error::arg("n_fft must be at least 2"));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
            return Err(Error::arg(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin={fmin} fmax={fmax}"
            )));
        }

        let lo = hz_to_mel(fmin)?;
        let hi = hz_to_mel(fmax)?;
        let step = (hi - lo) / (n_filters + 1) as f64;
        let edges: Vec<f64> = (0..n_filters + 2).map(|i| lo + step * i as f64).collect();

        let n_bins = n_fft / 2 + 1;
        let bin_mels: Vec<f64> = (0..n_bins)
            .map(|k| hz_to_mel(k as f64 * sample_rate as f64 / n_fft as f64))
            .collect::<Result<_>>()?;

        let filters = (0..n_filters)
            .map(|i| {
                let (left, center, right) = (edges[i], edges[i + 1], edges[i + 2]);
                bin_mels
                    .iter()
                    .map(|&m| {
                        let rise = (m - left) / (center - left);
                        let fall = (right - m) / (right - center);
                        rise.min(fall).max(0.0)
                    })
                    .collect()
            })
            .collect();
        let center_hz = edges[1..=n_filters].iter().map(|&m| mel_to_hz(m)).collect();

        Ok(Self {
            n_filters,
            n_fft,
            sample_rate,
            fmin,
            fmax,
            filters,
            center_hz,
        })
    }

    /// 40 filters over `[0, sr/2]` for a 2048-point FFT.
    pub fn standard(sample_rate: u32) -> Result<Self> {
        Self::new(40, 2048, sample_rate, 0.0, sample_rate as f64 / 2.0)
    }

    /// Weighted sums of a power spectrum (`n_fft / 2 + 1` bins).
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|w| w.iter().zip(power).map(|(a, b)| a * b).sum())
            .collect()
    }
}
