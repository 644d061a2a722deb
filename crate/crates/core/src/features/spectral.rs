//! Per-frame spectral and time-domain measurements.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::mel::MelFilterbank;
use crate::error::{Error, Result};

pub const N_MFCC: usize = 13;
pub const DEFAULT_LOG_FLOOR: f64 = 1e-10;

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Orthonormal DCT-II.
pub fn dct2_ortho(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, &v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Orthonormal DCT-III, the inverse of [`dct2_ortho`].
pub fn dct3_ortho(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            x.iter()
                .enumerate()
                .map(|(k, &v)| {
                    let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                    scale * v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
                })
                .sum()
        })
        .collect()
}

/// Root-mean-square amplitude.
///
/// Samples are scaled by the peak magnitude before squaring, which keeps the
/// sum in range and makes a constant frame return exactly `|c|`.
pub fn compute_rmse(frame: &[f64]) -> f64 {
    let peak = frame.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return peak;
    }
    let ms = frame.iter().map(|x| (x / peak).powi(2)).sum::<f64>() / frame.len() as f64;
    peak * ms.sqrt()
}

/// Fraction of adjacent sample pairs that change sign (zero counts as positive).
pub fn compute_zcr(frame: &[f64]) -> f64 {
    if frame.len() < 2 {
        return 0.0;
    }
    let crossings = frame
        .windows(2)
        .filter(|p| (p[0] >= 0.0) != (p[1] >= 0.0))
        .count();
    crossings as f64 / (frame.len() - 1) as f64
}

/// Hann-windowed power spectrum → mel energies → log → DCT pipeline.
pub struct MfccExtractor {
    filterbank: MelFilterbank,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    // first N_MFCC rows of the orthonormal DCT-II matrix
    dct: Vec<Vec<f64>>,
    log_floor: f64,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor")
            .field("n_fft", &self.filterbank.n_fft)
            .field("n_filters", &self.filterbank.n_filters)
            .field("log_floor", &self.log_floor)
            .finish()
    }
}

impl MfccExtractor {
    pub fn new(filterbank: MelFilterbank, log_floor: f64) -> Result<Self> {
        if filterbank.n_filters < N_MFCC {
            return Err(Error::arg(format!(
                "need at least {N_MFCC} mel filters, got {}",
                filterbank.n_filters
            )));
        }
        if !(log_floor > 0.0) {
            return Err(Error::arg("log floor must be positive"));
        }
        let n = filterbank.n_filters;
        let dct = (0..N_MFCC)
            .map(|k| {
                let mut basis = vec![0.0; n];
                basis[k] = 1.0;
                // row k of DCT-II is column k of its inverse
                dct3_ortho(&basis)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(filterbank.n_fft);
        Ok(Self {
            window: hann_window(filterbank.n_fft),
            fft,
            dct,
            log_floor,
            filterbank,
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn log_floor(&self) -> f64 {
        self.log_floor
    }

    pub fn power_spectrum(&self, frame: &[f64]) -> Result<Vec<f64>> {
        let n_fft = self.filterbank.n_fft;
        if frame.len() != n_fft {
            return Err(Error::arg(format!(
                "frame has {} samples, filterbank expects {n_fft}",
                frame.len()
            )));
        }
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        Ok(buf[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect())
    }

    pub fn filterbank_energies(&self, frame: &[f64]) -> Result<Vec<f64>> {
        Ok(self.filterbank.apply(&self.power_spectrum(frame)?))
    }

    pub fn compute(&self, frame: &[f64]) -> Result<[f64; N_MFCC]> {
        let log_energy: Vec<f64> = self
            .filterbank_energies(frame)?
            .into_iter()
            .map(|e| (e + self.log_floor).ln())
            .collect();
        let mut out = [0.0; N_MFCC];
        for (o, row) in out.iter_mut().zip(&self.dct) {
            *o = row.iter().zip(&log_energy).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }
}

/// Regression deltas over a `T × D` sequence with edge replication.
///
/// `Δ_t = Σ_{n=1..N} n (c_{t+n} − c_{t−n}) / (2 Σ n²)`, `N = (width − 1) / 2`.
pub fn compute_delta(coeffs: &[Vec<f64>], width: usize) -> Result<Vec<Vec<f64>>> {
    if width < 3 || width % 2 == 0 {
        return Err(Error::arg(format!("delta width must be odd and >= 3, got {width}")));
    }
    if coeffs.is_empty() {
        return Err(Error::arg("delta of an empty sequence"));
    }
    let dim = coeffs[0].len();
    if coeffs.iter().any(|r| r.len() != dim) {
        return Err(Error::arg("ragged coefficient rows"));
    }
    let half = (width - 1) / 2;
    let denom = 2.0 * (1..=half).map(|n| (n * n) as f64).sum::<f64>();
    let last = coeffs.len() as isize - 1;
    let at = |t: isize| &coeffs[t.clamp(0, last) as usize];

    Ok((0..coeffs.len() as isize)
        .map(|t| {
            let mut row = vec![0.0; dim];
            for n in 1..=half as isize {
                let (ahead, behind) = (at(t + n), at(t - n));
                for d in 0..dim {
                    row[d] += n as f64 * (ahead[d] - behind[d]);
                }
            }
            row.iter_mut().for_each(|v| *v /= denom);
            row
        })
        .collect())
}
