//! Audio front end: decoding, rate conversion, silence trimming and framing.

mod resample;
mod wav;

pub use resample::{resample, KAISER_BETA, TAPS_PER_PHASE};
pub use wav::{decode_wav, decode_wav_bytes, write_wav_i16};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate every clip is converted to before analysis.
pub const TARGET_SAMPLE_RATE: u32 = 22_050;
pub const DEFAULT_FRAME_LENGTH: usize = 2048;
pub const DEFAULT_HOP_LENGTH: usize = 512;
pub const DEFAULT_TRIM_DB: f64 = 20.0;

/// Mono audio buffer with amplitudes nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::arg("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::arg("audio clip has no samples"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::arg(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Frame and hop sizes, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramingConfig {
    pub frame_length: usize,
    pub hop_length: usize,
    /// Pad `frame_length / 2` zeros on both ends before framing.
    #[serde(default)]
    pub center: bool,
}

impl Default for FramingConfig {
    fn default() -> Self {
        Self {
            frame_length: DEFAULT_FRAME_LENGTH,
            hop_length: DEFAULT_HOP_LENGTH,
            center: false,
        }
    }
}

impl FramingConfig {
    pub fn new(frame_length: usize, hop_length: usize) -> Result<Self> {
        let cfg = Self {
            frame_length,
            hop_length,
            center: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_length == 0 || self.hop_length > self.frame_length {
            return Err(Error::arg(format!(
                "framing requires 0 < hop ({}) <= frame ({})",
                self.hop_length, self.frame_length
            )));
        }
        Ok(())
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        let len = if self.center {
            len + 2 * (self.frame_length / 2)
        } else {
            len
        };
        len.div_ceil(self.hop_length)
    }
}

/// Splits `samples` into overlapping frames.
///
/// Frame `t` covers `[t * hop, t * hop + frame_length)`; anything past the end
/// of the signal is zero. One frame starts at every multiple of `hop` below
/// the signal length.
pub fn frame_signal(samples: &[f64], cfg: &FramingConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::arg("cannot frame an empty signal"));
    }
    let padded;
    let signal = if cfg.center {
        let pad = cfg.frame_length / 2;
        let mut v = vec![0.0; samples.len() + 2 * pad];
        v[pad..pad + samples.len()].copy_from_slice(samples);
        padded = v;
        &padded[..]
    } else {
        samples
    };

    let count = signal.len().div_ceil(cfg.hop_length);
    let frames = (0..count)
        .map(|t| {
            let start = t * cfg.hop_length;
            let end = (start + cfg.frame_length).min(signal.len());
            let mut frame = vec![0.0; cfg.frame_length];
            frame[..end - start].copy_from_slice(&signal[start..end]);
            frame
        })
        .collect();
    Ok(frames)
}

fn frame_rms(samples: &[f64], cfg: &FramingConfig) -> Vec<f64> {
    let count = samples.len().div_ceil(cfg.hop_length);
    (0..count)
        .map(|t| {
            let start = t * cfg.hop_length;
            let end = (start + cfg.frame_length).min(samples.len());
            let energy: f64 = samples[start..end].iter().map(|x| x * x).sum();
            (energy / cfg.frame_length as f64).sqrt()
        })
        .collect()
}

/// Trims leading and trailing audio whose frame RMS sits more than
/// `threshold_db` below the loudest frame, using the default analysis framing.
pub fn trim_silence(clip: &AudioClip, threshold_db: f64) -> Result<AudioClip> {
    trim_silence_with(clip, threshold_db, &FramingConfig::default())
}

pub fn trim_silence_with(
    clip: &AudioClip,
    threshold_db: f64,
    analysis: &FramingConfig,
) -> Result<AudioClip> {
    if !(threshold_db > 0.0) || !threshold_db.is_finite() {
        return Err(Error::arg(format!(
            "trim threshold must be a positive number of dB, got {threshold_db}"
        )));
    }
    analysis.validate()?;
    let rms = frame_rms(&clip.samples, analysis);
    let (loudest, max_rms) = rms
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        });

    let (first, last) = if max_rms > 0.0 {
        let floor = max_rms * 10f64.powf(-threshold_db / 20.0);
        let loud = |v: &f64| *v >= floor;
        // the loudest frame always qualifies, so both searches succeed
        let first = rms.iter().position(loud).unwrap_or(loudest);
        let last = rms.iter().rposition(loud).unwrap_or(loudest);
        (first, last)
    } else {
        (loudest, loudest)
    };

    let start = first * analysis.hop_length;
    let end = (last * analysis.hop_length + analysis.frame_length).min(clip.len());
    Ok(AudioClip {
        samples: clip.samples[start..end].to_vec(),
        sample_rate: clip.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, amp: f64, n: usize, sr: u32) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect()
    }

    #[test]
    fn frame_count_examples() {
        let cfg = FramingConfig::new(2048, 512).unwrap();
        assert_eq!(frame_signal(&vec![0.1; 4096], &cfg).unwrap().len(), 8);

        let exact = FramingConfig::new(2048, 2048).unwrap();
        let frames = frame_signal(&vec![0.3; 2048], &exact).unwrap();
        assert_eq!(frames.len(), 1);
        assert!(frames[0].iter().all(|&x| x == 0.3));
    }

    #[test]
    fn frame_count_matches_enumeration_for_small_cases() {
        for frame in 1..=16 {
            for hop in 1..=frame {
                let cfg = FramingConfig::new(frame, hop).unwrap();
                for len in 1..=64 {
                    let signal: Vec<f64> = (0..len).map(|i| i as f64 + 1.0).collect();
                    let frames = frame_signal(&signal, &cfg).unwrap();
                    let starts = (0..).take_while(|t| t * hop < len).count();
                    assert_eq!(frames.len(), starts);
                    assert_eq!(cfg.frame_count(len), starts);
                    for (t, f) in frames.iter().enumerate() {
                        for (j, &v) in f.iter().enumerate() {
                            let idx = t * hop + j;
                            let expect = if idx < len { signal[idx] } else { 0.0 };
                            assert_eq!(v, expect);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn constant_signal_frames_identical_except_tail() {
        let cfg = FramingConfig::new(256, 64).unwrap();
        let frames = frame_signal(&vec![0.7; 1024], &cfg).unwrap();
        let full: Vec<_> = frames.iter().filter(|f| f.iter().all(|&x| x == 0.7)).collect();
        // frames starting at or before 1024 - 256 are fully inside the signal
        assert_eq!(full.len(), (1024 - 256) / 64 + 1);
        for f in &frames[full.len()..] {
            assert_eq!(*f.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn centered_framing_adds_half_frame_padding() {
        let cfg = FramingConfig {
            frame_length: 8,
            hop_length: 4,
            center: true,
        };
        let frames = frame_signal(&[1.0; 8], &cfg).unwrap();
        assert_eq!(frames.len(), cfg.frame_count(8));
        assert_eq!(frames[0], vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn invalid_framing_is_rejected() {
        assert!(FramingConfig::new(512, 0).is_err());
        assert!(FramingConfig::new(512, 1024).is_err());
    }

    #[test]
    fn trim_removes_zero_padding() {
        let sr = 22_050;
        let pad = sr as usize / 2;
        let body = tone(440.0, 0.5, sr as usize, sr);
        let mut samples = vec![0.0; pad];
        samples.extend_from_slice(&body);
        samples.extend(vec![0.0; pad]);
        let clip = AudioClip::new(samples, sr).unwrap();
        let trimmed = trim_silence(&clip, 20.0).unwrap();
        assert!(trimmed.len() >= body.len());
        assert!(trimmed.len() <= body.len() + 2 * DEFAULT_FRAME_LENGTH);
    }

    #[test]
    fn constant_amplitude_clip_is_unchanged() {
        let clip = AudioClip::new(vec![0.25; 10_000], 22_050).unwrap();
        assert_eq!(trim_silence(&clip, 20.0).unwrap(), clip);
    }

    #[test]
    fn trim_threshold_boundary() {
        let sr = 22_050;
        let body = tone(300.0, 1.0, 22_050, sr);
        let pad_len = 11_025;
        for (pad_amp, removed) in [(0.05, true), (0.2, false)] {
            let mut samples = tone(300.0, pad_amp, pad_len, sr);
            samples.extend_from_slice(&body);
            let clip = AudioClip::new(samples, sr).unwrap();
            let trimmed = trim_silence(&clip, 20.0).unwrap();
            if removed {
                assert!(trimmed.len() <= body.len() + DEFAULT_FRAME_LENGTH);
            } else {
                assert_eq!(trimmed.len(), clip.len());
            }
        }
    }

    #[test]
    fn trim_of_pure_silence_keeps_one_frame() {
        let clip = AudioClip::new(vec![0.0; 5000], 22_050).unwrap();
        let trimmed = trim_silence(&clip, 20.0).unwrap();
        assert_eq!(trimmed.len(), DEFAULT_FRAME_LENGTH);
        let short = AudioClip::new(vec![0.0; 100], 22_050).unwrap();
        assert_eq!(trim_silence(&short, 20.0).unwrap().len(), 100);
    }

    #[test]
    fn trim_rejects_non_positive_threshold() {
        let clip = AudioClip::new(vec![0.1; 100], 22_050).unwrap();
        assert!(trim_silence(&clip, 0.0).is_err());
        assert!(trim_silence(&clip, -3.0).is_err());
    }

    #[test]
    fn clip_rejects_non_finite_samples() {
        assert!(AudioClip::new(vec![0.0, f64::NAN], 8000).is_err());
        assert!(AudioClip::new(vec![], 8000).is_err());
    }
}
