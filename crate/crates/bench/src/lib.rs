//! Deterministic inputs shared by the benchmarks.

use kftser_core::eval::{synth_noisy_trajectories, TrajectoryNoise};
use kftser_core::{AudioClip, ProbTrajectory, FEATURE_DIM};
use ndarray::Array2;

/// Harmonic tone with a slow tremolo, `secs` long at 22.05 kHz.
pub fn tone_clip(secs: f64) -> AudioClip {
    let sr = 22_050u32;
    let n = (secs * sr as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr as f64;
            let w = std::f64::consts::TAU * 220.0 * t;
            0.4 * (1.0 + 0.3 * (std::f64::consts::TAU * 3.0 * t).sin()) * (w.sin() + 0.5 * (2.0 * w).sin())
        })
        .collect();
    AudioClip::new(samples, sr).expect("finite samples")
}

/// `n` pseudo-random feature rows with labels cycling through the classes.
pub fn feature_rows(n: usize) -> (Array2<f64>, Vec<usize>) {
    let x = Array2::from_shape_fn((n, FEATURE_DIM), |(i, j)| ((i * 31 + j * 17) as f64 * 0.618).sin());
    let labels = (0..n).map(|i| i % 4).collect();
    (x, labels)
}

pub fn noisy_trajectory(frames: usize) -> ProbTrajectory {
    synth_noisy_trajectories(1, frames, TrajectoryNoise::default(), 7)
        .expect("valid noise")
        .trajectories
        .remove(0)
}
