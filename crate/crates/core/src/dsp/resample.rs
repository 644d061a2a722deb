use super::AudioClip;
use crate::error::{Error, Result};

/// Kaiser window shape parameter of the interpolation kernel.
pub const KAISER_BETA: f64 = 8.6;
/// Input samples contributing to each output sample.
pub const TAPS_PER_PHASE: usize = 64;

// Above this many phases the kernel is evaluated on the fly instead of tabulated.
const MAX_TABLE_PHASES: usize = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

struct Kernel {
    up: u64,
    cutoff: f64,
    half_width: f64,
    i0_beta: f64,
}

impl Kernel {
    /// Taps for fractional position `phase / up`, normalized to unit DC gain.
    fn taps(&self, phase: u64) -> [f64; TAPS_PER_PHASE] {
        let frac = phase as f64 / self.up as f64;
        let mut taps = [0.0; TAPS_PER_PHASE];
        let first = -(TAPS_PER_PHASE as i64 / 2 - 1);
        for (j, tap) in taps.iter_mut().enumerate() {
            let t = (first + j as i64) as f64 - frac;
            let x = t / self.half_width;
            let window = if x.abs() >= 1.0 {
                0.0
            } else {
                bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / self.i0_beta
            };
            *tap = self.cutoff * sinc(self.cutoff * t) * window;
        }
        let sum: f64 = taps.iter().sum();
        if sum != 0.0 {
            taps.iter_mut().for_each(|t| *t /= sum);
        }
        taps
    }
}

/// Converts `clip` to `target_rate` with a Kaiser-windowed sinc polyphase filter.
///
/// The rate ratio is reduced to `up / down`; output sample `n` sits at input
/// position `n * down / up`. Identity when the rates already match.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::arg("target sample rate must be positive"));
    }
    if clip.sample_rate == 0 {
        return Err(Error::arg("input sample rate must be positive"));
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }

    let g = gcd(clip.sample_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = clip.sample_rate as u64 / g;
    let kernel = Kernel {
        up,
        cutoff: (up as f64 / down as f64).min(1.0),
        half_width: (TAPS_PER_PHASE / 2) as f64,
        i0_beta: bessel_i0(KAISER_BETA),
    };
    let table: Option<Vec<[f64; TAPS_PER_PHASE]>> = (up as usize <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|p| kernel.taps(p)).collect());

    let input = &clip.samples;
    let n_in = input.len() as u64;
    let n_out = (n_in * up).div_ceil(down) as usize;
    let first = -(TAPS_PER_PHASE as i64 / 2 - 1);

    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let computed;
        let taps = match &table {
            Some(t) => &t[phase as usize],
            None => {
                computed = kernel.taps(phase);
                &computed
            }
        };
        let mut acc = 0.0;
        for (j, &w) in taps.iter().enumerate() {
            let idx = base + first + j as i64;
            if idx >= 0 && (idx as u64) < n_in {
                acc += w * input[idx as usize];
            }
        }
        out.push(acc);
    }

    Ok(AudioClip {
        samples: out,
        sample_rate: target_rate,
    })
}
