//! RAVDESS-style dataset ingestion, stratified splitting and synthetic data.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::dsp::{write_wav_i16, AudioClip};
use crate::emotion::{EmotionClass, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Normal,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub file_path: PathBuf,
    pub emotion: EmotionClass,
    pub actor_id: u8,
    pub intensity: Intensity,
    pub statement: u8,
    pub repetition: u8,
}

/// Metadata decoded from a RAVDESS filename.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedName {
    pub emotion: EmotionClass,
    pub actor_id: u8,
    pub intensity: Intensity,
    pub statement: u8,
    pub repetition: u8,
}

const FIELD_NAMES: [&str; 7] = [
    "modality",
    "vocal_channel",
    "emotion",
    "intensity",
    "statement",
    "repetition",
    "actor",
];

/// Decodes `MM-VV-EE-II-SS-RR-AA[.wav]`.
///
/// Returns `Ok(None)` for well-formed names outside the four-emotion speech
/// subset (other emotions, song recordings).
pub fn parse_ravdess_filename(name: &str) -> Result<Option<ParsedName>> {
    let stem = name.strip_suffix(".wav").or_else(|| name.strip_suffix(".WAV")).unwrap_or(name);
    let parts: Vec<&str> = stem.split('-').collect();
    if parts.len() != FIELD_NAMES.len() {
        return Err(Error::Parse {
            field: "code_count",
            reason: format!("expected 7 dash-separated codes, found {}", parts.len()),
        });
    }
    let mut codes = [0u8; 7];
    for ((code, part), field) in codes.iter_mut().zip(&parts).zip(FIELD_NAMES) {
        if part.len() != 2 || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::Parse {
                field,
                reason: format!("`{part}` is not a two-digit code"),
            });
        }
        *code = part.parse().expect("two ascii digits");
    }
    let in_range = |i: usize, lo: u8, hi: u8| -> Result<u8> {
        let v = codes[i];
        if (lo..=hi).contains(&v) {
            Ok(v)
        } else {
            Err(Error::Parse {
                field: FIELD_NAMES[i],
                reason: format!("code {v:02} outside {lo:02}..={hi:02}"),
            })
        }
    };
    in_range(0, 1, 3)?;
    let channel = in_range(1, 1, 2)?;
    let emotion_code = in_range(2, 1, 8)?;
    let intensity = match in_range(3, 1, 2)? {
        1 => Intensity::Normal,
        _ => Intensity::Strong,
    };
    let statement = in_range(4, 1, 2)?;
    let repetition = in_range(5, 1, 2)?;
    let actor_id = in_range(6, 1, 24)?;

    if channel != 1 {
        return Ok(None);
    }
    Ok(EmotionClass::from_ravdess_code(emotion_code).map(|emotion| ParsedName {
        emotion,
        actor_id,
        intensity,
        statement,
        repetition,
    }))
}

pub fn ravdess_filename(p: &ParsedName) -> String {
    format!(
        "03-01-{:02}-{:02}-{:02}-{:02}-{:02}.wav",
        p.emotion.ravdess_code(),
        match p.intensity {
            Intensity::Normal => 1,
            Intensity::Strong => 2,
        },
        p.statement,
        p.repetition,
        p.actor_id
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub records: Vec<UtteranceRecord>,
    pub split_seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl Manifest {
    pub fn class_counts(&self, indices: &[usize]) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &i in indices {
            counts[self.records[i].emotion.index()] += 1;
        }
        counts
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.records.len();
        let mut seen = vec![false; n];
        for &i in self.train_indices.iter().chain(&self.test_indices) {
            if i >= n {
                return Err(Error::arg(format!("split index {i} out of range ({n} records)")));
            }
            if seen[i] {
                return Err(Error::arg(format!("record {i} appears in more than one split slot")));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// Recursively scans `root` for WAV files in the four-emotion subset, sorted by path.
pub fn build_manifest(root: impl AsRef<Path>) -> Result<Manifest> {
    let root = root.as_ref();
    let meta = std::fs::metadata(root).map_err(|e| Error::io(root, e))?;
    if !meta.is_dir() {
        return Err(Error::io(root, std::io::Error::other("not a directory")));
    }
    let mut paths = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf());
            Error::io(path, e.into())
        })?;
        let is_wav = entry
            .path()
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if entry.file_type().is_file() && is_wav {
            paths.push(entry.into_path());
        }
    }
    paths.sort();

    let mut records = Vec::new();
    for path in paths {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match parse_ravdess_filename(&name) {
            Ok(Some(p)) => records.push(UtteranceRecord {
                file_path: path,
                emotion: p.emotion,
                actor_id: p.actor_id,
                intensity: p.intensity,
                statement: p.statement,
                repetition: p.repetition,
            }),
            Ok(None) => {}
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no angry/calm/happy/sad speech files under {}",
            root.display()
        )));
    }
    Ok(Manifest {
        records,
        split_seed: 0,
        train_indices: Vec::new(),
        test_indices: Vec::new(),
    })
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Per-class test counts: rounded shares, then the largest classes nudged by
/// one until the total matches the rounded global target.
pub fn stratified_test_counts(class_sizes: &[usize], test_fraction: f64) -> Vec<usize> {
    let mut counts: Vec<usize> = class_sizes
        .iter()
        .map(|&n| round_half_up(test_fraction * n as f64).min(n))
        .collect();
    let total: usize = class_sizes.iter().sum();
    let target = round_half_up(test_fraction * total as f64);

    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| class_sizes[b].cmp(&class_sizes[a]).then(a.cmp(&b)));
    let mut assigned: usize = counts.iter().sum();
    for &c in &order {
        if assigned == target {
            break;
        }
        if assigned < target && counts[c] < class_sizes[c] {
            counts[c] += 1;
            assigned += 1;
        } else if assigned > target && counts[c] > 0 {
            counts[c] -= 1;
            assigned -= 1;
        }
    }
    counts
}

/// Stratified, seeded train/test split.
pub fn split_manifest(manifest: &Manifest, test_fraction: f64, seed: u64) -> Result<Manifest> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::arg(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, r) in manifest.records.iter().enumerate() {
        by_class[r.emotion.index()].push(i);
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::arg(format!(
            "class {} has no records; every class needs at least one",
            EmotionClass::ALL[c]
        )));
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let counts = stratified_test_counts(&sizes, test_fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (mut members, k) in by_class.into_iter().zip(counts) {
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Manifest {
        records: manifest.records.clone(),
        split_seed: seed,
        train_indices: train,
        test_indices: test,
    })
}

/// Size and format of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub per_class: usize,
    pub sample_rate: u32,
    pub duration_secs: f64,
    pub test_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            per_class: 10,
            sample_rate: 22_050,
            duration_secs: 1.0,
            test_fraction: 0.2,
        }
    }
}

/// Acoustic signature of one synthetic class.
#[derive(Debug, Clone, Copy)]
struct Voice {
    f0: f64,
    amplitude: f64,
    noise_std: f64,
}

fn voice(class: EmotionClass) -> Voice {
    match class {
        EmotionClass::Angry => Voice { f0: 300.0, amplitude: 0.6, noise_std: 0.08 },
        EmotionClass::Happy => Voice { f0: 600.0, amplitude: 0.55, noise_std: 0.01 },
        EmotionClass::Sad => Voice { f0: 150.0, amplitude: 0.12, noise_std: 0.01 },
        EmotionClass::Calm => Voice { f0: 220.0, amplitude: 0.1, noise_std: 0.002 },
    }
}

fn envelope(class: EmotionClass, t: f64, duration: f64) -> f64 {
    let u = t / duration;
    match class {
        // abrupt onset with a fast tremolo
        EmotionClass::Angry => (u * 40.0).min(1.0) * (1.0 + 0.25 * (2.0 * std::f64::consts::PI * 7.0 * t).sin()),
        // rise and fall
        EmotionClass::Happy => 0.3 + 0.7 * (std::f64::consts::PI * u).sin(),
        // slow decay
        EmotionClass::Sad => (-1.5 * u).exp(),
        // gentle attack then flat
        EmotionClass::Calm => (u * 5.0).min(1.0),
    }
}

/// Renders one utterance of `class`.
pub fn synthesize_utterance(class: EmotionClass, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<AudioClip> {
    let v = voice(class);
    let n = (spec.duration_secs * spec.sample_rate as f64).round() as usize;
    let f0 = v.f0 * (1.0 + rng.random_range(-0.05..0.05));
    let amp = v.amplitude * (1.0 + rng.random_range(-0.1..0.1));
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let noise = Normal::new(0.0, v.noise_std).map_err(|e| Error::arg(e.to_string()))?;
    let sr = spec.sample_rate as f64;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let w = std::f64::consts::TAU * f0 * t + phase;
            let tone = (w.sin() + 0.5 * (2.0 * w).sin() + 0.25 * (3.0 * w).sin()) / 1.75;
            let s = amp * envelope(class, t, spec.duration_secs) * tone + noise.sample(rng);
            s.clamp(-1.0, 1.0)
        })
        .collect();
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes `per_class` WAV files per emotion under `out_dir` (RAVDESS naming,
/// one folder per actor) plus `manifest.json`, and returns the split manifest.
pub fn generate_synthetic_dataset(spec: &SynthSpec, out_dir: impl AsRef<Path>, seed: u64) -> Result<Manifest> {
    if spec.per_class == 0 {
        return Err(Error::arg("per_class must be at least 1"));
    }
    if !(spec.duration_secs >= 0.5) {
        return Err(Error::arg(format!("duration must be at least 0.5 s, got {}", spec.duration_secs)));
    }
    if spec.sample_rate == 0 {
        return Err(Error::arg("sample rate must be positive"));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for class in EmotionClass::ALL {
        for i in 0..spec.per_class {
            let name = ParsedName {
                emotion: class,
                actor_id: (i % 24) as u8 + 1,
                repetition: ((i / 24) % 2) as u8 + 1,
                statement: ((i / 48) % 2) as u8 + 1,
                intensity: if (i / 96) % 2 == 0 { Intensity::Normal } else { Intensity::Strong },
            };
            let mut dir = out_dir.to_path_buf();
            if i >= 192 {
                dir.push(format!("batch_{:03}", i / 192));
            }
            dir.push(format!("Actor_{:02}", name.actor_id));
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let clip = synthesize_utterance(class, spec, &mut rng)?;
            write_wav_i16(dir.join(ravdess_filename(&name)), &clip)?;
        }
    }

    let manifest = split_manifest(&build_manifest(out_dir)?, spec.test_fraction, seed)?;
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}
