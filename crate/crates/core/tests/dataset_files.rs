use std::fs;
use std::path::Path;

use kftser_core::dataset::{build_manifest, generate_synthetic_dataset, split_manifest, SynthSpec};
use kftser_core::dsp::{write_wav_i16, AudioClip};
use kftser_core::features::RMSE_COLUMN;
use kftser_core::pipeline::extract_file;
use kftser_core::{EmotionClass, Error, Manifest, PipelineConfig};

fn touch_wav(path: &Path) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    write_wav_i16(path, &AudioClip::new(vec![0.1; 64], 22_050).unwrap()).unwrap();
}

#[test]
fn scan_keeps_only_the_four_emotion_speech_subset() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for name in [
        "Actor_01/03-01-05-01-01-01-01.wav",
        "Actor_01/03-01-02-02-01-02-01.wav",
        "Actor_02/nested/03-01-03-01-02-01-02.wav",
        "Actor_02/03-01-04-01-01-01-02.wav",
        "Actor_02/03-01-06-01-01-01-02.wav",
        "Actor_02/03-02-05-01-01-01-02.wav",
        "Actor_03/README.wav",
        "Actor_03/03-01-05-01-01-01-99.wav",
    ] {
        touch_wav(&root.join(name));
    }
    fs::write(root.join("notes.txt"), "x").unwrap();

    let m = build_manifest(root).unwrap();
    let emotions: Vec<EmotionClass> = m.records.iter().map(|r| r.emotion).collect();
    assert_eq!(
        emotions,
        vec![EmotionClass::Calm, EmotionClass::Angry, EmotionClass::Sad, EmotionClass::Happy]
    );
    let mut paths: Vec<_> = m.records.iter().map(|r| r.file_path.clone()).collect();
    let sorted = {
        let mut p = paths.clone();
        p.sort();
        p
    };
    assert_eq!(paths, sorted);
    paths.dedup();
    assert_eq!(paths.len(), 4);
}

#[test]
fn empty_and_missing_roots() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(build_manifest(dir.path()), Err(Error::EmptyDataset(_))));
    assert!(matches!(build_manifest(dir.path().join("absent")), Err(Error::Io { .. })));
}

#[test]
fn synthetic_dataset_layout_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        per_class: 5,
        ..SynthSpec::default()
    };
    let m = generate_synthetic_dataset(&spec, dir.path(), 3).unwrap();
    assert_eq!(m.records.len(), 20);
    let all: Vec<usize> = (0..20).collect();
    assert_eq!(m.class_counts(&all), [5, 5, 5, 5]);
    assert_eq!(m.test_indices.len(), 4);
    assert_eq!(m.split_seed, 3);
    let stored = Manifest::load(dir.path().join("manifest.json")).unwrap();
    assert_eq!(stored, m);
    let resplit = split_manifest(&build_manifest(dir.path()).unwrap(), 0.2, 3).unwrap();
    assert_eq!(resplit, m);
}

#[test]
fn synthetic_audio_is_bit_identical_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        per_class: 2,
        ..SynthSpec::default()
    };
    let ma = generate_synthetic_dataset(&spec, a.path(), 9).unwrap();
    let mb = generate_synthetic_dataset(&spec, b.path(), 9).unwrap();
    for (ra, rb) in ma.records.iter().zip(&mb.records) {
        assert_eq!(ra.file_path.strip_prefix(a.path()).unwrap(), rb.file_path.strip_prefix(b.path()).unwrap());
        assert_eq!(fs::read(&ra.file_path).unwrap(), fs::read(&rb.file_path).unwrap());
    }
}

#[test]
fn synthetic_angry_is_louder_than_calm() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        per_class: 4,
        ..SynthSpec::default()
    };
    let m = generate_synthetic_dataset(&spec, dir.path(), 1).unwrap();
    let cfg = PipelineConfig::default();
    let ex = cfg.feature_extractor().unwrap();
    let mean_rmse = |class: EmotionClass| {
        let values: Vec<f64> = m
            .records
            .iter()
            .filter(|r| r.emotion == class)
            .flat_map(|r| {
                let f = extract_file(&r.file_path, &ex, &cfg).unwrap();
                f.rows().column(RMSE_COLUMN).to_vec()
            })
            .collect();
        values.iter().sum::<f64>() / values.len() as f64
    };
    let angry = mean_rmse(EmotionClass::Angry);
    let calm = mean_rmse(EmotionClass::Calm);
    assert!(angry > calm, "angry {angry} vs calm {calm}");
}

#[test]
fn synthetic_spec_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let zero = SynthSpec {
        per_class: 0,
        ..SynthSpec::default()
    };
    assert!(generate_synthetic_dataset(&zero, dir.path(), 0).unwrap_err().is_usage());
    let short = SynthSpec {
        duration_secs: 0.4,
        ..SynthSpec::default()
    };
    assert!(generate_synthetic_dataset(&short, dir.path(), 0).unwrap_err().is_usage());
}
