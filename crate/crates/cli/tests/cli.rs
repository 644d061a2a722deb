use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kftser_core::dsp::{write_wav_i16, AudioClip};
use kftser_core::mlp::{load_checkpoint, save_checkpoint};
use kftser_core::{EvalReport, GainReport, Manifest, TuneResult};
use rand::{Rng, SeedableRng};

fn kftser(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kftser"))
        .args(args)
        .env("KFTSER_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = kftser(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic corpus plus extracted features.
struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    manifest: PathBuf,
    features: PathBuf,
}

fn workspace(per_class: &str) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data");
    let manifest = data.join("manifest.json");
    let features = root.join("features");
    ok(&["synth", "--out", s(&data), "--per-class", per_class, "--seed", "3"]);
    ok(&["extract", "--manifest", s(&manifest), "--out", s(&features)]);
    Workspace {
        _dir: dir,
        root,
        data,
        manifest,
        features,
    }
}

fn train(ws: &Workspace, name: &str, extra: &[&str]) -> PathBuf {
    let ckpt = ws.root.join(name);
    let mut args = vec!["train", "--manifest", s(&ws.manifest), "--features", s(&ws.features), "--out", s(&ckpt)];
    args.extend_from_slice(extra);
    ok(&args);
    ckpt
}

#[test]
fn synth_manifest_and_extract() {
    let ws = workspace("5");
    let m = Manifest::load(&ws.manifest).unwrap();
    assert_eq!(m.records.len(), 20);

    let out = ws.root.join("m.json");
    let text = ok(&["manifest", "--root", s(&ws.data), "--out", s(&out), "--seed", "3"]);
    assert_eq!(text.trim(), "20 records (16/4)");
    let first = fs::read(&out).unwrap();
    ok(&["manifest", "--root", s(&ws.data), "--out", s(&out), "--seed", "3"]);
    assert_eq!(fs::read(&out).unwrap(), first);

    let files: Vec<_> = fs::read_dir(&ws.features).unwrap().collect();
    assert_eq!(files.len(), 20);
    let before = fs::read(ws.features.join("00007.bin")).unwrap();
    ok(&["extract", "--manifest", s(&ws.manifest), "--out", s(&ws.features)]);
    assert_eq!(fs::read(ws.features.join("00007.bin")).unwrap(), before);

    let csv_dir = ws.root.join("csv");
    let text = ok(&["extract", "--manifest", s(&ws.manifest), "--out", s(&csv_dir), "--format", "csv"]);
    assert!(text.contains("angry"), "{text}");
    let body = fs::read_to_string(csv_dir.join("00000.csv")).unwrap();
    for line in body.lines() {
        assert_eq!(line.split(',').count(), 41);
    }
}

#[test]
fn one_second_clips_give_44_frames() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("audio");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for (i, code) in ["05", "02", "03", "04"].iter().enumerate() {
        let samples: Vec<f64> = (0..22_050).map(|_| rng.random_range(-0.5..0.5)).collect();
        let path = data.join(format!("03-01-{code}-01-01-01-{:02}.wav", i + 1));
        fs::create_dir_all(&data).unwrap();
        write_wav_i16(&path, &AudioClip::new(samples, 22_050).unwrap()).unwrap();
    }
    let manifest = dir.path().join("m.json");
    let features = dir.path().join("f");
    ok(&["manifest", "--root", s(&data), "--out", s(&manifest), "--test-fraction", "0.25"]);
    ok(&["extract", "--manifest", s(&manifest), "--out", s(&features), "--format", "csv"]);
    for i in 0..4 {
        let body = fs::read_to_string(features.join(format!("{i:05}.csv"))).unwrap();
        assert_eq!(body.lines().count(), 1 + 44);
    }
}

#[test]
fn extract_failure_names_the_path_and_cleans_up() {
    let ws = workspace("2");
    let m = Manifest::load(&ws.manifest).unwrap();
    let victim = m.records[3].file_path.clone();
    fs::remove_file(&victim).unwrap();
    let out_dir = ws.root.join("partial");
    let out = kftser(&["extract", "--manifest", s(&ws.manifest), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(victim.file_name().unwrap().to_str().unwrap()), "{err}");
    assert_eq!(fs::read_dir(&out_dir).unwrap().count(), 0);
}

#[test]
fn train_evaluate_trajectory_tune() {
    let ws = workspace("5");
    let ckpt = train(&ws, "model.ckpt", &[]);
    let again = train(&ws, "model2.ckpt", &[]);
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(&again).unwrap());
    let trace = fs::read_to_string(ws.root.join("model.ckpt.trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "epoch,loss,frame_accuracy");
    assert_eq!(trace.lines().count(), 101);

    let reports = ws.root.join("reports");
    let table = ok(&[
        "evaluate",
        "--manifest",
        s(&ws.manifest),
        "--features",
        s(&ws.features),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&reports),
    ]);
    let report: EvalReport = serde_json::from_str(&fs::read_to_string(reports.join("report.json")).unwrap()).unwrap();
    let printed = table
        .lines()
        .find(|l| l.starts_with("Accuracy"))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap();
    assert_eq!(printed, format!("{:.2}", report.accuracy));
    assert_eq!(report.accuracy, 1.0);
    let gain: GainReport = serde_json::from_str(&fs::read_to_string(reports.join("gain.json")).unwrap()).unwrap();
    assert_eq!(gain.absolute_gain, gain.utterance_level_accuracy - gain.frame_level_accuracy);
    let confusion = fs::read_to_string(reports.join("confusion.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 5);

    let m = Manifest::load(&ws.manifest).unwrap();
    let audio = &m.records[m.test_indices[0]].file_path;
    let csv = ws.root.join("traj.csv");
    ok(&["trajectory", "--audio", s(audio), "--checkpoint", s(&ckpt), "--out", s(&csv)]);
    let body = fs::read_to_string(&csv).unwrap();
    let mut lines = body.lines();
    assert_eq!(
        lines.next().unwrap(),
        "frame_index,z_angry,z_calm,z_happy,z_sad,x_angry,x_calm,x_happy,x_sad"
    );
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(!rows.is_empty());
    for (t, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 9);
        assert_eq!(row[0], t as f64);
        assert!((row[5..].iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    let tune_out = ws.root.join("tune.json");
    let base = [
        "tune",
        "--manifest",
        s(&ws.manifest),
        "--features",
        s(&ws.features),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&tune_out),
    ];
    let mut single = base.to_vec();
    single.extend(["--grid", "0.5"]);
    ok(&single);
    let result: TuneResult = serde_json::from_str(&fs::read_to_string(&tune_out).unwrap()).unwrap();
    assert_eq!(result.best_ratio, 0.5);

    let mut empty = base.to_vec();
    empty.extend(["--grid", ""]);
    assert_eq!(kftser(&empty).status.code(), Some(2));

    let mut tied = base.to_vec();
    tied.extend(["--grid", "1e-2,1e-3"]);
    ok(&tied);
    let result: TuneResult = serde_json::from_str(&fs::read_to_string(&tune_out).unwrap()).unwrap();
    if result.accuracies[0] == result.accuracies[1] {
        assert_eq!(result.best_ratio, 1e-3);
    }
}

#[test]
fn zero_epochs_and_missing_features() {
    let ws = workspace("2");
    let ckpt = train(&ws, "init.ckpt", &["--epochs", "0"]);
    let model = load_checkpoint(&ckpt).unwrap();
    assert_eq!(model.layer_dims, vec![41, 256, 128, 4]);
    let trace = fs::read_to_string(ws.root.join("init.ckpt.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1);

    let m = Manifest::load(&ws.manifest).unwrap();
    let gone = m.train_indices[1];
    fs::remove_file(ws.features.join(format!("{gone:05}.bin"))).unwrap();
    let out = kftser(&[
        "train",
        "--manifest",
        s(&ws.manifest),
        "--features",
        s(&ws.features),
        "--out",
        s(&ws.root.join("x.ckpt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&format!("[{gone}]")));
}

#[test]
fn class_order_mismatch_is_rejected() {
    let ws = workspace("2");
    let ckpt = train(&ws, "m.ckpt", &["--epochs", "1"]);
    let mut model = load_checkpoint(&ckpt).unwrap();
    model.class_order.swap(1, 2);
    save_checkpoint(&model, &ckpt).unwrap();
    let out = kftser(&[
        "evaluate",
        "--manifest",
        s(&ws.manifest),
        "--features",
        s(&ws.features),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&ws.root.join("r")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("class_order"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let out = kftser(&["manifest", "--root", s(&empty), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty dataset"));

    let out = kftser(&["manifest", "--root", s(&empty), "--out", "m.json", "--test-fraction", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(kftser(&["manifest"]).status.code(), Some(2));
    assert_eq!(kftser(&["no-such-command"]).status.code(), Some(2));

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"epochz": 3}"#).unwrap();
    let out = kftser(&["--config", s(&cfg), "synth", "--out", s(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = kftser(&["synth", "--out", s(&dir.path().join("d")), "--per-class", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 11}"#).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["--config", s(&cfg), "synth", "--out", s(&a), "--per-class", "1"]);
    ok(&["synth", "--out", s(&b), "--per-class", "1", "--seed", "11"]);
    let ma = Manifest::load(a.join("manifest.json")).unwrap();
    let mb = Manifest::load(b.join("manifest.json")).unwrap();
    assert_eq!(ma.split_seed, 11);
    assert_eq!(ma.split_seed, mb.split_seed);
    for (ra, rb) in ma.records.iter().zip(&mb.records) {
        assert_eq!(fs::read(&ra.file_path).unwrap(), fs::read(&rb.file_path).unwrap());
    }
    let c = dir.path().join("c");
    ok(&["--config", s(&cfg), "synth", "--out", s(&c), "--per-class", "1", "--seed", "12"]);
    assert_eq!(Manifest::load(c.join("manifest.json")).unwrap().split_seed, 12);
}
