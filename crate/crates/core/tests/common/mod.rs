//! Independent reference implementations and experiment drivers shared by the
//! integration tests and the acceptance harness.
#![allow(dead_code)]

use std::path::Path;

use kftser_core::dataset::{generate_synthetic_dataset, SynthSpec};
use kftser_core::eval::{evaluate_pipeline, evaluate_trajectories, synth_noisy_trajectories, PipelineEvaluation};
use kftser_core::mlp::{backward, cross_entropy_from_logits, frame_accuracy, MlpModel, TrainTrace};
use kftser_core::pipeline::{extract_file, stack_frames, train_model};
use kftser_core::{EmotionClass, FeatureMatrix, FusionRule, KalmanConfig, PipelineConfig, TrajectoryNoise};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for j in 0..p {
            for k in 0..m {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn mat_vec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect()).collect()
}

pub fn identity(n: usize) -> Mat {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut aug: Mat = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let d = aug[col][col];
        assert!(d != 0.0, "singular matrix");
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                let pivot_row = aug[col].clone();
                for (v, p) in aug[r].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub struct NaiveKalman {
    pub f: Mat,
    pub h: Mat,
    pub q: Mat,
    pub r: Mat,
    pub renormalize: bool,
}

impl NaiveKalman {
    pub fn from_config(cfg: &KalmanConfig) -> Self {
        let to = |m: &nalgebra::DMatrix<f64>| -> Mat {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
        };
        Self {
            f: to(&cfg.transition),
            h: to(&cfg.observation),
            q: to(&cfg.process_noise),
            r: to(&cfg.measurement_noise),
            renormalize: cfg.renormalize,
        }
    }

    /// Textbook predict/correct from a uniform state with unit covariance.
    pub fn run(&self, zs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.f.len();
        let mut x = vec![1.0 / n as f64; n];
        let mut p = identity(n);
        let mut out = Vec::with_capacity(zs.len());
        for z in zs {
            let x_pred = mat_vec(&self.f, &x);
            let p_pred = add(&mat_mul(&mat_mul(&self.f, &p), &transpose(&self.f)), &self.q);

            let ht = transpose(&self.h);
            let s = add(&mat_mul(&mat_mul(&self.h, &p_pred), &ht), &self.r);
            let k = mat_mul(&mat_mul(&p_pred, &ht), &inverse(&s));
            let hx = mat_vec(&self.h, &x_pred);
            let innov: Vec<f64> = z.iter().zip(&hx).map(|(a, b)| a - b).collect();
            let corr = mat_vec(&k, &innov);
            x = x_pred.iter().zip(&corr).map(|(a, b)| a + b).collect();
            let p_new = mat_mul(&sub(&identity(n), &mat_mul(&k, &self.h)), &p_pred);
            p = add(&p_new, &transpose(&p_new)).iter().map(|r| r.iter().map(|v| v * 0.5).collect()).collect();

            if self.renormalize {
                for v in x.iter_mut() {
                    *v = v.clamp(0.0, 1.0);
                }
                let sum: f64 = x.iter().sum();
                if sum > 0.0 {
                    x.iter_mut().for_each(|v| *v /= sum);
                } else {
                    x.iter_mut().for_each(|v| *v = 1.0 / n as f64);
                }
            }
            out.push(x.clone());
        }
        out
    }
}

/// Random symmetric positive definite matrix `A Aᵀ + floor·I`.
pub fn random_spd(n: usize, scale: f64, floor: f64, rng: &mut ChaCha8Rng) -> nalgebra::DMatrix<f64> {
    let a = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * scale);
    &a * a.transpose() + nalgebra::DMatrix::identity(n, n) * floor
}

pub fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random_range(1e-12f64..1.0).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-7)` over
/// every parameter, numeric gradients by central differences.
pub fn gradient_check(model: &MlpModel, x: &Array2<f64>, labels: &[usize], step: f64) -> f64 {
    let (grads, _) = backward(model, x.view(), labels).unwrap();
    let loss = |m: &MlpModel| -> f64 {
        let logits = m.logits_batch(x.view()).unwrap();
        logits
            .rows()
            .into_iter()
            .zip(labels)
            .map(|(row, &l)| cross_entropy_from_logits(row.as_slice().unwrap(), l))
            .sum::<f64>()
            / labels.len() as f64
    };
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for li in 0..model.layers.len() {
        let (rows, cols) = model.layers[li].weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = model.layers[li].weights[[i, j]];
                probe.layers[li].weights[[i, j]] = orig + step;
                let up = loss(&probe);
                probe.layers[li].weights[[i, j]] = orig - step;
                let down = loss(&probe);
                probe.layers[li].weights[[i, j]] = orig;
                worst = worst.max(rel_err(grads.layers[li].weights[[i, j]], (up - down) / (2.0 * step)));
            }
        }
        for i in 0..model.layers[li].bias.len() {
            let orig = model.layers[li].bias[i];
            probe.layers[li].bias[i] = orig + step;
            let up = loss(&probe);
            probe.layers[li].bias[i] = orig - step;
            let down = loss(&probe);
            probe.layers[li].bias[i] = orig;
            worst = worst.max(rel_err(grads.layers[li].bias[i], (up - down) / (2.0 * step)));
        }
    }
    worst
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

/// Outcome of training on the generated toy corpus.
pub struct SyntheticRun {
    pub train_frame_accuracy: f64,
    pub evaluation: PipelineEvaluation,
    pub trace: TrainTrace,
    pub model: MlpModel,
}

impl SyntheticRun {
    /// Canonical byte representation used for determinism checks.
    pub fn fingerprint(&self) -> String {
        let mut s = serde_json::to_string(&self.evaluation).unwrap();
        s.push_str(&serde_json::to_string(&self.trace).unwrap());
        s.push_str(&format!("{:?}", kftser_core::mlp::checkpoint_to_bytes(&self.model)));
        s
    }
}

pub fn synthetic_training_run(dir: &Path, per_class: usize, seed: u64, cfg: &PipelineConfig) -> SyntheticRun {
    let spec = SynthSpec {
        per_class,
        ..SynthSpec::default()
    };
    let manifest = generate_synthetic_dataset(&spec, dir, seed).unwrap();
    let extractor = cfg.feature_extractor().unwrap();
    let load = |idx: &[usize]| -> Vec<(FeatureMatrix, EmotionClass)> {
        idx.iter()
            .map(|&i| {
                let r = &manifest.records[i];
                (extract_file(&r.file_path, &extractor, cfg).unwrap(), r.emotion)
            })
            .collect()
    };
    let train_set = load(&manifest.train_indices);
    let test_set = load(&manifest.test_indices);
    let (model, trace) = train_model(&train_set, cfg).unwrap();
    let (raw, labels) = stack_frames(&train_set).unwrap();
    let train_frame_accuracy = frame_accuracy(&model, raw.view(), &labels).unwrap();
    let evaluation = evaluate_pipeline(&model, &cfg.kalman_config().unwrap(), cfg.fusion, &test_set).unwrap();
    SyntheticRun {
        train_frame_accuracy,
        evaluation,
        trace,
        model,
    }
}

/// Filter + fusion on noisy synthetic trajectories with the default filter.
pub fn stabilization_run(n: usize, frames: usize, flip_prob: f64, seed: u64) -> PipelineEvaluation {
    let noise = TrajectoryNoise {
        flip_prob,
        ..TrajectoryNoise::default()
    };
    let data = synth_noisy_trajectories(n, frames, noise, seed).unwrap();
    evaluate_trajectories(&data.trajectories, &data.labels, &KalmanConfig::default(), FusionRule::Mean).unwrap()
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
