//! Utterance fusion, classification metrics and the frame-vs-utterance gain.

use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::emotion::{EmotionClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::kalman::{stabilize, KalmanConfig};
use crate::mlp::MlpModel;
use crate::posterior::{argmax, Posterior, ProbTrajectory};

/// How frame posteriors are pooled into one utterance score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionRule {
    /// Arithmetic mean over frames.
    #[default]
    Mean,
    /// Per-class maximum over frames, renormalized.
    Max,
    /// The last frame only.
    Final,
}

impl std::str::FromStr for FusionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(FusionRule::Mean),
            "max" => Ok(FusionRule::Max),
            "final" => Ok(FusionRule::Final),
            other => Err(Error::arg(format!("unknown fusion rule `{other}`"))),
        }
    }
}

/// Pools a trajectory into `(class index, fused posterior)`; ties go to the lowest index.
pub fn fuse_utterance(traj: &ProbTrajectory, rule: FusionRule) -> Result<(usize, Posterior)> {
    if traj.is_empty() {
        return Err(Error::arg("cannot fuse an empty trajectory"));
    }
    let mut fused = [0.0; NUM_CLASSES];
    match rule {
        FusionRule::Mean => {
            for row in &traj.rows {
                fused.iter_mut().zip(row).for_each(|(f, v)| *f += v);
            }
            let n = traj.len() as f64;
            fused.iter_mut().for_each(|f| *f /= n);
        }
        FusionRule::Max => {
            for row in &traj.rows {
                fused.iter_mut().zip(row).for_each(|(f, v)| *f = f.max(*v));
            }
            let sum: f64 = fused.iter().sum();
            if sum > 0.0 {
                fused.iter_mut().for_each(|f| *f /= sum);
            } else {
                fused = [1.0 / NUM_CLASSES as f64; NUM_CLASSES];
            }
        }
        FusionRule::Final => fused = *traj.rows.last().expect("non-empty"),
    }
    Ok((argmax(&fused), fused))
}

/// Counts with rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let names: Vec<&str> = EmotionClass::ALL.iter().map(|c| c.name()).collect();
        writeln!(w, "true\\predicted,{}", names.join(","))?;
        for (name, row) in names.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{name},{}", cells.join(","))?;
        }
        Ok(())
    }
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::arg(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= NUM_CLASSES || p >= NUM_CLASSES {
            return Err(Error::arg(format!("label pair ({t}, {p}) out of range")));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: EmotionClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class precision/recall/F1 with macro and support-weighted averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
    pub total: u64,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn classification_report(cm: &ConfusionMatrix) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::arg("confusion matrix is empty"));
    }
    let per_class: Vec<ClassMetrics> = EmotionClass::ALL
        .iter()
        .map(|&class| {
            let j = class.index();
            let tp = cm.counts[j][j];
            let precision = ratio(tp, cm.col_sum(j));
            let recall = ratio(tp, cm.row_sum(j));
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class,
                precision,
                recall,
                f1,
                support: cm.row_sum(j),
            }
        })
        .collect();

    let k = NUM_CLASSES as f64;
    let macro_avg = AverageMetrics {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
        support: total,
    };
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
    };
    let weighted_avg = AverageMetrics {
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
        support: total,
    };
    Ok(EvalReport {
        per_class,
        accuracy: ratio(cm.trace(), total),
        macro_avg,
        weighted_avg,
        total,
        confusion: cm.clone(),
    })
}

impl EvalReport {
    /// Fixed-width table at two decimals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14}{:>10}{:>10}{:>10}{:>10}", "Emotion", "Precision", "Recall", "F1-score", "Support");
        for m in &self.per_class {
            let _ = writeln!(
                s,
                "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
                m.class.to_string(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let _ = writeln!(s, "{:<14}{:>20}{:>10.2}{:>10}", "Accuracy", "", self.accuracy, self.total);
        for (name, a) in [("Macro Avg", &self.macro_avg), ("Weighted Avg", &self.weighted_avg)] {
            let _ = writeln!(
                s,
                "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
                name, a.precision, a.recall, a.f1, a.support
            );
        }
        s
    }
}

/// Raw frame-level accuracy against the fused utterance-level accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub frame_level_accuracy: f64,
    pub utterance_level_accuracy: f64,
    /// `utterance_level_accuracy - frame_level_accuracy`, as a fraction.
    pub absolute_gain: f64,
}

impl GainReport {
    pub fn new(frame_level_accuracy: f64, utterance_level_accuracy: f64) -> Self {
        Self {
            frame_level_accuracy,
            utterance_level_accuracy,
            absolute_gain: utterance_level_accuracy - frame_level_accuracy,
        }
    }

    pub fn gain_percentage_points(&self) -> f64 {
        100.0 * self.absolute_gain
    }
}

/// Everything produced by evaluating a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEvaluation {
    /// Filter + fusion decision per utterance.
    pub utterance_report: EvalReport,
    /// Raw argmax per frame, every frame weighted equally.
    pub frame_report: EvalReport,
    /// Argmax of the filtered posterior per frame.
    pub filtered_frame_accuracy: f64,
    pub gain: GainReport,
    pub predictions: Vec<usize>,
}

pub fn evaluate_trajectories(
    trajectories: &[ProbTrajectory],
    labels: &[usize],
    kalman: &KalmanConfig,
    fusion: FusionRule,
) -> Result<PipelineEvaluation> {
    if trajectories.is_empty() {
        return Err(Error::arg("empty test set"));
    }
    if trajectories.len() != labels.len() {
        return Err(Error::arg("trajectory and label counts differ"));
    }
    let mut frame_truth = Vec::new();
    let mut frame_pred = Vec::new();
    let mut filtered_hits = 0usize;
    let mut predictions = Vec::with_capacity(labels.len());
    for (traj, &label) in trajectories.iter().zip(labels) {
        let smoothed = stabilize(traj, kalman)?;
        for (raw, filt) in traj.rows.iter().zip(&smoothed.rows) {
            frame_truth.push(label);
            frame_pred.push(argmax(raw));
            if argmax(filt) == label {
                filtered_hits += 1;
            }
        }
        predictions.push(fuse_utterance(&smoothed, fusion)?.0);
    }
    let utterance_report = classification_report(&confusion_matrix(labels, &predictions)?)?;
    let frame_report = classification_report(&confusion_matrix(&frame_truth, &frame_pred)?)?;
    let gain = GainReport::new(frame_report.accuracy, utterance_report.accuracy);
    Ok(PipelineEvaluation {
        filtered_frame_accuracy: filtered_hits as f64 / frame_truth.len() as f64,
        utterance_report,
        frame_report,
        gain,
        predictions,
    })
}

/// Classifies every test utterance's frames, then filters and fuses.
pub fn evaluate_pipeline(
    model: &MlpModel,
    kalman: &KalmanConfig,
    fusion: FusionRule,
    test: &[(FeatureMatrix, EmotionClass)],
) -> Result<PipelineEvaluation> {
    if test.is_empty() {
        return Err(Error::arg("empty test set"));
    }
    let mut trajectories = Vec::with_capacity(test.len());
    for (features, _) in test {
        let traj = model.predict_frames(features)?;
        if traj.is_empty() {
            return Err(Error::arg(format!("utterance `{}` has no frames", features.utterance_id)));
        }
        trajectories.push(traj);
    }
    let labels: Vec<usize> = test.iter().map(|(_, c)| c.index()).collect();
    evaluate_trajectories(&trajectories, &labels, kalman, fusion)
}

/// Noise model for synthetic posterior trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryNoise {
    /// Probability that a frame's peak lands on a wrong class.
    pub flip_prob: f64,
    /// Symmetric Dirichlet concentration of each frame's posterior.
    pub dirichlet_concentration: f64,
}

impl Default for TrajectoryNoise {
    fn default() -> Self {
        Self {
            flip_prob: 0.3,
            dirichlet_concentration: 1.0,
        }
    }
}

/// Labelled synthetic trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrajectories {
    pub trajectories: Vec<ProbTrajectory>,
    pub labels: Vec<usize>,
}

/// Draws `n` trajectories of `frames` posteriors each.
///
/// Every frame is a Dirichlet draw whose largest entry is moved to the
/// trajectory's class, or with probability `flip_prob` to a uniformly chosen
/// wrong class.
pub fn synth_noisy_trajectories(
    n: usize,
    frames: usize,
    noise: TrajectoryNoise,
    seed: u64,
) -> Result<SyntheticTrajectories> {
    if !(0.0..1.0).contains(&noise.flip_prob) {
        return Err(Error::arg(format!("flip_prob must lie in [0, 1), got {}", noise.flip_prob)));
    }
    let gamma = Gamma::new(noise.dirichlet_concentration, 1.0)
        .map_err(|e| Error::arg(format!("bad Dirichlet concentration: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajectories = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..NUM_CLASSES);
        let rows = (0..frames)
            .map(|_| {
                let mut p: Posterior = [0.0; NUM_CLASSES];
                p.iter_mut().for_each(|v| *v = gamma.sample(&mut rng));
                let sum: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= sum);
                let peak = if rng.random_bool(noise.flip_prob) {
                    (label + rng.random_range(1..NUM_CLASSES)) % NUM_CLASSES
                } else {
                    label
                };
                let top = argmax(&p);
                p.swap(top, peak);
                p
            })
            .collect();
        trajectories.push(ProbTrajectory::new(rows));
        labels.push(label);
    }
    Ok(SyntheticTrajectories { trajectories, labels })
}
