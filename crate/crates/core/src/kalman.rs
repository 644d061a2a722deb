//! Kalman filtering of per-frame class posteriors.
//!
//! The posterior sequence from the classifier is treated as a noisy
//! measurement `z_k` of a latent probability vector `x_k`:
//!
//! ```text
//! predict:  x⁻ = F x,           P⁻ = F P Fᵀ + Q
//! correct:  K  = P⁻ Hᵀ (H P⁻ Hᵀ + R)⁻¹
//!           x  = x⁻ + K (z − H x⁻),   P = (I − K H) P⁻
//! ```
//!
//! A fixed-interval (Rauch–Tung–Striebel) backward pass is available for
//! offline use.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::emotion::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::eval::{fuse_utterance, FusionRule};
use crate::posterior::{Posterior, ProbTrajectory};

pub const DEFAULT_Q: f64 = 1e-3;
pub const DEFAULT_R: f64 = 1e-1;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanConfig {
    /// State transition `F`.
    pub transition: DMatrix<f64>,
    /// Observation model `H`.
    pub observation: DMatrix<f64>,
    /// Process noise covariance `Q`.
    pub process_noise: DMatrix<f64>,
    /// Measurement noise covariance `R`.
    pub measurement_noise: DMatrix<f64>,
    /// Clamp the corrected state to [0, 1] and rescale it to sum 1.
    pub renormalize: bool,
    /// Use the Joseph-form covariance update.
    pub joseph_form: bool,
    /// Replace filtered output by the fixed-interval smoothed estimates.
    pub fixed_interval: bool,
}

impl KalmanConfig {
    /// Identity dynamics and observation with `Q = q I`, `R = r I`.
    pub fn isotropic(dim: usize, q: f64, r: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("state dimension must be positive"));
        }
        if !(q >= 0.0 && q.is_finite()) || !(r >= 0.0 && r.is_finite()) {
            return Err(Error::arg(format!("q and r must be finite and non-negative, got q={q} r={r}")));
        }
        Ok(Self {
            transition: DMatrix::identity(dim, dim),
            observation: DMatrix::identity(dim, dim),
            process_noise: DMatrix::identity(dim, dim) * q,
            measurement_noise: DMatrix::identity(dim, dim) * r,
            renormalize: dim == NUM_CLASSES,
            joseph_form: false,
            fixed_interval: false,
        })
    }

    /// Four-class configuration with simplex renormalization on.
    pub fn emotion(q: f64, r: f64) -> Result<Self> {
        let mut cfg = Self::isotropic(NUM_CLASSES, q, r)?;
        cfg.renormalize = true;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let square = |m: &DMatrix<f64>| m.nrows() == n && m.ncols() == n;
        if !square(&self.transition)
            || !square(&self.observation)
            || !square(&self.process_noise)
            || !square(&self.measurement_noise)
        {
            return Err(Error::arg(format!("all Kalman matrices must be {n}x{n}")));
        }
        for (name, m) in [("Q", &self.process_noise), ("R", &self.measurement_noise)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!("{name} has non-finite entries")));
            }
            if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                return Err(Error::arg(format!("{name} is not symmetric")));
            }
            let min_eig = m.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-12 * m.amax().max(1.0) {
                return Err(Error::arg(format!("{name} is not positive semi-definite")));
            }
        }
        Ok(())
    }

    /// Copy with `Q` replaced by `ratio · R`.
    pub fn with_qr_ratio(&self, ratio: f64) -> Self {
        let mut cfg = self.clone();
        cfg.process_noise = &self.measurement_noise * ratio;
        cfg
    }
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self::emotion(DEFAULT_Q, DEFAULT_R).expect("default parameters are valid")
    }
}

/// Estimate `x̂` and its error covariance `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl KalmanState {
    /// Uniform state (`1/n` each) with unit covariance.
    pub fn initial(dim: usize) -> Self {
        Self {
            x: DVector::from_element(dim, 1.0 / dim as f64),
            p: DMatrix::identity(dim, dim),
        }
    }
}

pub fn predict_step(state: &KalmanState, cfg: &KalmanConfig) -> KalmanState {
    let f = &cfg.transition;
    KalmanState {
        x: f * &state.x,
        p: f * &state.p * f.transpose() + &cfg.process_noise,
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

/// Clamps to [0, 1] and rescales to unit sum; all-zero input becomes uniform.
pub fn project_to_simplex(x: &mut DVector<f64>) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let sum = x.sum();
    if sum > 0.0 {
        *x /= sum;
    } else {
        x.fill(1.0 / x.len() as f64);
    }
}

/// Measurement update. Returns the corrected state and the gain used.
pub fn correct_step(
    state: &KalmanState,
    z: &DVector<f64>,
    cfg: &KalmanConfig,
) -> Result<(KalmanState, DMatrix<f64>)> {
    if z.len() != cfg.dim() {
        return Err(Error::arg(format!("measurement has {} entries, state has {}", z.len(), cfg.dim())));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("non-finite measurement"));
    }
    let h = &cfg.observation;
    let hp = h * &state.p;
    let mut s = &hp * h.transpose() + &cfg.measurement_noise;
    symmetrize(&mut s);
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numeric("innovation covariance is not positive definite".into()))?;
    // S⁻¹ H P = (P Hᵀ S⁻¹)ᵀ because P and S are symmetric
    let gain = chol.solve(&hp).transpose();

    let innovation = z - h * &state.x;
    let mut x = &state.x + &gain * innovation;
    let ident = DMatrix::<f64>::identity(cfg.dim(), cfg.dim());
    let i_kh = &ident - &gain * h;
    let mut p = if cfg.joseph_form {
        &i_kh * &state.p * i_kh.transpose() + &gain * &cfg.measurement_noise * gain.transpose()
    } else {
        &i_kh * &state.p
    };
    symmetrize(&mut p);
    if cfg.renormalize {
        project_to_simplex(&mut x);
    }
    Ok((KalmanState { x, p }, gain))
}

/// Everything retained from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPass {
    /// `x̂_{k|k−1}, P_{k|k−1}` for each step.
    pub predicted: Vec<KalmanState>,
    /// `x̂_{k|k}, P_{k|k}` for each step.
    pub filtered: Vec<KalmanState>,
    pub gains: Vec<DMatrix<f64>>,
}

impl FilterPass {
    pub fn len(&self) -> usize {
        self.filtered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }

    pub fn estimates(&self) -> Vec<DVector<f64>> {
        self.filtered.iter().map(|s| s.x.clone()).collect()
    }
}

/// Runs predict/correct over every measurement, starting from [`KalmanState::initial`].
pub fn filter_sequence(measurements: &[DVector<f64>], cfg: &KalmanConfig) -> Result<FilterPass> {
    cfg.validate()?;
    if measurements.is_empty() {
        return Err(Error::arg("cannot filter an empty trajectory"));
    }
    let mut state = KalmanState::initial(cfg.dim());
    let mut pass = FilterPass {
        predicted: Vec::with_capacity(measurements.len()),
        filtered: Vec::with_capacity(measurements.len()),
        gains: Vec::with_capacity(measurements.len()),
    };
    for z in measurements {
        let prior = predict_step(&state, cfg);
        let (posterior, gain) = correct_step(&prior, z, cfg)?;
        pass.predicted.push(prior);
        pass.filtered.push(posterior.clone());
        pass.gains.push(gain);
        state = posterior;
    }
    Ok(pass)
}

/// Fixed-interval smoothing of a completed forward pass, returning `x̂_{k|T}`.
pub fn rts_smooth(pass: &FilterPass, cfg: &KalmanConfig) -> Result<Vec<DVector<f64>>> {
    let n = pass.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut x_s = pass.filtered[n - 1].x.clone();
    let mut p_s = pass.filtered[n - 1].p.clone();
    let mut out = vec![x_s.clone(); n];
    for k in (0..n - 1).rev() {
        let cur = &pass.filtered[k];
        let next_prior = &pass.predicted[k + 1];
        // C = P_{k|k} Fᵀ P_{k+1|k}⁻¹, solved as P_{k+1|k} Cᵀ = F P_{k|k}
        let chol = next_prior
            .p
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric(format!("predicted covariance at step {} is singular", k + 1)))?;
        let c = chol.solve(&(&cfg.transition * &cur.p)).transpose();
        let mut x = &cur.x + &c * (&x_s - &next_prior.x);
        let mut p = &cur.p + &c * (&p_s - &next_prior.p) * c.transpose();
        symmetrize(&mut p);
        if cfg.renormalize {
            project_to_simplex(&mut x);
        }
        out[k] = x.clone();
        x_s = x;
        p_s = p;
    }
    Ok(out)
}

/// Raw measurements alongside their filtered estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTrajectory {
    pub raw: ProbTrajectory,
    pub filtered: ProbTrajectory,
    pub gains: Vec<DMatrix<f64>>,
    pub pass: FilterPass,
}

fn to_posterior(v: &DVector<f64>) -> Posterior {
    let mut p = [0.0; NUM_CLASSES];
    p.iter_mut().zip(v.iter()).for_each(|(d, s)| *d = *s);
    p
}

pub fn filter_trajectory(traj: &ProbTrajectory, cfg: &KalmanConfig) -> Result<SmoothedTrajectory> {
    if cfg.dim() != NUM_CLASSES {
        return Err(Error::arg(format!("trajectory filtering needs a {NUM_CLASSES}-dim config")));
    }
    let z: Vec<DVector<f64>> = traj.rows.iter().map(|r| DVector::from_row_slice(r)).collect();
    let pass = filter_sequence(&z, cfg)?;
    let filtered = ProbTrajectory::new(pass.filtered.iter().map(|s| to_posterior(&s.x)).collect());
    Ok(SmoothedTrajectory {
        raw: traj.clone(),
        filtered,
        gains: pass.gains.clone(),
        pass,
    })
}

/// Filtered trajectory, or the fixed-interval smoothed one when the config asks for it.
pub fn stabilize(traj: &ProbTrajectory, cfg: &KalmanConfig) -> Result<ProbTrajectory> {
    let out = filter_trajectory(traj, cfg)?;
    if cfg.fixed_interval {
        let smoothed = rts_smooth(&out.pass, cfg)?;
        Ok(ProbTrajectory::new(smoothed.iter().map(to_posterior).collect()))
    } else {
        Ok(out.filtered)
    }
}

impl SmoothedTrajectory {
    /// Columns: frame_index, four raw posteriors, four filtered posteriors.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "frame_index,z_angry,z_calm,z_happy,z_sad,x_angry,x_calm,x_happy,x_sad"
        )?;
        for (i, (z, x)) in self.raw.rows.iter().zip(&self.filtered.rows).enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{},{},{},{},{}",
                z[0], z[1], z[2], z[3], x[0], x[1], x[2], x[3]
            )?;
        }
        Ok(())
    }
}

/// Utterance accuracy for each candidate Q/R ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_ratio: f64,
    pub best_accuracy: f64,
    pub ratios: Vec<f64>,
    pub accuracies: Vec<f64>,
}

/// Grid search over `Q = ratio · R`, scored by fused utterance accuracy.
///
/// Ties go to the smaller ratio (heavier smoothing).
pub fn tune_qr_ratio(
    trajectories: &[ProbTrajectory],
    labels: &[usize],
    grid: &[f64],
    base: &KalmanConfig,
    fusion: FusionRule,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::arg("Q/R grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::arg(format!("Q/R ratios must be positive, got {bad}")));
    }
    if trajectories.is_empty() || trajectories.len() != labels.len() {
        return Err(Error::arg("need at least one labelled validation trajectory"));
    }

    let mut accuracies = Vec::with_capacity(grid.len());
    for &ratio in grid {
        let cfg = base.with_qr_ratio(ratio);
        let mut correct = 0;
        for (traj, &label) in trajectories.iter().zip(labels) {
            let smoothed = stabilize(traj, &cfg)?;
            if fuse_utterance(&smoothed, fusion)?.0 == label {
                correct += 1;
            }
        }
        accuracies.push(correct as f64 / labels.len() as f64);
    }

    let mut best = 0;
    for i in 1..grid.len() {
        let better = accuracies[i] > accuracies[best];
        let tie_smaller = accuracies[i] == accuracies[best] && grid[i] < grid[best];
        if better || tie_smaller {
            best = i;
        }
    }
    Ok(TuneResult {
        best_ratio: grid[best],
        best_accuracy: accuracies[best],
        ratios: grid.to_vec(),
        accuracies,
    })
}
