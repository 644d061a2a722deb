use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCALER_EPSILON: f64 = 1e-8;

/// Per-column z-score statistics fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at [`SCALER_EPSILON`].
    pub std: Vec<f64>,
}

impl ScalerStats {
    pub fn fit(rows: ArrayView2<'_, f64>) -> Result<Self> {
        let n = rows.nrows();
        if n < 2 {
            return Err(Error::arg(format!("scaler needs at least 2 rows, got {n}")));
        }
        let nf = n as f64;
        let mut mean = Vec::with_capacity(rows.ncols());
        let mut std = Vec::with_capacity(rows.ncols());
        for col in rows.axis_iter(Axis(1)) {
            // shifted two-pass with a correction sweep; columns with a large
            // offset and a small spread lose precision otherwise
            let shift = col[0];
            let mut mu = shift + col.iter().map(|x| x - shift).sum::<f64>() / nf;
            mu += col.iter().map(|x| x - mu).sum::<f64>() / nf;
            let var = col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / nf;
            mean.push(mu);
            std.push(var.sqrt().max(SCALER_EPSILON));
        }
        Ok(Self { mean, std })
    }

    /// Identity transform of the given width.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check_width(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::arg(format!(
                "scaler fitted on {} columns, got {cols}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(rows.ncols())?;
        let mut out = rows.to_owned();
        for mut row in out.outer_iter_mut() {
            for ((v, mu), sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - mu) / sd;
            }
        }
        Ok(out)
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_width(row.len())?;
        Ok(row
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, mu), sd)| (v - mu) / sd)
            .collect())
    }

    pub fn invert(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(rows.ncols())?;
        let mut out = rows.to_owned();
        for mut row in out.outer_iter_mut() {
            for ((v, mu), sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * sd + mu;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_column_standardizes_exactly() {
        let rows = array![[-1.0], [1.0]];
        let s = ScalerStats::fit(rows.view()).unwrap();
        assert_eq!(s.mean, vec![0.0]);
        assert_eq!(s.std, vec![1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let rows = array![[3.0, 1.0], [3.0, 2.0], [3.0, 4.0]];
        let s = ScalerStats::fit(rows.view()).unwrap();
        assert_eq!(s.std[0], SCALER_EPSILON);
        let t = s.apply(rows.view()).unwrap();
        assert!(t.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_few_rows_is_an_error() {
        assert!(ScalerStats::fit(array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn transformed_training_columns_are_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows = Array2::from_shape_fn((500, 41), |(_, c)| {
            rng.random_range(-1.0..1.0) * (c as f64 + 1.0) + c as f64 * 10.0
        });
        let s = ScalerStats::fit(rows.view()).unwrap();
        let t = s.apply(rows.view()).unwrap();
        for col in t.axis_iter(Axis(1)) {
            let mu = col.mean().unwrap();
            let sd = (col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / 500.0).sqrt();
            assert!(mu.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-6);
        }
        let back = s.invert(t.view()).unwrap();
        for (a, b) in back.iter().zip(rows.iter()) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let s = ScalerStats::identity(3);
        assert!(s.apply(Array2::zeros((2, 4)).view()).is_err());
        assert!(s.apply_row(&[1.0]).is_err());
    }
}
