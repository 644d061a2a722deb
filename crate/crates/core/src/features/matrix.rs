use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use super::spectral::N_MFCC;
use crate::error::{Error, Result};

/// Columns per frame: 13 MFCC, 13 Δ, 13 ΔΔ, RMSE, ZCR.
pub const FEATURE_DIM: usize = 3 * N_MFCC + 2;
pub const RMSE_COLUMN: usize = 3 * N_MFCC;
pub const ZCR_COLUMN: usize = 3 * N_MFCC + 1;

const BINARY_MAGIC: &[u8; 8] = b"KFTSER01";

pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_DIM);
    for prefix in ["mfcc", "delta", "deltadelta"] {
        names.extend((0..N_MFCC).map(|i| format!("{prefix}_{i}")));
    }
    names.push("rmse".into());
    names.push("zcr".into());
    names
}

/// Per-frame feature rows of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub utterance_id: String,
    rows: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(utterance_id: impl Into<String>, rows: Array2<f64>) -> Result<Self> {
        if rows.ncols() != FEATURE_DIM {
            return Err(Error::arg(format!(
                "feature matrix must have {FEATURE_DIM} columns, got {}",
                rows.ncols()
            )));
        }
        for (t, row) in rows.outer_iter().enumerate() {
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::arg(format!("non-finite feature at frame {t}, column {c}")));
            }
            if row[RMSE_COLUMN] < 0.0 {
                return Err(Error::arg(format!("negative rmse at frame {t}")));
            }
            if !(0.0..=1.0).contains(&row[ZCR_COLUMN]) {
                return Err(Error::arg(format!("zcr outside [0, 1] at frame {t}")));
            }
        }
        Ok(Self {
            utterance_id: utterance_id.into(),
            rows,
        })
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn into_rows(self) -> Array2<f64> {
        self.rows
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.rows.row(t)
    }

    pub fn num_frames(&self) -> usize {
        self.rows.nrows()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", feature_names().join(","))?;
        for row in self.rows.outer_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(utterance_id: impl Into<String>, r: impl std::io::Read) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty CSV".into()))?
            .map_err(|e| Error::Format(e.to_string()))?;
        if header.trim_end() != feature_names().join(",") {
            return Err(Error::Format("CSV header does not match the feature schema".into()));
        }
        let mut data = Vec::new();
        let mut n = 0;
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Format(format!("line {}: cannot parse `{field}`", i + 2))
                })?;
                data.push(v);
            }
            if data.len() - before != FEATURE_DIM {
                return Err(Error::Format(format!(
                    "line {}: expected {FEATURE_DIM} fields, got {}",
                    i + 2,
                    data.len() - before
                )));
            }
            n += 1;
        }
        let rows = Array2::from_shape_vec((n, FEATURE_DIM), data)
            .map_err(|e| Error::Format(e.to_string()))?;
        Self::new(utterance_id, rows)
    }

    /// `KFTSER01`, u32 frames, u32 columns, then row-major little-endian f64.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.rows.len() * 8);
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(self.rows.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows.ncols() as u32).to_le_bytes());
        for v in self.rows.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_binary(utterance_id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != BINARY_MAGIC {
            return Err(Error::Format("missing KFTSER01 magic".into()));
        }
        let frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if cols != FEATURE_DIM {
            return Err(Error::Format(format!("expected {FEATURE_DIM} columns, header says {cols}")));
        }
        let body = &bytes[16..];
        if body.len() != frames * cols * 8 {
            return Err(Error::Format(format!(
                "expected {} payload bytes, found {}",
                frames * cols * 8,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let rows = Array2::from_shape_vec((frames, cols), data)
            .map_err(|e| Error::Format(e.to_string()))?;
        Self::new(utterance_id, rows)
    }

    /// Saves as binary for a `.bin` extension, CSV otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = if path.extension().is_some_and(|e| e == "bin") {
            self.to_binary()
        } else {
            let mut buf = Vec::new();
            self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
            buf
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "bin") {
            Self::from_binary(id, &bytes)
        } else {
            Self::read_csv(id, &bytes[..])
        }
    }
}
