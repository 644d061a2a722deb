//! Binary model checkpoints.
//!
//! Layout (all integers u32 LE, all reals f64 LE):
//! magic `KFTSERML`, version, layer count + dims, class count + (len, utf8)
//! names, scaler width + means + stds, then every weight matrix (row-major,
//! `out × in`) followed by every bias vector.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::model::{Layer, MlpModel};
use crate::error::{Error, Result};
use crate::features::ScalerStats;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"KFTSERML";
pub const CHECKPOINT_VERSION: u32 = 1;

fn corrupt(section: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        section: section.into(),
        reason: reason.into(),
    }
}

pub fn to_bytes(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::new();
    let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    let put_f64s = |out: &mut Vec<u8>, vs: &mut dyn Iterator<Item = &f64>| {
        for v in vs {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };

    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION as usize);
    put_u32(&mut out, model.layer_dims.len());
    for &d in &model.layer_dims {
        put_u32(&mut out, d);
    }
    put_u32(&mut out, model.class_order.len());
    for name in &model.class_order {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
    }
    put_u32(&mut out, model.scaler.dim());
    put_f64s(&mut out, &mut model.scaler.mean.iter());
    put_f64s(&mut out, &mut model.scaler.std.iter());
    for layer in &model.layers {
        put_f64s(&mut out, &mut layer.weights.iter());
    }
    for layer in &model.layers {
        put_f64s(&mut out, &mut layer.bias.iter());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            corrupt(
                section,
                format!("needs {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, section: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize, section: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt(section, "size overflow"))?, section)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(section, "non-finite value"));
        }
        Ok(values)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(corrupt("magic", "not a KFTSERML checkpoint"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(corrupt(
            "version",
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }

    let n_dims = r.u32("layer_dims")?;
    if !(2..=64).contains(&n_dims) {
        return Err(corrupt("layer_dims", format!("implausible layer count {n_dims}")));
    }
    let dims = (0..n_dims).map(|_| r.u32("layer_dims")).collect::<Result<Vec<_>>>()?;
    if dims.contains(&0) {
        return Err(corrupt("layer_dims", "zero-width layer"));
    }

    let n_classes = r.u32("class_order")?;
    if n_classes != *dims.last().unwrap() {
        return Err(corrupt(
            "class_order",
            format!("{n_classes} class names for {} outputs", dims.last().unwrap()),
        ));
    }
    let mut class_order = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let len = r.u32("class_order")?;
        let raw = r.take(len, "class_order")?;
        let name = std::str::from_utf8(raw).map_err(|_| corrupt("class_order", "invalid UTF-8"))?;
        class_order.push(name.to_string());
    }

    let width = r.u32("scaler")?;
    if width != dims[0] {
        return Err(corrupt("scaler", format!("width {width} but input dim {}", dims[0])));
    }
    let mean = r.f64s(width, "scaler")?;
    let std = r.f64s(width, "scaler")?;
    if std.iter().any(|&s| s <= 0.0) {
        return Err(corrupt("scaler", "non-positive standard deviation"));
    }

    let mut weights = Vec::with_capacity(n_dims - 1);
    for (i, w) in dims.windows(2).enumerate() {
        let section = format!("W{}", i + 1);
        let data = r.f64s(w[0] * w[1], &section)?;
        weights.push(Array2::from_shape_vec((w[1], w[0]), data).expect("length checked"));
    }
    let mut layers = Vec::with_capacity(n_dims - 1);
    for (i, (w, weights)) in dims.windows(2).zip(weights).enumerate() {
        let bias = Array1::from_vec(r.f64s(w[1], &format!("b{}", i + 1))?);
        layers.push(Layer { weights, bias });
    }
    if r.pos != bytes.len() {
        return Err(corrupt("trailer", format!("{} unexpected trailing bytes", bytes.len() - r.pos)));
    }

    Ok(MlpModel {
        layer_dims: dims,
        layers,
        scaler: ScalerStats { mean, std },
        class_order,
    })
}

pub fn save_checkpoint(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
