use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleFormat {
    Int16,
    Float32,
}

struct Format {
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    sample: SampleFormat,
}

fn decode_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Decode {
        offset: offset as u64,
        reason: reason.into(),
    }
}

fn u16_at(bytes: &[u8], at: usize) -> Result<u16> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| decode_err(bytes.len(), "unexpected end of file"))
}

fn u32_at(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| decode_err(bytes.len(), "unexpected end of file"))
}

/// Reads a PCM WAV file (16-bit integer or 32-bit float) and downmixes to mono.
pub fn decode_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav_bytes(&bytes)
}

pub fn decode_wav_bytes(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Err(decode_err(0, "missing RIFF header"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(decode_err(8, "RIFF form type is not WAVE"));
    }

    let mut format: Option<Format> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4)? as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if body + size > bytes.len() {
                    return Err(decode_err(bytes.len(), "fmt chunk truncated"));
                }
                format = Some(parse_fmt(bytes, body, size)?);
            }
            b"data" => {
                let fmt = format
                    .as_ref()
                    .ok_or_else(|| decode_err(pos, "data chunk precedes fmt chunk"))?;
                if body + size > bytes.len() {
                    return Err(decode_err(
                        bytes.len(),
                        format!(
                            "data chunk declares {size} bytes but only {} remain",
                            bytes.len() - body
                        ),
                    ));
                }
                return decode_samples(&bytes[body..body + size], body, fmt);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
    if format.is_none() {
        Err(decode_err(bytes.len(), "no fmt chunk found"))
    } else {
        Err(decode_err(bytes.len(), "no data chunk found"))
    }
}

fn parse_fmt(bytes: &[u8], body: usize, size: usize) -> Result<Format> {
    if size < 16 {
        return Err(decode_err(body, format!("fmt chunk too short ({size} bytes)")));
    }
    let mut tag = u16_at(bytes, body)?;
    let channels = u16_at(bytes, body + 2)?;
    let sample_rate = u32_at(bytes, body + 4)?;
    let block_align = u16_at(bytes, body + 12)?;
    let bits = u16_at(bytes, body + 14)?;
    if tag == FORMAT_EXTENSIBLE {
        if size < 40 {
            return Err(decode_err(body, "extensible fmt chunk too short"));
        }
        // first two bytes of the sub-format GUID carry the real format tag
        tag = u16_at(bytes, body + 24)?;
    }
    let sample = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleFormat::Int16,
        (FORMAT_IEEE_FLOAT, 32) => SampleFormat::Float32,
        _ => {
            return Err(decode_err(
                body,
                format!("unsupported codec: format tag {tag} with {bits} bits per sample"),
            ))
        }
    };
    if channels == 0 {
        return Err(decode_err(body + 2, "zero channels"));
    }
    if sample_rate == 0 {
        return Err(decode_err(body + 4, "zero sample rate"));
    }
    let expected_align = channels as usize * bits as usize / 8;
    if block_align as usize != expected_align {
        return Err(decode_err(
            body + 12,
            format!("block align {block_align} does not match {channels} channels of {bits} bits"),
        ));
    }
    Ok(Format {
        channels,
        sample_rate,
        block_align,
        sample,
    })
}

fn decode_samples(data: &[u8], data_offset: usize, fmt: &Format) -> Result<AudioClip> {
    let align = fmt.block_align as usize;
    if data.len() % align != 0 {
        let whole = data.len() - data.len() % align;
        return Err(decode_err(
            data_offset + whole,
            format!("truncated sample frame ({} trailing bytes)", data.len() - whole),
        ));
    }
    let channels = fmt.channels as usize;
    let mut samples = Vec::with_capacity(data.len() / align);
    for (i, block) in data.chunks_exact(align).enumerate() {
        let value = match fmt.sample {
            SampleFormat::Int16 => {
                let sum: i64 = block
                    .chunks_exact(2)
                    .map(|b| i16::from_le_bytes([b[0], b[1]]) as i64)
                    .sum();
                sum as f64 / channels as f64 / 32768.0
            }
            SampleFormat::Float32 => {
                let mut sum = 0.0f64;
                for (c, b) in block.chunks_exact(4).enumerate() {
                    let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                    if !v.is_finite() {
                        return Err(decode_err(
                            data_offset + i * align + c * 4,
                            "non-finite float sample",
                        ));
                    }
                    sum += v as f64;
                }
                sum / channels as f64
            }
        };
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(decode_err(data_offset, "data chunk holds no samples"));
    }
    Ok(AudioClip {
        samples,
        sample_rate: fmt.sample_rate,
    })
}

/// Writes a mono 16-bit PCM WAV. Samples are clamped to [-1, 1).
pub fn write_wav_i16(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for &s in &clip.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}
