//! Little-endian binary containers for features, aesthetic scores and model
//! checkpoints.
//!
//! ```text
//! FSEQ  magic "FSEQ" | u32 version | u64 N | u64 D | f64 fps | N*D f64, row-major
//! ASCR  magic "ASCR" | u32 version | u64 N | N f64
//! RSUM  magic "RSUM" | u32 version | u64 D | u64 H | u64 count
//!       | count * (u64 rows | u64 cols | rows*cols f64)
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{FeatureSequence, ModelParams};
use crate::numgrad::Matrix;
use crate::selection::{ScoreKind, ScoreVector};

pub const FEATURE_MAGIC: &[u8; 4] = b"FSEQ";
pub const AESTHETIC_MAGIC: &[u8; 4] = b"ASCR";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RSUM";
pub const FORMAT_VERSION: u32 = 1;

/// Cursor over a file's bytes that reports failures against the file path.
struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Reader { path, bytes, pos: 0 }
    }

    fn format(&self, field: &'static str, offset: usize, expected: impl Into<String>, found: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            field,
            offset: offset as u64,
            expected: expected.into(),
            found: found.into(),
        }
    }

    fn take(&mut self, field: &'static str, n: usize) -> Result<&'a [u8]> {
        let left = self.bytes.len() - self.pos;
        if left < n {
            return Err(self.format(field, self.pos, format!("{n} bytes"), format!("{left} bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        let got = self.take("magic", 4)?;
        if got != want {
            return Err(self.format(
                "magic",
                at,
                format!("{:?}", String::from_utf8_lossy(want)),
                format!("{:?}", String::from_utf8_lossy(got)),
            ));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let v = u32::from_le_bytes(self.take("version", 4)?.try_into().unwrap());
        if v != FORMAT_VERSION {
            return Err(Error::Version {
                path: self.path.to_path_buf(),
                found: v,
                supported: FORMAT_VERSION,
            });
        }
        Ok(())
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(field, 8)?.try_into().unwrap()))
    }

    fn count(&mut self, field: &'static str) -> Result<usize> {
        let at = self.pos;
        let v = self.u64(field)?;
        usize::try_from(v).map_err(|_| self.format(field, at, "a count that fits in memory", v.to_string()))
    }

    fn f64(&mut self, field: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(field, 8)?.try_into().unwrap()))
    }

    /// `n` finite reals. The whole block is length-checked up front so a
    /// short payload reports total expected and available bytes.
    fn reals(&mut self, field: &'static str, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| self.format(field, self.pos, "a payload size that fits in memory", format!("{n} values")))?;
        let start = self.pos;
        let block = self.take(field, bytes)?;
        block
            .chunks_exact(8)
            .enumerate()
            .map(|(k, c)| {
                let v = f64::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(self.format(field, start + 8 * k, "a finite real", v.to_string()))
                }
            })
            .collect()
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.format(
                "trailing data",
                self.pos,
                format!("end of file at {} bytes", self.pos),
                format!("{} bytes", self.bytes.len()),
            ));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn put_reals(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_features(x: &FeatureSequence) -> Vec<u8> {
    let f = x.features();
    let mut out = Vec::with_capacity(32 + 8 * f.len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(f.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(f.cols() as u64).to_le_bytes());
    out.extend_from_slice(&x.fps().to_le_bytes());
    put_reals(&mut out, f.as_slice());
    out
}

/// Parses FSEQ bytes; `path` names the source in errors and its file stem
/// becomes the sequence id.
pub fn decode_features(path: &Path, bytes: &[u8]) -> Result<FeatureSequence> {
    let mut r = Reader::new(path, bytes);
    r.magic(FEATURE_MAGIC)?;
    r.version()?;
    let n = r.count("N")?;
    let d = r.count("D")?;
    let fps_at = r.pos;
    let fps = r.f64("fps")?;
    if n == 0 || d == 0 {
        return Err(r.format("N", 8, "N >= 1 and D >= 1", format!("N={n}, D={d}")));
    }
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(r.format("fps", fps_at, "a positive frame rate", fps.to_string()));
    }
    let total = n
        .checked_mul(d)
        .ok_or_else(|| r.format("payload", r.pos, "N*D that fits in memory", format!("{n}*{d}")))?;
    let data = r.reals("payload", total)?;
    r.finish()?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    FeatureSequence::new(Matrix::from_vec(n, d, data)?, fps, id)
}

pub fn write_features(x: &FeatureSequence, path: &Path) -> Result<()> {
    write_file(path, &encode_features(x))
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    decode_features(path, &read_file(path)?)
}

pub fn encode_aesthetic(q: &ScoreVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * q.len());
    out.extend_from_slice(AESTHETIC_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(q.len() as u64).to_le_bytes());
    put_reals(&mut out, q.values());
    out
}

pub fn write_aesthetic(q: &ScoreVector, path: &Path) -> Result<()> {
    write_file(path, &encode_aesthetic(q))
}

/// Parses ASCR bytes, checking the count against `expected_n` and every
/// score against `[0, 1]`.
pub fn decode_aesthetic(path: &Path, bytes: &[u8], expected_n: usize) -> Result<ScoreVector> {
    let mut r = Reader::new(path, bytes);
    r.magic(AESTHETIC_MAGIC)?;
    r.version()?;
    let n = r.count("N")?;
    let values = r.reals("payload", n)?;
    r.finish()?;
    if n != expected_n {
        return Err(Error::input(format!(
            "{}: {n} aesthetic scores for a {expected_n}-frame video",
            path.display()
        )));
    }
    if let Some((t, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::input(format!(
            "{}: aesthetic score {v} at frame {t} is outside [0,1]",
            path.display()
        )));
    }
    ScoreVector::new(values, ScoreKind::Aesthetic)
}

/// Reads aesthetic scores. A missing file yields all-ones scores when
/// `fallback` is set.
pub fn read_aesthetic(path: &Path, expected_n: usize, fallback: bool) -> Result<ScoreVector> {
    if fallback && !path.exists() {
        return Ok(ScoreVector::ones(expected_n, ScoreKind::Aesthetic));
    }
    decode_aesthetic(path, &read_file(path)?, expected_n)
}

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let tensors = params.network().tensors();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(params.hidden() as u64).to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for m in tensors {
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        put_reals(&mut out, m.as_slice());
    }
    out
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader::new(path, bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version()?;
    let d = r.count("D")?;
    let h = r.count("H")?;
    let count_at = r.pos;
    let count = r.count("tensor count")?;
    let want = ModelParams::init(1, 1, 0)?.network().tensors().len();
    if count != want || d == 0 || h == 0 {
        return Err(r.format(
            "tensor count",
            count_at,
            format!("{want} tensors with D, H >= 1"),
            format!("{count} tensors, D={d}, H={h}"),
        ));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = r.count("tensor rows")?;
        let cols = r.count("tensor cols")?;
        let total = rows
            .checked_mul(cols)
            .ok_or_else(|| r.format("tensor shape", r.pos, "rows*cols that fits in memory", format!("{rows}x{cols}")))?;
        tensors.push(Matrix::from_vec(rows, cols, r.reals("tensor values", total)?)?);
    }
    r.finish()?;
    ModelParams::from_tensors(d, h, tensors).map_err(|e| {
        r.format("tensor shape", count_at + 8, "shapes matching D and H", e.to_string())
    })
}

pub fn write_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    write_file(path, &encode_checkpoint(params))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    decode_checkpoint(path, &read_file(path)?)
}
