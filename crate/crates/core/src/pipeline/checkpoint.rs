//! Binary checkpoints.
//!
//! ```text
//! "RJCK"  u32 version  u32 classes
//! u32 n   n bytes of canonical config text
//! u32 tensor count, then per tensor:
//!   u32 name length, name, u32 rank, rank x u32 dims, f32 values
//! ```
//!
//! Integers and floats are little-endian. Parameters are stored in single
//! precision; trained models are already rounded so a reload is exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::config::TrainConfig;
use crate::pipeline::model::Model;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"RJCK";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Input(format!("{v} does not fit the checkpoint format")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint(model: &Model<f64>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize)?;
    put_u32(&mut out, model.classes())?;
    let text = model.config.to_config_string();
    put_u32(&mut out, text.len())?;
    out.extend_from_slice(text.as_bytes());
    let names = model.names();
    let tensors = model.tensors();
    put_u32(&mut out, tensors.len())?;
    for (name, t) in names.iter().zip(tensors) {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        for &v in t.data() {
            let f = v as f32;
            if !f.is_finite() {
                return Err(Error::NonFinite(format!("`{name}` does not fit in single precision")));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                path: self.path.to_path_buf(),
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            }),
        }
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn text(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        let b = self.take(n)?;
        std::str::from_utf8(b).map_err(|_| self.format("text is not UTF-8"))
    }

    fn format(&self, reason: &str) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Model<f64>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(r.format("not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(r.format(&format!("unsupported version {version}")));
    }
    let classes = r.u32()?;
    let config = TrainConfig::from_config_str(r.text()?)?;
    let count = r.u32()?;
    let mut named = Vec::new();
    for _ in 0..count {
        let name = r.text()?.to_string();
        let rank = r.u32()?;
        if !(1..=3).contains(&rank) {
            return Err(r.format(&format!("tensor `{name}` has rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| r.format(&format!("tensor `{name}` is too large")))?;
        let data: Vec<f64> = r
            .take(len)?
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let t = Tensor::new(shape, data).map_err(|_| r.format(&format!("tensor `{name}` has non-finite values")))?;
        named.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(r.format(&format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Model::from_named(&config, classes, named)
}

pub fn save_checkpoint(model: &Model<f64>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
