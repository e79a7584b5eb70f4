//! Binary checkpoint format.
//!
//! ```text
//! "LDCK" | u32 version | u64 config length | config JSON
//! u32 tensor count
//! per tensor: u32 name length | name | u32 ndim | u64 dims… | f32 LE data
//! ```

use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use super::model::DepthNet;
use super::scalar::Scalar;
use super::spec::ModelConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LDCK";
const VERSION: u32 = 1;

pub fn encode_checkpoint<T: Scalar>(net: &DepthNet<T>) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(net.config())?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(&config);
    let params: Vec<_> = net.parameters().collect();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, value) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.ndim() as u32).to_le_bytes());
        for &d in value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in value.iter() {
            out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(self.path, self.bytes.len() as u64, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, v: u64) -> Result<usize> {
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len())
            .ok_or_else(|| Error::parse(self.path, self.pos as u64, format!("implausible length {v}")))
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::parse(self.path, self.pos as u64, reason)
    }
}

/// `path` is only used in error messages.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8], path: &Path) -> Result<DepthNet<T>> {
    let mut r = Reader { path, bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::parse(path, 0, "not a checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::parse(
            path,
            4,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let n = r.u64()?;
    let n = r.len(n)?;
    let config: ModelConfig =
        serde_json::from_slice(r.take(n)?).map_err(|e| Error::parse(path, 16, format!("config: {e}")))?;
    let mut net = DepthNet::<T>::new(config, 0)?;
    let count = r.u32()? as usize;
    let expected = net.parameters().count();
    if count != expected {
        return Err(r.fail(format!("{count} tensors, model has {expected}")));
    }
    for (name, dst) in net.parameters_mut() {
        let n = r.u32()? as u64;
        let n = r.len(n)?;
        let stored = r.take(n)?;
        if stored != name.as_bytes() {
            return Err(r.fail(format!(
                "expected tensor `{name}`, found `{}`",
                String::from_utf8_lossy(stored)
            )));
        }
        let ndim = r.u32()? as usize;
        let mut dims = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            let d = r.u64()?;
            dims.push(r.len(d)?);
        }
        if dims != dst.shape() {
            return Err(r.fail(format!(
                "tensor `{name}` has shape {dims:?}, expected {:?}",
                dst.shape()
            )));
        }
        let data = r.take(dst.len() * 4)?;
        let values = data
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        *dst = ArrayD::from_shape_vec(IxDyn(&dims), values).expect("length checked");
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes after last tensor"));
    }
    Ok(net)
}

pub fn save_checkpoint<T: Scalar>(net: &DepthNet<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(net)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<DepthNet<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
