//! PFM (single channel, little-endian) for depth and binary PPM (P6) for RGB.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

pub fn encode_pfm(depth: &Array2<f32>) -> Result<Vec<u8>> {
    if let Some(v) = depth.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "depth maps must be finite and non-negative, found {v}"
        )));
    }
    let (rows, cols) = depth.dim();
    let mut out = format!("Pf\n{cols} {rows}\n-1.0\n").into_bytes();
    out.reserve(rows * cols * 4);
    // PFM stores scanlines bottom to top.
    for row in depth.rows().into_iter().rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    let mut header = HeaderReader { bytes, pos: 0, path };
    let magic = header.token()?;
    if magic != "Pf" {
        return Err(Error::parse(path, 0, format!("expected magic `Pf`, found `{magic}`")));
    }
    let cols = header.dimension()?;
    let rows = header.dimension()?;
    header.skip_space();
    let scale_at = header.pos;
    let scale: f32 = header
        .token()?
        .parse()
        .map_err(|_| Error::parse(path, scale_at as u64, "scale is not a number"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(path, scale_at as u64, "scale must be non-zero"));
    }
    let start = header.end_of_header()?;
    let payload = payload(bytes, start, rows * cols * 4, path)?;
    let little = scale < 0.0;
    let mut out = Array2::zeros((rows, cols));
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        out[[rows - 1 - k / cols, k % cols]] = v;
    }
    Ok(out)
}

pub fn save_pfm(depth: &Array2<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(depth)?).map_err(|e| Error::io(path, e))
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<Array2<f32>> {
    let path = path.as_ref();
    decode_pfm(&fs::read(path).map_err(|e| Error::io(path, e))?, path)
}

pub fn encode_ppm(rgb: &Array3<u8>) -> Result<Vec<u8>> {
    let (rows, cols, c) = rgb.dim();
    if c != 3 {
        return Err(Error::Dimension(format!("PPM needs 3 channels, got {c}")));
    }
    let mut out = format!("P6\n{cols} {rows}\n255\n").into_bytes();
    out.extend(rgb.as_standard_layout().iter());
    Ok(out)
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<Array3<u8>> {
    let mut header = HeaderReader { bytes, pos: 0, path };
    let magic = header.token()?;
    if magic != "P6" {
        return Err(Error::parse(path, 0, format!("expected magic `P6`, found `{magic}`")));
    }
    let cols = header.dimension()?;
    let rows = header.dimension()?;
    header.skip_space();
    let maxval_at = header.pos;
    if header.token()? != "255" {
        return Err(Error::parse(
            path,
            maxval_at as u64,
            "only 8-bit PPM (maxval 255) is supported",
        ));
    }
    let start = header.end_of_header()?;
    let payload = payload(bytes, start, rows * cols * 3, path)?;
    Ok(Array3::from_shape_vec((rows, cols, 3), payload.to_vec()).expect("length checked"))
}

pub fn save_ppm_u8(rgb: &Array3<u8>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(rgb)?).map_err(|e| Error::io(path, e))
}

pub fn load_ppm_u8(path: impl AsRef<Path>) -> Result<Array3<u8>> {
    let path = path.as_ref();
    decode_ppm(&fs::read(path).map_err(|e| Error::io(path, e))?, path)
}

/// Quantizes `[0, 1]` reflectance to 8 bits; values that are already
/// multiples of 1/255 round-trip exactly through [`load_ppm`].
pub fn save_ppm(rgb: &Array3<f32>, path: impl AsRef<Path>) -> Result<()> {
    if let Some(v) = rgb.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("rgb value {v} outside [0, 1]")));
    }
    save_ppm_u8(&rgb.mapv(|v| (v * 255.0).round() as u8), path)
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<Array3<f32>> {
    Ok(load_ppm_u8(path)?.mapv(|v| v as f32 / 255.0))
}

fn payload<'a>(bytes: &'a [u8], start: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    let end = start + len;
    if bytes.len() < end {
        return Err(Error::parse(
            path,
            bytes.len() as u64,
            format!("truncated payload: expected {len} bytes from offset {start}"),
        ));
    }
    Ok(&bytes[start..end])
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl HeaderReader<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.pos - start < 32 {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(self.path, start as u64, "unexpected end of header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(self.path, start as u64, "header is not ASCII"))
    }

    fn dimension(&mut self) -> Result<usize> {
        let path = self.path;
        self.skip_space();
        let at = self.pos as u64;
        match self.token()?.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::parse(path, at, "image dimension must be a positive integer")),
        }
    }

    /// Exactly one whitespace byte separates the header from the payload.
    fn end_of_header(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(Error::parse(self.path, self.pos as u64, "missing header terminator")),
        }
    }
}
