//! Binary PGM (`P5`) and PPM (`P6`) with a maxval of 255.

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::evalbench::Grid8;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub data: Vec<u8>,
}

impl RgbImage {
    /// Channel-first `(3, h, w)` tensor with values in `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.width * self.height;
        let mut out = vec![0.0; 3 * plane];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = px[c] as f64 / 255.0;
            }
        }
        Tensor::from_parts(vec![3, self.height, self.width], out)
    }

    /// Inverse of [`RgbImage::to_tensor`], rounding to the nearest level.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let &[3, height, width] = t.shape() else {
            return Err(Error::Shape {
                expected: vec![3, 0, 0],
                actual: t.shape().to_vec(),
            });
        };
        let plane = width * height;
        let mut data = vec![0u8; 3 * plane];
        for p in 0..plane {
            for c in 0..3 {
                data[3 * p + c] = (t.data()[c * plane + p] * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
        Ok(Self { width, height, data })
    }
}

impl From<Grid8> for GrayImage {
    fn from(g: Grid8) -> Self {
        Self {
            width: g.width,
            height: g.height,
            data: g.data,
        }
    }
}

fn header(magic: &str, width: usize, height: usize) -> Vec<u8> {
    format!("{magic}\n{width} {height}\n255\n").into_bytes()
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = header("P5", img.width, img.height);
    out.extend_from_slice(&img.data);
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = header("P6", img.width, img.height);
    out.extend_from_slice(&img.data);
    out
}

/// Parses a netpbm header, returning (width, height, offset of pixel data).
fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<(usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::Format(format!(
            "expected {} netpbm data",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Whitespace and `#` comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated netpbm header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Format("netpbm header value out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("missing whitespace after netpbm maxval".into()));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}; only 255 is read")));
    }
    Ok((width, height, pos + 1))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let (width, height, offset) = parse_header(bytes, b"P5")?;
    let data = bytes
        .get(offset..offset + width * height)
        .ok_or_else(|| Error::Format("truncated PGM pixel data".into()))?
        .to_vec();
    Ok(GrayImage { width, height, data })
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let (width, height, offset) = parse_header(bytes, b"P6")?;
    let data = bytes
        .get(offset..offset + 3 * width * height)
        .ok_or_else(|| Error::Format("truncated PPM pixel data".into()))?
        .to_vec();
    Ok(RgbImage { width, height, data })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&read_bytes(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    decode_ppm(&read_bytes(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    write_bytes(path, &encode_pgm(img))
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    write_bytes(path, &encode_ppm(img))
}
