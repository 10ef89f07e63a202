//! Raw little-endian `f32` attribution grids and concise sets.

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::factorize::ConciseSet;
use crate::tensor::Tensor;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated raw data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(4).ok_or_else(|| Error::Format("raw size overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes in raw data",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// `u32 h`, `u32 w`, then `h*w` row-major `f32` values.
pub fn encode_attribution(map: &Tensor) -> Result<Vec<u8>> {
    let &[h, w] = map.shape() else {
        return Err(Error::Shape {
            expected: vec![0, 0],
            actual: map.shape().to_vec(),
        });
    };
    let mut out = Vec::with_capacity(8 + 4 * h * w);
    put_u32(&mut out, h);
    put_u32(&mut out, w);
    put_f32s(&mut out, map.data());
    Ok(out)
}

pub fn decode_attribution(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader { bytes, pos: 0 };
    let (h, w) = (r.u32()?, r.u32()?);
    let data = r.f32s(h * w)?;
    r.finish()?;
    Tensor::new(vec![h, w], data)
}

/// `u32 id_len`, id bytes, `u32 z`, `u32 h`, `u32 w`, `u32 rows`, then `z`
/// grids of `h*w` `f32` and the `rows x z` mixing matrix.
pub fn encode_concise_set(cs: &ConciseSet) -> Result<Vec<u8>> {
    let (h, w) = match cs.maps.first().map(Tensor::shape) {
        Some(&[h, w]) => (h, w),
        _ => return Err(Error::Empty("concise set has no maps")),
    };
    let z = cs.maps.len();
    let rows = cs.mixing.shape()[0];
    if cs.mixing.shape() != [rows, z] {
        return Err(Error::Shape {
            expected: vec![rows, z],
            actual: cs.mixing.shape().to_vec(),
        });
    }
    let mut out = Vec::new();
    put_u32(&mut out, cs.image_id.len());
    out.extend_from_slice(cs.image_id.as_bytes());
    for v in [z, h, w, rows] {
        put_u32(&mut out, v);
    }
    for m in &cs.maps {
        if m.shape() != [h, w] {
            return Err(Error::Shape {
                expected: vec![h, w],
                actual: m.shape().to_vec(),
            });
        }
        put_f32s(&mut out, m.data());
    }
    put_f32s(&mut out, cs.mixing.data());
    Ok(out)
}

pub fn decode_concise_set(bytes: &[u8]) -> Result<ConciseSet> {
    let mut r = Reader { bytes, pos: 0 };
    let id_len = r.u32()?;
    let image_id = String::from_utf8(r.take(id_len)?.to_vec())
        .map_err(|_| Error::Format("image id is not UTF-8".into()))?;
    let (z, h, w, rows) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let maps = (0..z)
        .map(|_| Tensor::new(vec![h, w], r.f32s(h * w)?))
        .collect::<Result<Vec<_>>>()?;
    let mixing = Tensor::new(vec![rows, z], r.f32s(rows * z)?)?;
    r.finish()?;
    Ok(ConciseSet {
        image_id,
        maps,
        mixing,
    })
}

pub fn read_attribution(path: &Path) -> Result<Tensor> {
    decode_attribution(&read_bytes(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_attribution(path: &Path, map: &Tensor) -> Result<()> {
    write_bytes(path, &encode_attribution(map)?)
}

pub fn read_concise_set(path: &Path) -> Result<ConciseSet> {
    decode_concise_set(&read_bytes(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_concise_set(path: &Path, cs: &ConciseSet) -> Result<()> {
    write_bytes(path, &encode_concise_set(cs)?)
}
