//! Binary container of named little-endian arrays.
//!
//! ```text
//! magic "LLAB" 0x01 | u32 count | count x array | u64 FNV-1a of everything before
//! array = u32 name_len | name | u8 dtype | u8 ndim | ndim x u32 dim | data
//! ```
//!
//! dtype is 0 for f32, 1 for u8 and 2 for f64.

use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"LLAB\x01";

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F32(ArrayD<f32>),
    U8(ArrayD<u8>),
    F64(ArrayD<f64>),
}

impl ArrayData {
    fn dtype(&self) -> u8 {
        match self {
            ArrayData::F32(_) => 0,
            ArrayData::U8(_) => 1,
            ArrayData::F64(_) => 2,
        }
    }

    fn shape(&self) -> &[usize] {
        match self {
            ArrayData::F32(a) => a.shape(),
            ArrayData::U8(a) => a.shape(),
            ArrayData::F64(a) => a.shape(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, data: ArrayData) -> Self {
        Self {
            name: name.into(),
            data,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn encode(arrays: &[NamedArray]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in arrays {
        out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
        out.extend_from_slice(a.name.as_bytes());
        out.push(a.data.dtype());
        let shape = a.data.shape();
        out.push(shape.len() as u8);
        for d in shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        match &a.data {
            ArrayData::F32(x) => x.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            ArrayData::U8(x) => out.extend(x.iter()),
            ArrayData::F64(x) => x.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| format!("truncated at byte {} (wanted {n} more)", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Vec<NamedArray>, String> {
    if bytes.len() < MAGIC.len() + 4 + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err("bad magic or file too short".into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let mut r = Reader {
        bytes: body,
        pos: MAGIC.len(),
    };
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| format!("array {i}: name is not UTF-8"))?
            .to_string();
        let dtype = r.u8()?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let data = match dtype {
            0 => {
                let raw = r.take(len * 4)?;
                let v = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                ArrayData::F32(ArrayD::from_shape_vec(IxDyn(&shape), v).map_err(|e| e.to_string())?)
            }
            1 => {
                let raw = r.take(len)?.to_vec();
                ArrayData::U8(ArrayD::from_shape_vec(IxDyn(&shape), raw).map_err(|e| e.to_string())?)
            }
            2 => {
                let raw = r.take(len * 8)?;
                let v = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                ArrayData::F64(ArrayD::from_shape_vec(IxDyn(&shape), v).map_err(|e| e.to_string())?)
            }
            d => return Err(format!("array {name}: unknown dtype {d}")),
        };
        out.push(NamedArray { name, data });
    }
    if r.pos != body.len() {
        return Err(format!("{} trailing bytes", body.len() - r.pos));
    }
    if fnv1a(body) != stored {
        return Err("checksum mismatch".into());
    }
    Ok(out)
}

pub fn write(path: &Path, arrays: &[NamedArray]) -> Result<()> {
    std::fs::write(path, encode(arrays)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<NamedArray>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|d| Error::parse(path, d))
}

/// Look up an array by name and convert it to the requested type and
/// dimensionality.
pub fn take<T, D>(arrays: &[NamedArray], name: &str) -> std::result::Result<ndarray::Array<T, D>, String>
where
    T: Element,
    D: ndarray::Dimension,
{
    let a = arrays
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| format!("missing array {name}"))?;
    let dynamic = T::from_data(&a.data).ok_or_else(|| format!("array {name} has the wrong dtype"))?;
    dynamic
        .into_dimensionality::<D>()
        .map_err(|e| format!("array {name}: {e}"))
}

pub trait Element: Sized + Clone {
    fn from_data(d: &ArrayData) -> Option<ArrayD<Self>>;
}

impl Element for f32 {
    fn from_data(d: &ArrayData) -> Option<ArrayD<f32>> {
        match d {
            ArrayData::F32(a) => Some(a.clone()),
            _ => None,
        }
    }
}

impl Element for u8 {
    fn from_data(d: &ArrayData) -> Option<ArrayD<u8>> {
        match d {
            ArrayData::U8(a) => Some(a.clone()),
            _ => None,
        }
    }
}

impl Element for f64 {
    fn from_data(d: &ArrayData) -> Option<ArrayD<f64>> {
        match d {
            ArrayData::F64(a) => Some(a.clone()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<NamedArray> {
        vec![
            NamedArray::new("a", ArrayData::F32(ArrayD::from_shape_fn(IxDyn(&[2, 3]), |i| i[0] as f32 - 0.1 * i[1] as f32))),
            NamedArray::new("m", ArrayData::U8(ArrayD::from_elem(IxDyn(&[4]), 1))),
            NamedArray::new("w", ArrayData::F64(ArrayD::from_elem(IxDyn(&[1, 1, 1, 2]), std::f64::consts::PI))),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let a = sample();
        assert_eq!(decode(&encode(&a)).unwrap(), a);
    }

    #[test]
    fn truncation_and_corruption_are_errors() {
        let bytes = encode(&sample());
        for cut in [0, 5, 12, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err());
        }
        let mut flipped = bytes.clone();
        flipped[20] ^= 0x40;
        assert!(decode(&flipped).is_err());
    }
}
