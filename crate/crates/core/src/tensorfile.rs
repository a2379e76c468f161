//! Named-tensor container used for network weights.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes   b"VIPT"
//! version    u32       1
//! count      u32       number of tensors N
//! N headers, each:
//!   name_len u16
//!   name     name_len bytes, UTF-8
//!   dtype    u8        0 = float32 little-endian
//!   ndim     u8
//!   dims     ndim × u64
//! N payloads, in header order, each prod(dims) × 4 bytes, row-major
//! ```
//!
//! Tensors are written in lexicographic name order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernels::ConvWeights;

const MAGIC: &[u8; 4] = b"VIPT";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Weights(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorFile {
    tensors: BTreeMap<String, Tensor>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Weights(format!("missing tensor `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Stores `name.weight` (`[out, in, kh, kw]`) and `name.bias` (`[out]`).
    pub fn insert_conv(&mut self, name: &str, conv: &ConvWeights) {
        let (kh, kw) = conv.kernel_size();
        let shape = vec![conv.out_channels(), conv.in_channels(), kh, kw];
        self.insert(
            format!("{name}.weight"),
            Tensor::from_f64(shape, conv.weights()).expect("consistent"),
        );
        self.insert(
            format!("{name}.bias"),
            Tensor::from_f64(vec![conv.out_channels()], conv.bias()).expect("consistent"),
        );
    }

    pub fn conv(&self, name: &str) -> Result<ConvWeights> {
        let w = self.get(&format!("{name}.weight"))?;
        let b = self.get(&format!("{name}.bias"))?;
        let [o, i, kh, kw] = w.shape[..] else {
            return Err(Error::Weights(format!(
                "`{name}.weight` must be 4-D, got {:?}",
                w.shape
            )));
        };
        ConvWeights::new(o, i, kh, kw, w.to_f64(), b.to_f64()).map_err(|e| Error::Weights(format!("`{name}`: {e}")))
    }

    /// Vector tensor with an expected length.
    pub fn vector(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        let t = self.get(name)?;
        if t.shape != [len] {
            return Err(Error::Weights(format!("`{name}` expected [{len}], got {:?}", t.shape)));
        }
        Ok(t.to_f64())
    }

    /// 2-D tensor returned with its shape.
    pub fn matrix(&self, name: &str) -> Result<(usize, usize, Vec<f64>)> {
        let t = self.get(name)?;
        let [r, c] = t.shape[..] else {
            return Err(Error::Weights(format!("`{name}` must be 2-D, got {:?}", t.shape)));
        };
        Ok((r, c, t.to_f64()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Weights("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut r)?);
        if version != VERSION {
            return Err(Error::Weights(format!("unsupported version {version}")));
        }
        let count = u32::from_le_bytes(take(&mut r)?) as usize;
        let mut headers = Vec::with_capacity(count);
        for _ in 0..count {
            let len = u16::from_le_bytes(take(&mut r)?) as usize;
            let mut name = vec![0u8; len];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Weights("tensor name is not UTF-8".into()))?;
            let [dtype, ndim] = take::<2>(&mut r)?;
            if dtype != DTYPE_F32 {
                return Err(Error::Weights(format!("`{name}`: unsupported dtype {dtype}")));
            }
            let mut shape = Vec::with_capacity(ndim as usize);
            for _ in 0..ndim {
                shape.push(u64::from_le_bytes(take(&mut r)?) as usize);
            }
            headers.push((name, shape));
        }
        let mut file = TensorFile::new();
        for (name, shape) in headers {
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let v = f32::from_le_bytes(take(&mut r)?);
                if !v.is_finite() {
                    return Err(Error::Weights(format!("`{name}` holds a non-finite value")));
                }
                data.push(v);
            }
            file.insert(name, Tensor { shape, data });
        }
        if !r.is_empty() {
            return Err(Error::Weights(format!("{} trailing bytes", r.len())));
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Weights("truncated weights file".into()))
}

fn take<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_header_layout() {
        let mut f = TensorFile::new();
        f.insert("ab", Tensor::new(vec![2], vec![1.0, -2.5]).unwrap());
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..4], b"VIPT");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..14], &2u16.to_le_bytes());
        assert_eq!(&bytes[14..16], b"ab");
        assert_eq!(bytes[16], 0);
        assert_eq!(bytes[17], 1);
        assert_eq!(&bytes[18..26], &2u64.to_le_bytes());
        assert_eq!(&bytes[26..30], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[30..34], &(-2.5f32).to_le_bytes());
        assert_eq!(bytes.len(), 34);
    }

    #[test]
    fn rejects_truncation_and_trailing() {
        let mut f = TensorFile::new();
        f.insert("x", Tensor::new(vec![1, 3], vec![0.0; 3]).unwrap());
        let bytes = f.to_bytes();
        assert!(TensorFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(TensorFile::from_bytes(&extra).is_err());
        assert_eq!(TensorFile::from_bytes(&bytes).unwrap(), f);
    }

    #[test]
    fn conv_shape_checked() {
        let mut f = TensorFile::new();
        f.insert("c.weight", Tensor::new(vec![2, 1, 3], vec![0.0; 6]).unwrap());
        f.insert("c.bias", Tensor::new(vec![2], vec![0.0; 2]).unwrap());
        assert!(f.conv("c").is_err());
        assert!(f.conv("missing").is_err());
    }
}
