//! Binary tensor files.
//!
//! Layout (little-endian, no padding):
//!
//! ```text
//! "FTEN" | u16 version = 1 | u8 dtype = 0 (f32) | u8 ndim | ndim x u64 dims | f32 payload
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FTEN";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;

const HEADER_FIXED: usize = 4 + 2 + 1 + 1;

/// Dense row-major `f32` tensor. Every element is finite and the payload
/// length always equals the product of `dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Validation("tensor must have at least one axis".into()));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::Validation(format!("too many axes: {}", dims.len())));
        }
        let expected = element_count(&dims)?;
        if expected != data.len() {
            return Err(Error::Length {
                expected,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite element {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n = element_count(&dims)?;
        Self::new(dims, vec![0.0; n])
    }

    pub fn from_vec(values: &[f64]) -> Result<Self> {
        Self::new(vec![values.len()], values.iter().map(|&x| x as f32).collect())
    }

    pub fn from_matrix(m: ArrayView2<'_, f64>) -> Result<Self> {
        let (r, c) = m.dim();
        Self::new(vec![r, c], m.iter().map(|&x| x as f32).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_vec_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&x| f64::from(x)).collect()
    }

    pub fn to_array1(&self) -> Result<Array1<f64>> {
        if self.dims.len() != 1 {
            return Err(Error::Shape(format!("expected a vector, got dims {:?}", self.dims)));
        }
        Ok(Array1::from(self.to_vec_f64()))
    }

    pub fn to_array2(&self) -> Result<Array2<f64>> {
        if self.dims.len() != 2 {
            return Err(Error::Shape(format!("expected a matrix, got dims {:?}", self.dims)));
        }
        Array2::from_shape_vec((self.dims[0], self.dims[1]), self.to_vec_f64())
            .map_err(|e| Error::Shape(e.to_string()))
    }

    /// Interprets a rank-2 tensor as a matrix, or averages a rank-3 tensor
    /// over its middle axis (`[L, T, D]` -> `[L, D]`).
    pub fn to_matrix_mean_middle(&self) -> Result<Array2<f64>> {
        match self.dims.as_slice() {
            [_, _] => self.to_array2(),
            &[l, t, d] => {
                if t == 0 {
                    return Err(Error::Shape("cannot average over an empty time axis".into()));
                }
                let mut out = Array2::<f64>::zeros((l, d));
                for li in 0..l {
                    for ti in 0..t {
                        let base = (li * t + ti) * d;
                        for di in 0..d {
                            out[[li, di]] += f64::from(self.data[base + di]);
                        }
                    }
                }
                out /= t as f64;
                Ok(out)
            }
            other => Err(Error::Shape(format!("expected rank 2 or 3, got dims {other:?}"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_FIXED + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_FIXED {
            return Err(Error::Format("file shorter than tensor header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        if bytes[6] != DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dtype code {}", bytes[6])));
        }
        let ndim = bytes[7] as usize;
        let dims_end = HEADER_FIXED + 8 * ndim;
        if bytes.len() < dims_end {
            return Err(Error::Format("truncated dimension header".into()));
        }
        let dims = bytes[HEADER_FIXED..dims_end]
            .chunks_exact(8)
            .map(|c| {
                let d = u64::from_le_bytes(c.try_into().expect("chunk of 8"));
                usize::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))
            })
            .collect::<Result<Vec<_>>>()?;
        let payload = &bytes[dims_end..];
        let expected = element_count(&dims)?;
        if !payload.len().is_multiple_of(4) || payload.len() / 4 != expected {
            return Err(Error::Length {
                expected,
                found: payload.len() / 4,
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        Self::new(dims, data)
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Validation(format!("dims {dims:?} overflow")))
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&t.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}
