//! Dense row-major `f64` arrays and the TNS1 container.
//!
//! TNS1 layout (little-endian, packed):
//!
//! ```text
//! "TNS1" | u8 dtype | u8 ndim | ndim x u32 dims | payload
//! ```
//!
//! dtype `1` is `f32`, dtype `2` is `f64`. Network checkpoints use `f64` so
//! that reloading reproduces parameters bit for bit; exported stacks use `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TNS_MAGIC: &[u8; 4] = b"TNS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            other => Err(Error::format("TNS1", format!("unknown dtype code {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Height and width of the two trailing axes.
    pub fn hw(&self) -> (usize, usize) {
        let n = self.shape.len();
        match n {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => (self.shape[n - 2], self.shape[n - 1]),
        }
    }

    pub fn get2(&self, y: usize, x: usize) -> f64 {
        let (_, w) = self.hw();
        self.data[y * w + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape() != first.shape() {
                return Err(Error::Shape(format!(
                    "stack members differ: {:?} vs {:?}",
                    first.shape(),
                    t.shape()
                )));
            }
            data.extend_from_slice(t.data());
        }
        Tensor::new(shape, data)
    }

    pub fn write_tns<W: Write>(&self, mut w: W, dtype: DType) -> Result<()> {
        let wrap = |e| Error::io("<tns1 stream>", e);
        if self.shape.len() > u8::MAX as usize {
            return Err(Error::format("TNS1", "too many dimensions"));
        }
        w.write_all(TNS_MAGIC).map_err(wrap)?;
        w.write_all(&[dtype.code(), self.shape.len() as u8])
            .map_err(wrap)?;
        for &d in &self.shape {
            let d = u32::try_from(d).map_err(|_| Error::format("TNS1", "dimension exceeds u32"))?;
            w.write_all(&d.to_le_bytes()).map_err(wrap)?;
        }
        match dtype {
            DType::F32 => {
                for &v in &self.data {
                    w.write_all(&(v as f32).to_le_bytes()).map_err(wrap)?;
                }
            }
            DType::F64 => {
                for &v in &self.data {
                    w.write_all(&v.to_le_bytes()).map_err(wrap)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_tns<R: Read>(mut r: R) -> Result<(Tensor, DType)> {
        let short = |_| Error::format("TNS1", "truncated stream");
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(short)?;
        if &magic != TNS_MAGIC {
            return Err(Error::format("TNS1", "bad magic"));
        }
        let mut head = [0u8; 2];
        r.read_exact(&mut head).map_err(short)?;
        let dtype = DType::from_code(head[0])?;
        let ndim = head[1] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(short)?;
            shape.push(u32::from_le_bytes(b) as usize);
        }
        let numel: usize = shape.iter().product();
        let width = match dtype {
            DType::F32 => 4,
            DType::F64 => 8,
        };
        let mut payload = vec![0u8; numel * width];
        r.read_exact(&mut payload).map_err(short)?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)
            .map_err(|e| Error::io("<tns1 stream>", e))?
            != 0
        {
            return Err(Error::format("TNS1", "trailing bytes after payload"));
        }
        let data = match dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            DType::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        Ok((Tensor { shape, data }, dtype))
    }

    pub fn save(&self, path: &Path, dtype: DType) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_tns(&mut w, dtype)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Tensor, DType)> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Tensor::read_tns(BufReader::new(file))
    }
}
