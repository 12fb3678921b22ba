//! Binary tensor container used for weights, calibration inputs and raw
//! detector outputs.
//!
//! Each record is a UTF-8 JSON header line
//! `{"tensor_id": "...", "dtype": "f32"|"i8"|"i32", "shape": [..]}` terminated
//! by `\n`, followed immediately by the row-major little-endian payload.
//! Records repeat until end of file.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::TensorShape;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I8,
    I32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::I8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I8(Vec<i8>),
    I32(Vec<i32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::I8(_) => DType::I8,
            TensorData::I32(_) => DType::I32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::I8(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub id: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl StoredTensor {
    pub fn f32(id: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        StoredTensor { id: id.into(), shape, data: TensorData::F32(data) }
    }

    pub fn as_f32(&self) -> Result<&[f32], ContainerError> {
        match &self.data {
            TensorData::F32(v) => Ok(v),
            other => Err(ContainerError::DType { id: self.id.clone(), expected: DType::F32, got: other.dtype() }),
        }
    }

    /// Interprets a rank-3 record as an activation tensor.
    pub fn to_activation(&self) -> Result<Tensor<f32>, ContainerError> {
        match self.shape.as_slice() {
            &[h, w, c] => Ok(Tensor::new(TensorShape::new(h, w, c), self.as_f32()?.to_vec())),
            _ => Err(ContainerError::Rank { id: self.id.clone(), expected: 3, got: self.shape.len() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContainerError {
    #[error("record {index}: malformed header: {message}")]
    Header { index: usize, message: String },
    #[error("tensor `{id}`: payload truncated ({expected} bytes expected, {got} available)")]
    Truncated { id: String, expected: usize, got: usize },
    #[error("tensor `{id}`: expected dtype {expected:?}, found {got:?}")]
    DType { id: String, expected: DType, got: DType },
    #[error("tensor `{id}`: expected rank {expected}, found {got}")]
    Rank { id: String, expected: usize, got: usize },
    #[error("tensor `{0}` not found")]
    Missing(String),
    #[error("tensor `{id}`: shape {shape:?} does not match {len} elements")]
    ShapeLength { id: String, shape: Vec<usize>, len: usize },
}

#[derive(Serialize, Deserialize)]
struct Header {
    tensor_id: String,
    dtype: DType,
    shape: Vec<usize>,
}

/// An ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub tensors: Vec<StoredTensor>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tensor: StoredTensor) {
        self.tensors.push(tensor);
    }

    pub fn get(&self, id: &str) -> Option<&StoredTensor> {
        self.tensors.iter().find(|t| t.id == id)
    }

    pub fn require(&self, id: &str) -> Result<&StoredTensor, ContainerError> {
        self.get(id).ok_or_else(|| ContainerError::Missing(id.to_string()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ContainerError> {
        let mut out = Vec::new();
        for t in &self.tensors {
            let n: usize = t.shape.iter().product();
            if n != t.data.len() {
                return Err(ContainerError::ShapeLength { id: t.id.clone(), shape: t.shape.clone(), len: t.data.len() });
            }
            let header = Header { tensor_id: t.id.clone(), dtype: t.data.dtype(), shape: t.shape.clone() };
            serde_json::to_writer(&mut out, &header).expect("header serializes");
            out.push(b'\n');
            match &t.data {
                TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::I8(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        Ok(out)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, ContainerError> {
        let mut reader = BufReader::new(reader);
        let mut file = TensorFile::new();
        let mut line = Vec::new();
        loop {
            line.clear();
            let index = file.tensors.len();
            let n = reader.read_until(b'\n', &mut line).map_err(|e| ContainerError::Header { index, message: e.to_string() })?;
            if n == 0 {
                break;
            }
            let header: Header = serde_json::from_slice(&line).map_err(|e| ContainerError::Header { index, message: e.to_string() })?;
            let count: usize = header.shape.iter().product();
            let bytes = count * header.dtype.size();
            let mut payload = vec![0u8; bytes];
            let mut got = 0;
            while got < bytes {
                let k = reader.read(&mut payload[got..]).map_err(|e| ContainerError::Header { index, message: e.to_string() })?;
                if k == 0 {
                    return Err(ContainerError::Truncated { id: header.tensor_id, expected: bytes, got });
                }
                got += k;
            }
            let data = match header.dtype {
                DType::F32 => TensorData::F32(payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect()),
                DType::I8 => TensorData::I8(payload.iter().map(|&b| b as i8).collect()),
                DType::I32 => TensorData::I32(payload.chunks_exact(4).map(|b| i32::from_le_bytes(b.try_into().unwrap())).collect()),
            };
            file.push(StoredTensor { id: header.tensor_id, shape: header.shape, data });
        }
        Ok(file)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        TensorFile::from_reader(f).map_err(|e| crate::error::schema_error(path, e))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}
