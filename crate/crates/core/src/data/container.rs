// SPDX-License-Identifier: Apache-2.0

//! The `HSD1` tensor container.
//!
//! Layout:
//!
//! ```text
//! 0..4      magic "HSD1"
//! 4..8      header length H, u32 little-endian
//! 8..8+H    UTF-8 JSON header, space-padded so the payload starts 64-byte aligned
//! 8+H..     payload: raw little-endian f32 blocks
//! ```
//!
//! The header is `{"tensors":[{"name","dtype":"f32","shape":[..],"offset":N}],"metadata":{..}}`
//! where `offset` is relative to the payload start and a multiple of 64.
//! `metadata` is optional free-form JSON.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::linalg;
use crate::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 4] = b"HSD1";
pub const CONTAINER_ALIGN: usize = 64;

#[derive(Clone, Debug)]
pub struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        match element_count(&shape) {
            Some(n) if n == data.len() => Ok(Self { name, shape, data }),
            _ => Err(Error::Container(format!(
                "tensor {name:?}: shape {shape:?} does not match {} values",
                data.len()
            ))),
        }
    }

    pub fn from_matrix(name: impl Into<String>, m: &DMatrix<f32>) -> Self {
        Self {
            name: name.into(),
            shape: vec![m.nrows(), m.ncols()],
            data: linalg::to_row_major(m),
        }
    }

    pub fn from_vector(name: impl Into<String>, v: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            shape: vec![v.len()],
            data: v,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Views a rank-2 tensor as a matrix.
    pub fn to_matrix(&self) -> Result<DMatrix<f32>> {
        match self.shape.as_slice() {
            &[r, c] => Ok(linalg::from_row_major(r, c, &self.data)),
            s => Err(Error::Dimension(format!(
                "tensor {:?} has shape {s:?}, expected a matrix",
                self.name
            ))),
        }
    }

    /// Bitwise equality, so NaN payloads compare equal to themselves.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.name == other.name
            && self.shape == other.shape
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Clone, Debug, Default)]
pub struct TensorContainer {
    tensors: Vec<Tensor>,
    metadata: Option<Value>,
}

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    tensors: Vec<HeaderEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<Value>,
}

fn align_up(x: usize) -> usize {
    x.div_ceil(CONTAINER_ALIGN) * CONTAINER_ALIGN
}

impl TensorContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_metadata(metadata: Value) -> Self {
        Self {
            tensors: Vec::new(),
            metadata: Some(metadata),
        }
    }

    pub fn push(&mut self, t: Tensor) -> Result<()> {
        if self.get(&t.name).is_some() {
            return Err(Error::Container(format!("duplicate tensor name {:?}", t.name)));
        }
        self.tensors.push(t);
        Ok(())
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Container(format!("missing tensor {name:?}")))
    }

    pub fn metadata(&self) -> Option<&Value> {
        self.metadata.as_ref()
    }

    pub fn set_metadata(&mut self, metadata: Option<Value>) {
        self.metadata = metadata;
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn bit_eq(&self, other: &TensorContainer) -> bool {
        self.metadata == other.metadata
            && self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.bit_eq(b))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0usize;
        for t in &self.tensors {
            offset = align_up(offset);
            entries.push(HeaderEntry {
                name: t.name.clone(),
                dtype: "f32".into(),
                shape: t.shape.clone(),
                offset,
            });
            offset += t.data.len() * 4;
        }
        let header = Header {
            tensors: entries,
            metadata: self.metadata.clone(),
        };
        let mut json = serde_json::to_vec(&header).expect("header serialisation cannot fail");
        let padded = align_up(8 + json.len()) - 8;
        json.resize(padded, b' ');

        let mut out = Vec::with_capacity(8 + json.len() + offset);
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let payload_start = out.len();
        for (t, e) in self.tensors.iter().zip(&header.tensors) {
            out.resize(payload_start + e.offset, 0);
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Container("file shorter than the fixed preamble".into()));
        }
        if &bytes[..4] != CONTAINER_MAGIC {
            return Err(Error::Container("bad magic, expected HSD1".into()));
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let payload_start = 8usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Container("truncated header".into()))?;
        let header_text = std::str::from_utf8(&bytes[8..payload_start])
            .map_err(|_| Error::Container("header is not UTF-8".into()))?;
        let header: Header = serde_json::from_str(header_text)
            .map_err(|e| Error::Container(format!("header JSON: {e}")))?;
        let payload = &bytes[payload_start..];

        let mut names = BTreeSet::new();
        let mut spans = Vec::with_capacity(header.tensors.len());
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            if e.dtype != "f32" {
                return Err(Error::Container(format!(
                    "tensor {:?}: unsupported dtype {:?}",
                    e.name, e.dtype
                )));
            }
            if !names.insert(e.name.clone()) {
                return Err(Error::Container(format!("duplicate tensor name {:?}", e.name)));
            }
            if e.offset % CONTAINER_ALIGN != 0 {
                return Err(Error::Container(format!(
                    "tensor {:?}: offset {} is not {CONTAINER_ALIGN}-byte aligned",
                    e.name, e.offset
                )));
            }
            let count = element_count(&e.shape).ok_or_else(|| {
                Error::Container(format!("tensor {:?}: shape overflows", e.name))
            })?;
            let end = count
                .checked_mul(4)
                .and_then(|b| b.checked_add(e.offset))
                .ok_or_else(|| Error::Container(format!("tensor {:?}: size overflows", e.name)))?;
            if end > payload.len() {
                return Err(Error::Container(format!(
                    "truncated payload: tensor {:?} needs bytes up to {end}, payload has {}",
                    e.name,
                    payload.len()
                )));
            }
            spans.push((e.offset, end, e.name.clone()));
            let data = payload[e.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        spans.sort();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::Container(format!(
                    "shape/size mismatch: tensors {:?} and {:?} overlap",
                    w[0].2, w[1].2
                )));
            }
        }
        Ok(Self {
            tensors,
            metadata: header.metadata,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}
