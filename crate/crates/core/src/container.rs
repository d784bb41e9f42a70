//! Binary tensor container shared by spectra caches, checkpoints and
//! functional-map dumps.
//!
//! Layout: the 8-byte magic `SPMATCH1`, a little-endian `u64` header length,
//! a UTF-8 JSON header object, then the payload. The header carries the
//! caller's metadata plus a `tensors` directory of `{name, rows, cols,
//! offset}` records; `offset` counts bytes from the start of the payload and
//! every tensor is stored row-major as little-endian `f64`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const MAGIC: &[u8; 8] = b"SPMATCH1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct Container {
    pub header: Map<String, Value>,
    pub tensors: Vec<(String, DMatrix<f64>)>,
}

impl Container {
    pub fn new(header: Map<String, Value>) -> Self {
        Container {
            header,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, m: DMatrix<f64>) {
        self.tensors.push((name.into(), m));
    }

    pub fn get(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Container(format!("missing tensor {name:?}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = self.header.clone();
        let mut dir = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, m) in &self.tensors {
            dir.push(TensorEntry {
                name: name.clone(),
                rows: m.nrows(),
                cols: m.ncols(),
                offset,
            });
            offset += m.len() * 8;
        }
        header.insert("tensors".into(), serde_json::to_value(dir)?);
        let json = serde_json::to_vec(&Value::Object(header))?;
        let mut out = Vec::with_capacity(16 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, m) in &self.tensors {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    out.extend_from_slice(&m[(r, c)].to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Container("bad magic".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let payload_start = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Container("truncated header".into()))?;
        let mut header: Map<String, Value> = match serde_json::from_slice(&bytes[16..payload_start])? {
            Value::Object(m) => m,
            _ => return Err(Error::Container("header is not a JSON object".into())),
        };
        let dir: Vec<TensorEntry> = serde_json::from_value(
            header
                .remove("tensors")
                .ok_or_else(|| Error::Container("missing tensor directory".into()))?,
        )?;
        let payload = &bytes[payload_start..];
        let mut tensors = Vec::with_capacity(dir.len());
        for e in dir {
            let len = e.rows * e.cols * 8;
            let chunk = payload
                .get(e.offset..e.offset + len)
                .ok_or_else(|| Error::Container(format!("tensor {:?} out of bounds", e.name)))?;
            let vals: Vec<f64> = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            tensors.push((e.name, DMatrix::from_row_slice(e.rows, e.cols, &vals)));
        }
        Ok(Container { header, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Container::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_row_major_le() {
        let mut c = Container::new(Map::new());
        c.push("m", DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let bytes = c.to_bytes().unwrap();
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let payload = &bytes[16 + hlen..];
        assert_eq!(f64::from_le_bytes(payload[8..16].try_into().unwrap()), 2.0);
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back.get("m").unwrap(), c.get("m").unwrap());
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut c = Container::new(Map::new());
        c.push("m", DMatrix::zeros(3, 3));
        let bytes = c.to_bytes().unwrap();
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Container::from_bytes(b"nope").is_err());
    }
}
