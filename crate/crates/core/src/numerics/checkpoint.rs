//! Single-file parameter checkpoints.
//!
//! Layout: the 8-byte magic `MSHCKPT1`, a little-endian `u64` manifest length,
//! the JSON manifest, then the raw little-endian payload. Entry offsets are
//! relative to the start of the payload.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DType, Scalar, Tensor};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MSHCKPT1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Free-form string metadata (model config, vocabulary, ...).
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<S: Scalar> {
    pub tensors: Vec<(String, Tensor<S>)>,
    pub metadata: BTreeMap<String, String>,
}

pub fn encode<S: Scalar>(tensors: &[(&str, &Tensor<S>)], metadata: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut payload = Vec::new();
    for (name, t) in tensors {
        entries.push(ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: S::DTYPE,
            offset: payload.len() as u64,
        });
        for &v in t.data() {
            v.put_le(&mut payload);
        }
    }
    let manifest = serde_json::to_vec(&Manifest {
        entries,
        metadata: metadata.clone(),
    })?;
    let mut out = Vec::with_capacity(16 + manifest.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn parse_err(location: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        what: "checkpoint",
        location: format!("byte {location}"),
        detail: detail.into(),
    }
}

/// Decodes a checkpoint; entries stored at another precision are converted.
pub fn decode<S: Scalar>(bytes: &[u8]) -> Result<Checkpoint<S>> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(parse_err(0, "missing checkpoint magic"));
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let payload_start = 16usize
        .checked_add(mlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| parse_err(8, "manifest length exceeds file"))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[16..payload_start]).map_err(|e| parse_err(16, e.to_string()))?;
    let payload = &bytes[payload_start..];
    let mut tensors = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let n: usize = e.shape.iter().product();
        let size = e.dtype.size();
        let start = e.offset as usize;
        let end = start
            .checked_add(n * size)
            .filter(|&end| end <= payload.len())
            .ok_or_else(|| parse_err(payload_start + start, format!("payload of '{}' truncated", e.name)))?;
        let raw = &payload[start..end];
        let data: Vec<S> = match e.dtype {
            DType::F32 => raw.chunks_exact(4).map(|c| S::lit(f32::get_le(c) as f64)).collect(),
            DType::F64 => raw.chunks_exact(8).map(|c| S::lit(f64::get_le(c))).collect(),
        };
        tensors.push((e.name.clone(), Tensor::new(e.shape.clone(), data)?));
    }
    Ok(Checkpoint {
        tensors,
        metadata: manifest.metadata,
    })
}

pub fn save<S: Scalar>(
    path: impl AsRef<Path>,
    tensors: &[(&str, &Tensor<S>)],
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(tensors, metadata)?).map_err(|e| Error::io(path, e))
}

pub fn load<S: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<S>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(vals in proptest::collection::vec(-1e30f32..1e30, 1..64), extra in proptest::collection::vec(-1e30f64..1e30, 0..8)) {
            let a = Tensor::new([vals.len()], vals.clone()).unwrap();
            let b = Tensor::new([1, extra.len()], extra.iter().map(|&v| v as f32).collect()).unwrap();
            let mut meta = BTreeMap::new();
            meta.insert("k".to_string(), "v".to_string());
            let bytes = encode(&[("a", &a), ("b", &b)], &meta).unwrap();
            let back: Checkpoint<f32> = decode(&bytes).unwrap();
            prop_assert_eq!(&back.metadata, &meta);
            prop_assert_eq!(back.tensors[0].1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            vals.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.tensors[1].1.shape(), &[1, extra.len()]);
            let again = encode(&[("a", &back.tensors[0].1), ("b", &back.tensors[1].1)], &back.metadata).unwrap();
            prop_assert_eq!(again, bytes);
        }
    }

    #[test]
    fn f64_payload_is_bit_exact() {
        let t = Tensor::<f64>::new([3], vec![0.1, -2.5e-300, 7.0]).unwrap();
        let bytes = encode(&[("w", &t)], &BTreeMap::new()).unwrap();
        let back: Checkpoint<f64> = decode(&bytes).unwrap();
        assert_eq!(back.tensors[0].1, t);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let t = Tensor::<f32>::zeros([10]);
        let bytes = encode(&[("w", &t)], &BTreeMap::new()).unwrap();
        let err = decode::<f32>(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(decode::<f32>(b"garbage garbage!").is_err());
    }
}
