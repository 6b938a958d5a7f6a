use std::path::Path;

use super::config::EMBEDDING_DIM;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::tensor::{decode, encode, DType, ParamStore, Tensor, MAGIC};

/// Name of the tensor holding the vector in container-format embedding files.
pub const EMBEDDING_TENSOR: &str = "embedding";

/// Size of a raw embedding file: 192 little-endian f32 values.
pub const RAW_EMBEDDING_BYTES: usize = EMBEDDING_DIM * 4;

/// Unit-norm speaker vector conditioning the personalized variants.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    values: Vec<f64>,
}

impl SpeakerEmbedding {
    /// Validates and L2-normalizes `values`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != EMBEDDING_DIM {
            return Err(Error::domain(format!(
                "embedding has {} values, expected {EMBEDDING_DIM}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("embedding contains non-finite values"));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::domain("embedding is all zeros"));
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cosine(&self, other: &SpeakerEmbedding) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// Reads either a container holding an `embedding` tensor of shape [192]
    /// or a raw 768-byte f32 file.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() >= 4 && &bytes[..4] == MAGIC {
            let store = decode(bytes)?;
            let t = store.get(EMBEDDING_TENSOR).ok_or_else(|| {
                Error::domain(format!("container has no {EMBEDDING_TENSOR:?} tensor"))
            })?;
            if t.shape() != [EMBEDDING_DIM] {
                return Err(Error::domain(format!(
                    "embedding tensor has shape {:?}, expected [{EMBEDDING_DIM}]",
                    t.shape()
                )));
            }
            return Self::new(t.to_vec());
        }
        if bytes.len() != RAW_EMBEDDING_BYTES {
            return Err(Error::format(
                0,
                format!(
                    "not an embedding file: {} bytes, neither a container nor {RAW_EMBEDDING_BYTES} raw bytes",
                    bytes.len()
                ),
            ));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::new(values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_raw_bytes(&self) -> Vec<u8> {
        self.values
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect()
    }

    pub fn to_container_bytes(&self) -> Result<Vec<u8>> {
        let mut store = ParamStore::new();
        store.insert(
            EMBEDDING_TENSOR,
            Tensor::from_real(vec![EMBEDDING_DIM], &self.values, DType::F32)?,
        )?;
        encode(&store)
    }

    pub fn save_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_raw_bytes();
        write_atomic(path.as_ref(), |f| {
            use std::io::Write;
            f.write_all(&bytes)?;
            Ok(())
        })
    }

    pub fn save_container(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_container_bytes()?;
        write_atomic(path.as_ref(), |f| {
            use std::io::Write;
            f.write_all(&bytes)?;
            Ok(())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Vec<f64> {
        (0..EMBEDDING_DIM).map(|i| (i as f64 * 0.37).sin()).collect()
    }

    #[test]
    fn normalizes_on_construction() {
        let e = SpeakerEmbedding::new(ramp()).unwrap();
        let n: f64 = e.values().iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!((e.cosine(&e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_wrong_length_and_zero() {
        assert!(SpeakerEmbedding::new(vec![1.0; 10]).is_err());
        assert!(SpeakerEmbedding::new(vec![0.0; EMBEDDING_DIM]).is_err());
    }

    #[test]
    fn raw_and_container_round_trip() {
        let e = SpeakerEmbedding::new(ramp()).unwrap();
        let raw = e.to_raw_bytes();
        assert_eq!(raw.len(), 768);
        let a = SpeakerEmbedding::from_bytes(&raw).unwrap();
        let b = SpeakerEmbedding::from_bytes(&e.to_container_bytes().unwrap()).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.values().iter().zip(e.values()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            SpeakerEmbedding::from_bytes(&[0u8; 100]),
            Err(Error::Format { .. })
        ));
        let mut store = ParamStore::new();
        store
            .insert("embedding", Tensor::zeros(vec![191], DType::F32))
            .unwrap();
        assert!(SpeakerEmbedding::from_bytes(&encode(&store).unwrap()).is_err());
    }
}
