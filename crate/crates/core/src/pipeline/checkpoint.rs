//! Binary checkpoint container and JSON artifact envelope.
//!
//! Layout: `ELSACKPT` | u32 format version | u64 manifest length | manifest
//! JSON | payload. All integers and tensor values are little-endian; tensor
//! offsets are relative to the payload start.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ElsaError, Result};
use crate::numcore::{DenseMatrix, ParamSet, Scalar};

pub const MAGIC: &[u8; 8] = b"ELSACKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub module: String,
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Module-specific structure (vocabularies, dimensions, labels).
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub module: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, DenseMatrix<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(
        module: impl Into<String>,
        config_hash: impl Into<String>,
        seed: u64,
        config: serde_json::Value,
        meta: serde_json::Value,
    ) -> Self {
        Checkpoint {
            module: module.into(),
            config_hash: config_hash.into(),
            seed,
            config,
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: DenseMatrix<T>) {
        self.tensors.push((name.into(), value));
    }

    /// Appends every parameter value in [`ParamSet`] order.
    pub fn push_params<P: ParamSet<T>>(&mut self, model: &P) {
        for p in model.params() {
            self.push(p.name.clone(), p.value.clone());
        }
    }

    pub fn tensor(&self, name: &str) -> Result<&DenseMatrix<T>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| ElsaError::Checkpoint(format!("no tensor `{name}` in {} checkpoint", self.module)))
    }

    /// Tensor values for a model, checked against its parameter names.
    pub fn values_for<P: ParamSet<T>>(&self, model: &P) -> Result<Vec<DenseMatrix<T>>> {
        let names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();
        if names.len() != self.tensors.len() || names.iter().zip(&self.tensors).any(|(a, (b, _))| a != b) {
            return Err(ElsaError::Checkpoint(format!(
                "{} checkpoint tensors do not match the model layout",
                self.module
            )));
        }
        Ok(self.tensors.iter().map(|(_, m)| m.clone()).collect())
    }

    pub fn manifest(&self) -> Manifest {
        let mut offset = 0u64;
        let tensors = self
            .tensors
            .iter()
            .map(|(name, m)| {
                let nbytes = (m.len() * T::BYTES) as u64;
                let e = TensorEntry {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                    dtype: T::DTYPE.to_string(),
                    offset,
                    nbytes,
                };
                offset += nbytes;
                e
            })
            .collect();
        Manifest {
            module: self.module.clone(),
            format_version: FORMAT_VERSION,
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            config: self.config.clone(),
            meta: self.meta.clone(),
            tensors,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest()).expect("manifest serializes");
        let mut out = Vec::with_capacity(manifest.len() + 20);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (_, m) in &self.tensors {
            for &v in m.as_slice() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| ElsaError::Checkpoint(msg);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing ELSACKPT magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let payload_start = 20usize
            .checked_add(mlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("manifest length exceeds file".into()))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[20..payload_start])
            .map_err(|e| bad(format!("manifest: {e}")))?;
        if manifest.format_version != version {
            return Err(bad("manifest and header versions differ".into()));
        }
        let payload = &bytes[payload_start..];
        let mut entries: Vec<&TensorEntry> = manifest.tensors.iter().collect();
        entries.sort_by_key(|e| e.offset);
        let mut end = 0u64;
        for e in &entries {
            if e.dtype != T::DTYPE {
                return Err(bad(format!("tensor {} is {}, expected {}", e.name, e.dtype, T::DTYPE)));
            }
            if e.nbytes != (e.rows * e.cols * T::BYTES) as u64 {
                return Err(bad(format!("tensor {} byte count disagrees with its shape", e.name)));
            }
            if e.offset < end || e.offset + e.nbytes > payload.len() as u64 {
                return Err(bad(format!("tensor {} overlaps or exceeds the payload", e.name)));
            }
            end = e.offset + e.nbytes;
        }
        let tensors = manifest
            .tensors
            .iter()
            .map(|e| {
                let raw = &payload[e.offset as usize..(e.offset + e.nbytes) as usize];
                let data: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
                Ok((e.name.clone(), DenseMatrix::from_vec(e.rows, e.cols, data)?))
            })
            .collect::<Result<_>>()?;
        Ok(Checkpoint {
            module: manifest.module,
            config_hash: manifest.config_hash,
            seed: manifest.seed,
            config: manifest.config,
            meta: manifest.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| ElsaError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn meta_as<M: DeserializeOwned>(&self) -> Result<M> {
        serde_json::from_value(self.meta.clone())
            .map_err(|e| ElsaError::Checkpoint(format!("{} metadata: {e}", self.module)))
    }
}

/// JSON artifact wrapper carrying the provenance every output file records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<D> {
    pub module: String,
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub data: D,
}

impl<D: Serialize + DeserializeOwned> Artifact<D> {
    pub fn new(module: impl Into<String>, config_hash: impl Into<String>, seed: u64, data: D) -> Self {
        Artifact {
            module: module.into(),
            format_version: FORMAT_VERSION,
            config_hash: config_hash.into(),
            seed,
            data,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_file(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ElsaError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ElsaError::Data(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| ElsaError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| ElsaError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Prng;

    fn sample<T: Scalar>() -> Checkpoint<T> {
        let mut rng = Prng::new(4);
        let mut c = Checkpoint::new(
            "test",
            "abc",
            7,
            serde_json::json!({"lr": 0.001, "name": "x"}),
            serde_json::json!({"vocab": ["a", "b"]}),
        );
        c.push("w", DenseMatrix::from_fn(3, 2, |_, _| rng.uniform(-1.0, 1.0)));
        c.push("b", DenseMatrix::from_fn(1, 1, |_, _| T::of(f64::MIN_POSITIVE)));
        c.push("empty", DenseMatrix::zeros(0, 4));
        c
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample::<f64>();
        let bytes = c.to_bytes();
        let back = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        let c32 = sample::<f32>();
        assert_eq!(Checkpoint::<f32>::from_bytes(&c32.to_bytes()).unwrap(), c32);
    }

    #[test]
    fn rejects_corruption_and_wrong_dtype() {
        let bytes = sample::<f64>().to_bytes();
        assert!(Checkpoint::<f32>::from_bytes(&bytes).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::<f64>::from_bytes(&bad).is_err());
        assert!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(Checkpoint::<f64>::from_bytes(&v2).is_err());
    }

    #[test]
    fn manifest_offsets_are_contiguous() {
        let m = sample::<f64>().manifest();
        assert_eq!(m.tensors[0].offset, 0);
        assert_eq!(m.tensors[1].offset, 48);
        assert_eq!(m.tensors[2].nbytes, 0);
    }
}
