//! Binary checkpoints for embedding models and reference stores.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes   "C3MODEL\0" or "C3STORE\0"
//! version    u32
//! header     model: layer count u32, then layer sizes u64 x (count + 1)
//!            store: dim u64, n u64, sigma f64, radius flag u8, radius f64,
//!                   labels flag u8
//! payload    model: per layer, weights (row-major, out x in) then bias, f64
//!            store: embeddings (n x dim, row-major), rewards, accumulators
//!                   as f64, then n i64 labels when flagged
//! checksum   SHA-256 of everything above, 32 bytes
//! ```

use std::path::Path;

use c3_core::embedding::{Layer, MlpParams};
use c3_core::{KernelConfig, ReferenceStore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::HarnessError;

pub const FORMAT_VERSION: u32 = 1;
const MODEL_MAGIC: &[u8; 8] = b"C3MODEL\0";
const STORE_MAGIC: &[u8; 8] = b"C3STORE\0";
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum PersistError {
    /// Unrecognized magic bytes or an unsupported format version.
    #[error("unsupported file format or version (found version {found})")]
    VersionMismatch { found: u32 },
    #[error("file is truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed file: {0}")]
    Malformed(String),
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 8]) -> Self {
        let mut buf = magic.to_vec();
        buf.extend(FORMAT_VERSION.to_le_bytes());
        Self { buf }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend(v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend(v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend(v.to_le_bytes());
        }
    }
    fn finish(mut self) -> Vec<u8> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest);
        self.buf
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Check magic and version. Anything that does not start with the
    /// expected header is reported as a version mismatch.
    fn open(bytes: &'a [u8], magic: &[u8; 8]) -> Result<Self, PersistError> {
        let min = magic.len() + 4 + CHECKSUM_LEN;
        if bytes.len() < magic.len() + 4 {
            return Err(PersistError::Truncated { expected: min, found: bytes.len() });
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if &bytes[..8] != magic || version != FORMAT_VERSION {
            return Err(PersistError::VersionMismatch { found: version });
        }
        Ok(Self { bytes, pos: 12 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        let end = self.pos.checked_add(n).ok_or_else(|| PersistError::Malformed("size overflow".into()))?;
        if end > self.bytes.len() {
            return Err(PersistError::Truncated { expected: end + CHECKSUM_LEN, found: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize, PersistError> {
        usize::try_from(self.u64()?).map_err(|_| PersistError::Malformed("size does not fit in memory".into()))
    }
    fn f64(&mut self) -> Result<f64, PersistError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    /// Check the remaining length before allocating `n` values.
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, PersistError> {
        let bytes = n.checked_mul(8).ok_or_else(|| PersistError::Malformed("size overflow".into()))?;
        let raw = self.take(bytes)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn i64s(&mut self, n: usize) -> Result<Vec<i64>, PersistError> {
        let bytes = n.checked_mul(8).ok_or_else(|| PersistError::Malformed("size overflow".into()))?;
        let raw = self.take(bytes)?;
        Ok(raw.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    /// The payload must be followed by exactly the checksum of everything
    /// before it.
    fn finish(self) -> Result<(), PersistError> {
        let expected = self.pos + CHECKSUM_LEN;
        if self.bytes.len() < expected {
            return Err(PersistError::Truncated { expected, found: self.bytes.len() });
        }
        if self.bytes.len() > expected {
            return Err(PersistError::Malformed(format!("{} trailing bytes", self.bytes.len() - expected)));
        }
        let digest = Sha256::digest(&self.bytes[..self.pos]);
        if digest.as_slice() != &self.bytes[self.pos..] {
            return Err(PersistError::ChecksumMismatch);
        }
        Ok(())
    }
}

pub fn encode_model(params: &MlpParams) -> Vec<u8> {
    let mut w = Writer::new(MODEL_MAGIC);
    let dims = params.dims();
    w.u32(params.layers.len() as u32);
    for d in dims {
        w.u64(d as u64);
    }
    for l in &params.layers {
        w.f64s(&l.weights);
        w.f64s(&l.bias);
    }
    w.finish()
}

pub fn decode_model(bytes: &[u8]) -> Result<MlpParams, PersistError> {
    let mut r = Reader::open(bytes, MODEL_MAGIC)?;
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(PersistError::Malformed("model without layers".into()));
    }
    let dims = (0..=count).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
    let mut layers = Vec::with_capacity(count);
    for w in dims.windows(2) {
        let n = w[0].checked_mul(w[1]).ok_or_else(|| PersistError::Malformed("size overflow".into()))?;
        let weights = r.f64s(n)?;
        let bias = r.f64s(w[1])?;
        layers.push(Layer { inputs: w[0], outputs: w[1], weights, bias });
    }
    r.finish()?;
    MlpParams::new(layers).map_err(|e| PersistError::Malformed(e.to_string()))
}

pub fn encode_store(store: &ReferenceStore) -> Vec<u8> {
    let mut w = Writer::new(STORE_MAGIC);
    w.u64(store.dim() as u64);
    w.u64(store.len() as u64);
    let cfg = store.config();
    w.f64s(&[cfg.sigma]);
    w.u8(u8::from(cfg.truncation_radius.is_some()));
    w.f64s(&[cfg.truncation_radius.unwrap_or(0.0)]);
    w.u8(u8::from(store.time_labels().is_some()));
    w.f64s(store.embeddings());
    w.f64s(store.rewards());
    w.f64s(store.accumulators());
    if let Some(labels) = store.time_labels() {
        for l in labels {
            w.buf.extend(l.to_le_bytes());
        }
    }
    w.finish()
}

pub fn decode_store(bytes: &[u8]) -> Result<ReferenceStore, PersistError> {
    let mut r = Reader::open(bytes, STORE_MAGIC)?;
    let dim = r.usize()?;
    let n = r.usize()?;
    let sigma = r.f64()?;
    let has_radius = r.u8()?;
    let radius = r.f64()?;
    let has_labels = r.u8()?;
    if has_radius > 1 || has_labels > 1 {
        return Err(PersistError::Malformed("bad flag byte".into()));
    }
    let size = n.checked_mul(dim).ok_or_else(|| PersistError::Malformed("size overflow".into()))?;
    let embeddings = r.f64s(size)?;
    let rewards = r.f64s(n)?;
    let accumulators = r.f64s(n)?;
    let labels = if has_labels == 1 { Some(r.i64s(n)?) } else { None };
    r.finish()?;
    let config = KernelConfig { sigma, truncation_radius: (has_radius == 1).then_some(radius) };
    ReferenceStore::from_raw_parts(dim, config, embeddings, rewards, accumulators, labels)
        .map_err(|e| PersistError::Malformed(e.to_string()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>, HarnessError> {
    std::fs::read(path).map_err(|e| HarnessError::io(path, e))
}

pub fn save_model(path: &Path, params: &MlpParams) -> Result<(), HarnessError> {
    write(path, &encode_model(params))
}

pub fn load_model(path: &Path) -> Result<MlpParams, HarnessError> {
    decode_model(&read(path)?).map_err(|source| HarnessError::Persist { path: path.into(), source })
}

pub fn save_store(path: &Path, store: &ReferenceStore) -> Result<(), HarnessError> {
    write(path, &encode_store(store))
}

pub fn load_store(path: &Path) -> Result<ReferenceStore, HarnessError> {
    decode_store(&read(path)?).map_err(|source| HarnessError::Persist { path: path.into(), source })
}
