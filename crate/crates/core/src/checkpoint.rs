//! Versioned binary container for named tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "CELLCKPT"
//! version      u32      1
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON (see CheckpointHeader)
//! count        u32      number of tensors
//! per tensor:
//!   name_len   u32
//!   name       name_len bytes UTF-8
//!   rows       u64
//!   cols       u64
//!   data       rows·cols f64, row-major
//! ```
//!
//! Vectors are stored as `1 × n` tensors. Nothing follows the last tensor.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::FnnWeights;
use crate::model::{ModelConfig, ModelError, ModelWeights};
use crate::params::Parameters;
use crate::prompting::Vocabulary;

pub const MAGIC: &[u8; 8] = b"CELLCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    WrongKind {
        expected: ModelKind,
        found: ModelKind,
    },
    #[error("vocabulary mismatch: checkpoint {checkpoint}, runtime {runtime}")]
    VocabMismatch { checkpoint: String, runtime: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Encoder,
    Fnn,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Encoder => "encoder",
            ModelKind::Fnn => "fnn",
        })
    }
}

/// JSON header stored ahead of the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    /// Architecture, present for encoder checkpoints.
    pub config: Option<ModelConfig>,
    /// SHA-256 of the serialized vocabulary, present for encoder checkpoints.
    pub vocab_sha256: Option<String>,
    /// Free-form run label such as `bert_mse` or `berto`.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Array2<f64>)>,
}

fn u32_len(n: usize, what: &str) -> Result<u32, CheckpointError> {
    u32::try_from(n).map_err(|_| CheckpointError::Corrupt(format!("{what} too large")))
}

pub fn write_checkpoint<W: Write>(
    mut out: W,
    header: &CheckpointHeader,
    tensors: &[(String, &Array2<f64>)],
) -> Result<(), CheckpointError> {
    let header_json = serde_json::to_vec(header).expect("header serializes");
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&u32_len(header_json.len(), "header")?.to_le_bytes())?;
    out.write_all(&header_json)?;
    out.write_all(&u32_len(tensors.len(), "tensor count")?.to_le_bytes())?;
    for (name, t) in tensors {
        out.write_all(&u32_len(name.len(), "tensor name")?.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.nrows() as u64).to_le_bytes())?;
        out.write_all(&(t.ncols() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in t.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], CheckpointError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => CheckpointError::Corrupt("truncated".into()),
        _ => CheckpointError::Io(e),
    })?;
    Ok(b)
}

fn read_bytes<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>, CheckpointError> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(CheckpointError::Corrupt("truncated".into()));
    }
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, CheckpointError> {
    if &read_array::<8, _>(&mut r)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let header_len = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let header: CheckpointHeader = serde_json::from_slice(&read_bytes(&mut r, header_len)?)
        .map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let name = String::from_utf8(read_bytes(&mut r, name_len)?)
            .map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8".into()))?;
        let rows = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let cols = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| CheckpointError::Corrupt(format!("{name}: shape overflow")))?;
        let data: Vec<f64> = read_bytes(&mut r, n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Array2::from_shape_vec((rows, cols), data).expect("length checked");
        tensors.push((name, t));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }
    Ok(Checkpoint { header, tensors })
}

pub fn encode_model(w: &ModelWeights, vocab: &Vocabulary, label: &str) -> Vec<u8> {
    let header = CheckpointHeader {
        kind: ModelKind::Encoder,
        config: Some(w.config.clone()),
        vocab_sha256: Some(vocab.hash_hex()),
        label: label.to_string(),
    };
    let mut out = Vec::new();
    write_checkpoint(&mut out, &header, &w.tensors()).expect("writing to memory");
    out
}

/// Decode an encoder checkpoint, refusing one built for another vocabulary.
pub fn decode_model(
    bytes: &[u8],
    vocab: &Vocabulary,
) -> Result<(ModelWeights, CheckpointHeader), CheckpointError> {
    let ck = read_checkpoint(bytes)?;
    if ck.header.kind != ModelKind::Encoder {
        return Err(CheckpointError::WrongKind {
            expected: ModelKind::Encoder,
            found: ck.header.kind,
        });
    }
    let runtime = vocab.hash_hex();
    let stored = ck.header.vocab_sha256.clone().unwrap_or_default();
    if stored != runtime {
        return Err(CheckpointError::VocabMismatch {
            checkpoint: stored,
            runtime,
        });
    }
    let cfg = ck
        .header
        .config
        .clone()
        .ok_or_else(|| CheckpointError::Corrupt("encoder checkpoint without config".into()))?;
    let w = ModelWeights::from_named_tensors(&cfg, ck.tensors)?;
    Ok((w, ck.header))
}

pub fn encode_fnn(w: &FnnWeights, label: &str) -> Vec<u8> {
    let header = CheckpointHeader {
        kind: ModelKind::Fnn,
        config: None,
        vocab_sha256: None,
        label: label.to_string(),
    };
    let mut out = Vec::new();
    write_checkpoint(&mut out, &header, &w.tensors()).expect("writing to memory");
    out
}

pub fn decode_fnn(bytes: &[u8]) -> Result<(FnnWeights, CheckpointHeader), CheckpointError> {
    let ck = read_checkpoint(bytes)?;
    if ck.header.kind != ModelKind::Fnn {
        return Err(CheckpointError::WrongKind {
            expected: ModelKind::Fnn,
            found: ck.header.kind,
        });
    }
    let w = FnnWeights::from_named_tensors(ck.tensors).map_err(CheckpointError::Corrupt)?;
    Ok((w, ck.header))
}

pub fn save_model(
    path: &Path,
    w: &ModelWeights,
    vocab: &Vocabulary,
    label: &str,
) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_model(w, vocab, label))?;
    Ok(())
}

pub fn load_model(
    path: &Path,
    vocab: &Vocabulary,
) -> Result<(ModelWeights, CheckpointHeader), CheckpointError> {
    decode_model(&std::fs::read(path)?, vocab)
}
