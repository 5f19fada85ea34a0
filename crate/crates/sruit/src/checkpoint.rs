//! Single-file training archive.
//!
//! Layout: an 8-byte magic, a little-endian u64 header length, a JSON
//! header (configs, counters, seed, and a tensor index), the raw f32
//! little-endian tensor payload, and a trailing SHA-256 over everything
//! before it. Encoding the same state twice yields identical bytes, so
//! save -> load -> save is byte-stable.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discriminator::DiscriminatorConfig;
use crate::model::GeneratorConfig;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SRUITCK\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub byte_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub version: u32,
    pub seed: u64,
    pub step: usize,
    pub epoch: usize,
    pub step_in_epoch: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    pub opt_gen_step: usize,
    pub opt_disc_step: usize,
    pub tensors: Vec<TensorEntry>,
}

/// Named f32 tensors in archive order.
pub type TensorData = Vec<(String, Vec<usize>, Vec<f32>)>;

pub fn encode_archive(meta: &ArchiveMeta, tensors: &TensorData) -> Result<Vec<u8>> {
    let mut meta = meta.clone();
    meta.version = FORMAT_VERSION;
    meta.tensors = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, shape, data) in tensors {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Integrity(format!(
                "tensor {name}: shape {shape:?} does not match {} values",
                data.len()
            )));
        }
        let byte_len = (data.len() * 4) as u64;
        meta.tensors.push(TensorEntry { name: name.clone(), shape: shape.clone(), offset, byte_len });
        offset += byte_len;
    }
    let header = serde_json::to_vec(&meta)
        .map_err(|e| Error::Integrity(format!("cannot encode archive header: {e}")))?;

    let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + offset as usize + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, _, data) in tensors {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Parse and verify an archive. Returns the header and the tensor values
/// keyed by name. Never panics on malformed input.
pub fn decode_archive(bytes: &[u8]) -> Result<(ArchiveMeta, HashMap<String, (Vec<usize>, Vec<f32>)>)> {
    let min_len = MAGIC.len() + 8 + 32;
    if bytes.len() < min_len {
        return Err(Error::Integrity(format!(
            "archive truncated: {} bytes, need at least {min_len}",
            bytes.len()
        )));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Integrity("bad archive magic".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(Error::Integrity(format!(
            "archive checksum mismatch: stored {}, computed {}",
            hex(trailer),
            hex(&digest)
        )));
    }
    let mut pos = MAGIC.len();
    let header_len = u64::from_le_bytes(body[pos..pos + 8].try_into().expect("8 bytes")) as usize;
    pos += 8;
    if header_len > body.len() - pos {
        return Err(Error::Integrity(format!(
            "archive header length {header_len} exceeds file size"
        )));
    }
    let meta: ArchiveMeta = serde_json::from_slice(&body[pos..pos + header_len])
        .map_err(|e| Error::Integrity(format!("cannot parse archive header: {e}")))?;
    if meta.version != FORMAT_VERSION {
        return Err(Error::Integrity(format!(
            "unsupported archive version {} (expected {FORMAT_VERSION})",
            meta.version
        )));
    }
    pos += header_len;
    let payload = &body[pos..];

    let mut tensors = HashMap::with_capacity(meta.tensors.len());
    for entry in &meta.tensors {
        let count: usize = entry.shape.iter().product();
        if entry.byte_len != (count * 4) as u64 {
            return Err(Error::Integrity(format!(
                "tensor {}: byte length {} does not match shape {:?}",
                entry.name, entry.byte_len, entry.shape
            )));
        }
        let start = entry.offset as usize;
        let end = start
            .checked_add(entry.byte_len as usize)
            .ok_or_else(|| Error::Integrity(format!("tensor {}: offset overflow", entry.name)))?;
        if end > payload.len() {
            return Err(Error::Integrity(format!(
                "tensor {}: range {start}..{end} outside payload of {} bytes",
                entry.name,
                payload.len()
            )));
        }
        let values: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        if tensors.insert(entry.name.clone(), (entry.shape.clone(), values)).is_some() {
            return Err(Error::Integrity(format!("duplicate tensor name {}", entry.name)));
        }
    }
    Ok((meta, tensors))
}

pub fn write_archive(path: &Path, meta: &ArchiveMeta, tensors: &TensorData) -> Result<()> {
    let bytes = encode_archive(meta, tensors)?;
    // Write-then-rename keeps the previous checkpoint valid if this one
    // is interrupted.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<(ArchiveMeta, HashMap<String, (Vec<usize>, Vec<f32>)>)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Integrity(format!("cannot read checkpoint {}: {e}", path.display())))?;
    decode_archive(&bytes)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
