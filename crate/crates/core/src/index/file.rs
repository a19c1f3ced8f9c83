//! `embeddings.bin` codec.
//!
//! Layout: the magic bytes `KRVX`, then version, dim and count as
//! little-endian `u32`, then `count * dim` little-endian `f32` values in
//! row-major order. The sidecar `embeddings.idx.jsonl` holds
//! `{"chunk_id": ...}` for each row.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::store::{read_store, AtomicBatch, DataDir, StoreError, EMBEDDINGS_FILE, EMBEDDINGS_IDS_FILE};

pub const MAGIC: [u8; 4] = *b"KRVX";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdLine {
    pub chunk_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VectorHeader {
    pub version: u32,
    pub dim: u32,
    pub count: u32,
}

impl VectorHeader {
    pub fn payload_len(&self) -> u64 {
        u64::from(self.count) * u64::from(self.dim) * 4
    }
}

/// Parses and checks the header against the total byte length.
pub fn parse_header(bytes: &[u8]) -> Result<VectorHeader, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("file is {} bytes, shorter than the header", bytes.len()));
    }
    if bytes[..4] != MAGIC {
        return Err("bad magic bytes".into());
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let header = VectorHeader {
        version: word(4),
        dim: word(8),
        count: word(12),
    };
    if header.version != FORMAT_VERSION {
        return Err(format!("unsupported format version {}", header.version));
    }
    if header.dim == 0 && header.count > 0 {
        return Err("zero dimension with non-empty payload".into());
    }
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if actual != header.payload_len() {
        return Err(format!(
            "payload is {actual} bytes, header declares {} ({} x {} x 4)",
            header.payload_len(),
            header.count,
            header.dim
        ));
    }
    Ok(header)
}

pub fn encode_header(dim: u32, count: u32) -> [u8; HEADER_LEN] {
    let mut out = [0u8; HEADER_LEN];
    out[..4].copy_from_slice(&MAGIC);
    out[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    out[8..12].copy_from_slice(&dim.to_le_bytes());
    out[12..16].copy_from_slice(&count.to_le_bytes());
    out
}

pub fn write_vectors<W: Write>(out: &mut W, dim: usize, data: &[f32]) -> io::Result<()> {
    let count = if dim == 0 { 0 } else { data.len() / dim };
    let too_big = |_| io::Error::new(io::ErrorKind::InvalidInput, "vector file dimensions exceed u32");
    let dim32 = u32::try_from(dim).map_err(too_big)?;
    let count32 = u32::try_from(count).map_err(too_big)?;
    out.write_all(&encode_header(dim32, count32))?;
    let mut buf = Vec::with_capacity(data.len() * 4);
    for x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)
}

/// Decodes a complete vector file into `(dim, row-major data)`.
pub fn decode_vectors(bytes: &[u8]) -> Result<(usize, Vec<f32>), String> {
    let header = parse_header(bytes)?;
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok((header.dim as usize, data))
}

/// Stored vectors and their chunk ids, as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredVectors {
    pub dim: usize,
    pub ids: Vec<String>,
    pub data: Vec<f32>,
}

/// Reads `embeddings.bin` and its sidecar. `Ok(None)` when no index exists.
pub fn read_stored(dir: &DataDir) -> Result<Option<StoredVectors>, StoreError> {
    let path = dir.path(EMBEDDINGS_FILE);
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(StoreError::io(&path, e)),
    };
    let vector_err = |reason: String| StoreError::VectorFile {
        path: path.clone(),
        reason,
    };
    let (dim, data) = decode_vectors(&bytes).map_err(vector_err)?;
    let ids: Vec<IdLine> = read_store(&dir.path(EMBEDDINGS_IDS_FILE))?;
    let rows = if dim == 0 { 0 } else { data.len() / dim };
    if ids.len() != rows {
        return Err(vector_err(format!(
            "{} rows but {} ids in {EMBEDDINGS_IDS_FILE}",
            rows,
            ids.len()
        )));
    }
    Ok(Some(StoredVectors {
        dim,
        ids: ids.into_iter().map(|l| l.chunk_id).collect(),
        data,
    }))
}

/// Stages the vector file and its id sidecar into `batch`.
pub fn stage_vectors(
    batch: &mut AtomicBatch,
    dir: &DataDir,
    dim: usize,
    ids: &[String],
    data: &[f32],
) -> Result<(), StoreError> {
    debug_assert_eq!(ids.len() * dim, data.len());
    batch.stage_with(&dir.path(EMBEDDINGS_FILE), |w| write_vectors(w, dim, data))?;
    let lines: Vec<IdLine> = ids
        .iter()
        .map(|id| IdLine { chunk_id: id.clone() })
        .collect();
    batch.stage_jsonl(&dir.path(EMBEDDINGS_IDS_FILE), &lines)?;
    Ok(())
}

pub fn read_header(path: &Path) -> io::Result<Result<VectorHeader, String>> {
    let bytes = std::fs::read(path)?;
    Ok(parse_header(&bytes))
}
