//! Binary index format (little-endian):
//!
//! ```text
//! "SRIX" | version u32 | count u32 | dim u32 | entry*
//! entry = name_len u16 | name utf-8 | f32*dim
//! ```

use std::path::Path;

use super::{DescriptorIndex, RetrievalError};
use crate::net::{Embedding, EMBED_DIM};

const MAGIC: &[u8; 4] = b"SRIX";
pub const INDEX_VERSION: u32 = 1;

pub fn encode_index(index: &DescriptorIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(INDEX_VERSION.to_le_bytes());
    out.extend((index.len() as u32).to_le_bytes());
    out.extend((EMBED_DIM as u32).to_le_bytes());
    for (id, e) in index.entries() {
        out.extend((id.len() as u16).to_le_bytes());
        out.extend(id.as_bytes());
        for v in e.as_slice() {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

pub fn decode_index(bytes: &[u8]) -> Result<DescriptorIndex, RetrievalError> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], RetrievalError> {
        if bytes.len() - pos < n {
            return Err(RetrievalError::Corrupt(format!("truncated at byte {pos}")));
        }
        pos += n;
        Ok(&bytes[pos - n..pos])
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    if take(4)? != MAGIC {
        return Err(RetrievalError::Corrupt("bad magic".into()));
    }
    let version = u32_at(take(4)?);
    if version != INDEX_VERSION {
        return Err(RetrievalError::VersionMismatch(format!(
            "file version {version}, supported {INDEX_VERSION}"
        )));
    }
    let count = u32_at(take(4)?) as usize;
    let dim = u32_at(take(4)?) as usize;
    if dim != EMBED_DIM {
        return Err(RetrievalError::Corrupt(format!("descriptor dimension {dim}, expected {EMBED_DIM}")));
    }
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes")) as usize;
        let id = std::str::from_utf8(take(len)?)
            .map_err(|_| RetrievalError::Corrupt("object id is not UTF-8".into()))?
            .to_string();
        let v = take(4 * dim)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        entries.push((id, Embedding::new(v)));
    }
    if pos != bytes.len() {
        return Err(RetrievalError::Corrupt(format!("{} trailing bytes", bytes.len() - pos)));
    }
    DescriptorIndex::new(entries, None).map_err(|e| match e {
        RetrievalError::DuplicateId(_) | RetrievalError::NotUnitNorm { .. } => RetrievalError::Corrupt(e.to_string()),
        other => other,
    })
}

pub fn save_index(path: impl AsRef<Path>, index: &DescriptorIndex) -> Result<(), RetrievalError> {
    std::fs::write(path, encode_index(index))?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<DescriptorIndex, RetrievalError> {
    decode_index(&std::fs::read(path)?)
}
