//! Binary checkpoint format (little-endian):
//!
//! ```text
//! "SRCK" | version u32 | share_mode u8 | arch_hash u64 | record*
//! record = name_len u16 | name utf-8 | rank u8 | dims u32*rank | f32*count
//! ```
//!
//! Parameter records follow the architecture order, so their count is implied
//! by the share mode. An optional optimizer trailer follows: `adam.step`
//! (rank 0), then `adam.m.<name>` and `adam.v.<name>` for every parameter.

use std::path::Path;

use thiserror::Error;

use super::{architecture, architecture_hash, NetworkParams, ParamTensor, ShareMode};
use crate::autograd::AdamState;

const MAGIC: &[u8; 4] = b"SRCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),
    #[error("checkpoint i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Parameters plus optional optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams<f32>,
    pub adam: Option<AdamState<f32>>,
}

fn put_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    out.extend((name.len() as u16).to_le_bytes());
    out.extend(name.as_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend((d as u32).to_le_bytes());
    }
    for &v in data {
        out.extend(v.to_le_bytes());
    }
}

pub fn encode_checkpoint(params: &NetworkParams<f32>, adam: Option<&AdamState<f32>>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * params.stored_scalar_count());
    out.extend(MAGIC);
    out.extend(CHECKPOINT_VERSION.to_le_bytes());
    out.push(params.share_mode().code());
    out.extend(params.architecture_hash().to_le_bytes());
    for t in params.tensors() {
        put_record(&mut out, &t.name, &t.shape, &t.data);
    }
    if let Some(st) = adam {
        put_record(&mut out, "adam.step", &[], &[st.step as f32]);
        for (i, t) in params.tensors().iter().enumerate() {
            put_record(&mut out, &format!("adam.m.{}", t.name), &t.shape, &st.m[i]);
            put_record(&mut out, &format!("adam.v.{}", t.name), &t.shape, &st.v[i]);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Corrupt(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    /// Reads one record, requiring the given name and shape.
    fn record(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f32>, CheckpointError> {
        let len = self.u16()? as usize;
        let got = std::str::from_utf8(self.take(len)?)
            .map_err(|_| CheckpointError::Corrupt("record name is not UTF-8".into()))?;
        if got != name {
            return Err(CheckpointError::Corrupt(format!("expected record {name:?}, found {got:?}")));
        }
        let rank = self.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32()? as usize);
        }
        if dims != shape {
            return Err(CheckpointError::Corrupt(format!("record {name} has shape {dims:?}, expected {shape:?}")));
        }
        let count: usize = shape.iter().product();
        let bytes = self.take(4 * count)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch(format!(
            "file version {version}, supported {CHECKPOINT_VERSION}"
        )));
    }
    let code = r.u8()?;
    let mode = ShareMode::from_code(code).ok_or_else(|| CheckpointError::Corrupt(format!("unknown share mode {code}")))?;
    let hash = r.u64()?;
    let expected = architecture_hash(mode);
    if hash != expected {
        return Err(CheckpointError::VersionMismatch(format!(
            "architecture hash {hash:016x} does not match {expected:016x}"
        )));
    }
    let arch = architecture(mode);
    let mut tensors = Vec::with_capacity(arch.len());
    for (name, shape) in &arch {
        let data = r.record(name, shape)?;
        tensors.push(ParamTensor { name: name.clone(), shape: shape.clone(), data });
    }
    let params = NetworkParams::from_tensors(mode, tensors).map_err(CheckpointError::Corrupt)?;
    let adam = if r.at_end() {
        None
    } else {
        let step = r.record("adam.step", &[])?[0];
        if !(step >= 0.0 && step.fract() == 0.0) {
            return Err(CheckpointError::Corrupt(format!("invalid optimizer step {step}")));
        }
        let mut st = AdamState { step: step as u64, m: Vec::new(), v: Vec::new() };
        for (name, shape) in &arch {
            st.m.push(r.record(&format!("adam.m.{name}"), shape)?);
            st.v.push(r.record(&format!("adam.v.{name}"), shape)?);
        }
        Some(st)
    };
    if !r.at_end() {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { params, adam })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &NetworkParams<f32>,
    adam: Option<&AdamState<f32>>,
) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_checkpoint(params, adam))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}
