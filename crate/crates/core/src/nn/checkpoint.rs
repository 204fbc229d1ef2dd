//! Model checkpoint format, all integers and reals little-endian:
//!
//! ```text
//! magic       4 bytes  "RFNN"
//! version     u32      1
//! blocks      u32      number of parameter blocks
//! per block:  u32 name length, UTF-8 name, u32 element count
//! payload     f32 values of every block, in declaration order
//! ```

use std::fs;
use std::path::Path;

use super::model::{ModelParams, RECOGNIZER_BLOCKS};
use super::params::Params;
use super::scalar::Scalar;
use super::NnError;

pub const MAGIC: &[u8; 4] = b"RFNN";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint<S: Scalar>(params: &ModelParams<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.blocks().len() as u32).to_le_bytes());
    for spec in params.blocks() {
        out.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.name.as_bytes());
        out.extend_from_slice(&(spec.len as u32).to_le_bytes());
    }
    for v in params.as_slice() {
        out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
    }
    out
}

fn bad(message: impl Into<String>) -> NnError {
    NnError::Checkpoint(message.into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad("unexpected end of checkpoint"))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_checkpoint<S: Scalar>(bytes: &[u8]) -> Result<ModelParams<S>, NnError> {
    let mut cur = Cursor { bytes, at: 0 };
    if cur.take(4)? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let count = cur.u32()? as usize;
    if count != RECOGNIZER_BLOCKS.len() {
        return Err(bad(format!("{count} blocks, expected {}", RECOGNIZER_BLOCKS.len())));
    }
    for spec in &RECOGNIZER_BLOCKS {
        let name_len = cur.u32()? as usize;
        let name = cur.take(name_len)?;
        let len = cur.u32()? as usize;
        if name != spec.name.as_bytes() || len != spec.len {
            return Err(bad(format!(
                "block {} ({len}) does not match {} ({})",
                String::from_utf8_lossy(name),
                spec.name,
                spec.len
            )));
        }
    }
    let total: usize = RECOGNIZER_BLOCKS.iter().map(|b| b.len).sum();
    let payload = cur.take(total * 4)?;
    if cur.at != bytes.len() {
        return Err(bad("trailing bytes after payload"));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| S::from_f64(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
        .collect();
    Params::from_vec(&RECOGNIZER_BLOCKS, data)
}

pub fn save_checkpoint<S: Scalar>(path: &Path, params: &ModelParams<S>) -> Result<(), NnError> {
    fs::write(path, encode_checkpoint(params)).map_err(|e| bad(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<ModelParams<S>, NnError> {
    let bytes = fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::init_params;

    #[test]
    fn round_trip_and_corruption() {
        let params = init_params::<f32>(1);
        let bytes = encode_checkpoint(&params);
        assert_eq!(&bytes[..4], b"RFNN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back: ModelParams<f32> = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, params);

        let mut wrong_version = bytes.clone();
        wrong_version[4] = 2;
        assert!(decode_checkpoint::<f32>(&wrong_version).is_err());
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(decode_checkpoint::<f32>(&trailing).is_err());
        assert!(decode_checkpoint::<f32>(b"nope").is_err());
    }
}
