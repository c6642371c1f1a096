//! Flat binary container for named `f64` tensors.
//!
//! Used for model checkpoints and for dataset matrices. All integers and
//! floats are little-endian; encoding the same input always yields the same
//! bytes.
//!
//! ```text
//! offset  size   field
//! 0       8      magic, ASCII "SDCDATNS"
//! 8       4      format version (u32) = 1
//! 12      32     digest: SHA-256 of the producer's descriptor
//! 44      4      entry count (u32)
//! 48      ...    entries, each:
//!                  u32        name length in bytes
//!                  [u8]       name, UTF-8
//!                  u32        rank
//!                  [u64]      dimensions (rank of them)
//!                  [f64]      values, row-major (product of dimensions)
//! ```
//!
//! Trailing bytes after the last entry are rejected.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{ParameterSet, Tensor};

pub const MAGIC: &[u8; 8] = b"SDCDATNS";
pub const FORMAT_VERSION: u32 = 1;

pub type ContentDigest = [u8; 32];

pub fn descriptor_digest(descriptor: &str) -> ContentDigest {
    Sha256::digest(descriptor.as_bytes()).into()
}

pub fn encode(digest: &ContentDigest, tensors: &ParameterSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + tensors.num_values() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(digest);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::data(format!("container truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(ContentDigest, ParameterSet)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::data("not a tensor container (bad magic)"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::data(format!("unsupported container version {version}")));
    }
    let digest: ContentDigest = r.take(32)?.try_into().unwrap();
    let count = r.u32()? as usize;
    let mut tensors = ParameterSet::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::data("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::data("tensor too large"))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::data(format!("tensor {name}: {e}")))?;
        tensors.insert(name, t).map_err(|e| Error::data(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::data(format!("{} trailing bytes in container", bytes.len() - r.pos)));
    }
    Ok((digest, tensors))
}
