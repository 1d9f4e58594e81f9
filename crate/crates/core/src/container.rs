//! Binary tensor container shared by checkpoints and bin models.
//!
//! Layout, all integers little-endian:
//! magic (4 bytes), u32 version, 32-byte config digest, u32 metadata length,
//! UTF-8 JSON metadata, u32 record count, records, then a SHA-256 of every
//! preceding byte. A record is u32 name length, name, u32 rank, u32 dims,
//! and the f32 payload.

use alloc::string::String;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::error::{format_err, Result};
use crate::tensor::Tensor;

pub type Digest32 = [u8; 32];

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    pub version: u32,
    pub digest: Digest32,
    pub meta: String,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

pub fn sha256(bytes: &[u8]) -> Digest32 {
    Sha256::digest(bytes).into()
}

impl Container {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.digest);
        put_u32(&mut out, self.meta.len());
        out.extend_from_slice(self.meta.as_bytes());
        put_u32(&mut out, self.tensors.len());
        for (name, t) in &self.tensors {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.rank());
            for &d in t.shape() {
                put_u32(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let check = sha256(&out);
        out.extend_from_slice(&check);
        out
    }

    /// Parses and verifies a container whose magic must equal `magic`.
    /// The version is returned as stored; callers decide what they accept.
    pub fn decode(bytes: &[u8], magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < 4 + 4 + 32 + 4 + 4 + 32 {
            return Err(format_err!("container truncated: {} bytes", bytes.len()));
        }
        if &bytes[..4] != magic {
            return Err(format_err!(
                "bad magic {:?}, expected {:?}",
                &bytes[..4],
                magic
            ));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if sha256(body) != trailer {
            return Err(format_err!("container checksum mismatch"));
        }
        let mut r = Reader {
            bytes: body,
            pos: 4,
        };
        let version = r.u32()?;
        let digest: Digest32 = r.take(32)?.try_into().expect("32 bytes");
        let meta_len = r.u32()? as usize;
        let meta = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| format_err!("metadata is not UTF-8"))?;
        let n = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| format_err!("tensor name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            let mut count = 1usize;
            for _ in 0..rank {
                let d = r.u32()? as usize;
                count = count
                    .checked_mul(d)
                    .ok_or_else(|| format_err!("tensor {name} is too large"))?;
                shape.push(d);
            }
            let bytes_needed = count
                .checked_mul(4)
                .ok_or_else(|| format_err!("tensor {name} is too large"))?;
            let raw = r.take(bytes_needed)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        if r.pos != body.len() {
            return Err(format_err!(
                "{} trailing bytes after the last record",
                body.len() - r.pos
            ));
        }
        Ok(Self {
            magic: *magic,
            version,
            digest,
            meta,
            tensors,
        })
    }

    /// Removes and returns the named tensor.
    pub fn take(&mut self, name: &str) -> Option<Tensor<f32>> {
        let i = self.tensors.iter().position(|(n, _)| n == name)?;
        Some(self.tensors.swap_remove(i).1)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(
        &u32::try_from(v)
            .expect("container field exceeds u32")
            .to_le_bytes(),
    );
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format_err!("container truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}
