//! Checkpoint container (little-endian throughout):
//!
//! | field | encoding |
//! |---|---|
//! | magic | 4 bytes `BCCK` |
//! | version | u32, currently 1 |
//! | config text | u32 byte length, UTF-8 bytes |
//! | config hash | 32 bytes, SHA-256 of the config text |
//! | iteration | u64 |
//! | seed | u64 |
//! | counters | u32 count, then per entry: name (u16 length + UTF-8), u64 value |
//! | tensors | u32 count, then per entry: name (u16 length + UTF-8), u32 rank, rank × u32 dims, f64 data row-major |
//! | digest | 32 bytes, SHA-256 of every preceding byte |
//!
//! Entries are written in the order they were added; readers look them up
//! by name.

use std::fs;
use std::path::Path;

use bcenhance_nn::Tensor;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BCCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    pub iteration: u64,
    pub seed: u64,
    pub counters: Vec<(String, u64)>,
    pub tensors: Vec<(String, Tensor)>,
}

/// SHA-256 of the effective configuration text.
pub fn config_hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor {name:?}")))
    }

    pub fn counter(&self, name: &str) -> Result<u64> {
        self.counters
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::format("checkpoint", format!("missing counter {name:?}")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config_text.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_text.as_bytes());
        out.extend_from_slice(&config_hash(&self.config_text));
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.counters.len() as u32).to_le_bytes());
        for (name, v) in &self.counters {
            put_name(&mut out, name);
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_name(&mut out, name);
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest: [u8; 32] = Sha256::digest(&out).into();
        out.extend_from_slice(&digest);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 + 32 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "missing BCCK header"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::format(
                "checkpoint",
                "digest mismatch (file truncated or corrupted)",
            ));
        }
        let mut r = Reader {
            bytes: body,
            pos: 4,
        };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported version {version}"),
            ));
        }
        let len = r.u32()? as usize;
        let config_text = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::format("checkpoint", "config text is not UTF-8"))?;
        if r.take(32)? != config_hash(&config_text) {
            return Err(Error::format(
                "checkpoint",
                "config hash does not match config text",
            ));
        }
        let iteration = r.u64()?;
        let seed = r.u64()?;
        let counters = (0..r.u32()?)
            .map(|_| Ok((r.name()?, r.u64()?)))
            .collect::<Result<Vec<_>>>()?;
        let tensors = (0..r.u32()?)
            .map(|_| {
                let name = r.name()?;
                let rank = r.u32()? as usize;
                let shape = (0..rank)
                    .map(|_| Ok(r.u32()? as usize))
                    .collect::<Result<Vec<_>>>()?;
                let n: usize = shape.iter().product();
                let data = r
                    .take(8 * n)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Ok((name, Tensor::new(&shape, data)?))
            })
            .collect::<Result<Vec<_>>>()?;
        if r.pos != body.len() {
            return Err(Error::format(
                "checkpoint",
                "trailing bytes after tensor table",
            ));
        }
        Ok(Self {
            config_text,
            iteration,
            seed,
            counters,
            tensors,
        })
    }
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("checkpoint", "unexpected end of data"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String> {
        let n = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::format("checkpoint", "entry name is not UTF-8"))
    }
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, ckpt.encode()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes)
}
