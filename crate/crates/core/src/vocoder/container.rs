//! `.bcf1` feature container (all integers and floats little-endian):
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `BCF1` |
//! | 4 | 4 | `T` frames (u32) |
//! | 8 | 4 | `Q` cepstral coefficients (u32) |
//! | 12 | 4 | `B` aperiodicity bands (u32) |
//! | 16 | 8·T | f0 (f64) |
//! | … | 8·Q·T | mcep, row-major `[Q, T]` (f64) |
//! | … | 8·B·T | ap, row-major `[B, T]` (f64) |

use std::fs;
use std::path::Path;

use bcenhance_nn::Tensor;

use super::FeatureSet;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"BCF1";

pub fn encode_features(f: &FeatureSet) -> Vec<u8> {
    let t = f.frames();
    let q = f.mcep.shape()[0];
    let b = f.ap.shape()[0];
    let mut out = Vec::with_capacity(16 + 8 * t * (1 + q + b));
    out.extend_from_slice(FEATURE_MAGIC);
    for d in [t, q, b] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in f.f0.iter().chain(f.mcep.data()).chain(f.ap.data()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSet> {
    let bad = |r: &str| Error::format("bcf1", r);
    if bytes.len() < 16 || &bytes[..4] != FEATURE_MAGIC {
        return Err(bad("missing BCF1 header"));
    }
    let dim =
        |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (t, q, b) = (dim(0), dim(1), dim(2));
    let expected = 16 + 8 * t * (1 + q + b);
    if bytes.len() != expected {
        return Err(bad(&format!(
            "expected {expected} bytes for T={t} Q={q} B={b}, found {}",
            bytes.len()
        )));
    }
    let floats: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (f0, rest) = floats.split_at(t);
    let (mcep, ap) = rest.split_at(q * t);
    let fs = FeatureSet {
        f0: f0.to_vec(),
        mcep: Tensor::new(&[q, t], mcep.to_vec())?,
        ap: Tensor::new(&[b, t], ap.to_vec())?,
    };
    Ok(fs)
}

pub fn write_features(path: &Path, f: &FeatureSet) -> Result<()> {
    fs::write(path, encode_features(f)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let f = FeatureSet {
            f0: vec![0.0, 120.0],
            mcep: Tensor::new(&[1, 2], vec![1.5, -2.0]).unwrap(),
            ap: Tensor::new(&[1, 2], vec![1.0, 0.25]).unwrap(),
        };
        let b = encode_features(&f);
        assert_eq!(&b[..16], b"BCF1\x02\0\0\0\x01\0\0\0\x01\0\0\0");
        assert_eq!(&b[24..32], &120.0f64.to_le_bytes());
        assert_eq!(b.len(), 16 + 8 * 6);
        assert_eq!(decode_features(&b).unwrap(), f);
        assert!(decode_features(&b[..40]).is_err());
    }
}
