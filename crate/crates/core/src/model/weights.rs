//! Seeded initialization and the flat weight file.
//!
//! File layout, all little-endian: `u32` parameter count; per parameter a
//! `u32` rank followed by `rank` `u32` dimensions; then every parameter's
//! values as row-major `f32`, in the same order.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::Module;
use super::tensor::Init;
use super::{ModelConfig, Segmenter};
use crate::error::{Error, Result};

/// Weights and biases uniform in `±1/sqrt(fan_in)`; norm scales one, shifts
/// zero. Parameters are filled in traversal order from one ChaCha8 stream.
pub fn init_weights(config: &ModelConfig, seed: u64) -> Result<Segmenter> {
    let mut m = Segmenter::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in m.params_mut() {
        if let Init::Uniform { fan_in } = p.init {
            let bound = 1.0 / (fan_in as f32).sqrt();
            for v in &mut p.data {
                *v = (2.0 * rng.random::<f32>() - 1.0) * bound;
            }
        }
    }
    Ok(m)
}

/// FNV-1a over the raw bits of every parameter.
pub fn checksum(model: &Segmenter) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in model.params() {
        for v in &p.data {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

pub fn encode_weights(model: &Segmenter) -> Vec<u8> {
    let params = model.params();
    let mut out = Vec::new();
    out.extend((params.len() as u32).to_le_bytes());
    for p in &params {
        out.extend((p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend((d as u32).to_le_bytes());
        }
    }
    for p in &params {
        for v in &p.data {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Tensor(format!(
                "weight file truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Loads weights for `config`; every shape must match the architecture.
pub fn decode_weights(bytes: &[u8], config: &ModelConfig) -> Result<Segmenter> {
    let mut m = Segmenter::new(config)?;
    let mut r = Reader { bytes, pos: 0 };
    let count = r.u32()? as usize;
    let mut params = m.params_mut();
    if count != params.len() {
        return Err(Error::Tensor(format!(
            "weight file holds {count} parameters, model needs {}",
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        let rank = r.u32()? as usize;
        if rank != p.shape.len() {
            return Err(Error::Tensor(format!("parameter {i}: rank {rank}, expected {}", p.shape.len())));
        }
        for &want in &p.shape {
            let d = r.u32()? as usize;
            if d != want {
                return Err(Error::Tensor(format!(
                    "parameter {i}: shape {:?} expected, found dimension {d}",
                    p.shape
                )));
            }
        }
    }
    for p in params.iter_mut() {
        let raw = r.take(p.len() * 4)?;
        for (v, b) in p.data.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Tensor(format!(
            "{} trailing bytes after weights",
            bytes.len() - r.pos
        )));
    }
    Ok(m)
}

pub fn save_weights(path: impl AsRef<Path>, model: &Segmenter) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_weights(model)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>, config: &ModelConfig) -> Result<Segmenter> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init() {
        let c = ModelConfig::tiny(4);
        let a = init_weights(&c, 7).unwrap();
        assert_eq!(a, init_weights(&c, 7).unwrap());
        assert_ne!(checksum(&a), checksum(&init_weights(&c, 8).unwrap()));
        for p in a.params() {
            if let Init::Uniform { fan_in } = p.init {
                let b = 1.0 / (fan_in as f32).sqrt();
                assert!(p.data.iter().all(|v| v.abs() <= b));
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let c = ModelConfig::tiny(4);
        let a = init_weights(&c, 3).unwrap();
        let bytes = encode_weights(&a);
        assert_eq!(decode_weights(&bytes, &c).unwrap(), a);
        assert!(decode_weights(&bytes[..bytes.len() - 1], &c).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_weights(&extra, &c).is_err());
        assert!(decode_weights(&bytes, &ModelConfig::tiny(5)).is_err());
        assert!(decode_weights(&[], &c).is_err());
    }
}
