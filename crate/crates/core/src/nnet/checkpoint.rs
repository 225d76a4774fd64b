//! Versioned binary checkpoints.
//!
//! Layout: magic `AUGMNET\0`, version u32 LE, descriptor length u32 LE,
//! descriptor UTF-8 text, D as u64 LE, then D little-endian f64 weights.

use super::{Arch, Network};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use std::path::Path;

const MAGIC: &[u8; 8] = b"AUGMNET\0";
const VERSION: u32 = 1;

/// Decoded checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: Arch,
    pub weights: Vec<f64>,
}

impl Checkpoint {
    pub fn from_network(net: &Network) -> Checkpoint {
        Checkpoint { arch: net.arch.clone(), weights: net.weights.clone() }
    }

    pub fn into_network(self) -> Network {
        Network { arch: self.arch, weights: self.weights }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let desc = self.arch.descriptor();
        let mut out = Vec::with_capacity(24 + desc.len() + self.weights.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
        out.extend_from_slice(desc.as_bytes());
        out.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let take = |off: usize, len: usize| -> Result<&[u8]> {
            bytes
                .get(off..off + len)
                .ok_or_else(|| Error::Format("checkpoint truncated".into()))
        };
        if take(0, 8)? != MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = u32::from_le_bytes(take(8, 4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let desc_len = u32::from_le_bytes(take(12, 4)?.try_into().unwrap()) as usize;
        let desc = std::str::from_utf8(take(16, desc_len)?)
            .map_err(|_| Error::Format("descriptor is not UTF-8".into()))?;
        let arch = Arch::from_descriptor(desc)?;
        let mut off = 16 + desc_len;
        let d = u64::from_le_bytes(take(off, 8)?.try_into().unwrap()) as usize;
        off += 8;
        if d != arch.param_count() {
            return Err(Error::Format(format!(
                "weight count {d} does not match architecture ({})",
                arch.param_count()
            )));
        }
        let body = take(off, d * 8)?;
        if bytes.len() != off + d * 8 {
            return Err(Error::Format("trailing bytes after checkpoint weights".into()));
        }
        let weights = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Checkpoint { arch, weights })
    }
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    atomic_write(path, &Checkpoint::from_network(net).to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = std::fs::read(path)?;
    Ok(Checkpoint::from_bytes(&bytes)?.into_network())
}
