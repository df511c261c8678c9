//! Policy checkpoints: magic, JSON header length, JSON header, then every
//! parameter as little-endian f64.

use super::policy::{PolicyArch, PolicyParams, Segment, Subset};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"ILADCKPT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub arch: PolicyArch,
    pub layout: Vec<Segment>,
    pub n_params: usize,
    pub seed: u64,
    pub epoch: Option<usize>,
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &PolicyParams, seed: u64, epoch: Option<usize>) -> Result<()> {
    let flat = params.get(Subset::All);
    let header = CheckpointHeader {
        version: 1,
        arch: params.arch.clone(),
        layout: params.layout(Subset::All),
        n_params: flat.len(),
        seed,
        epoch,
    };
    let hj = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(hj.len() as u64).to_le_bytes())?;
    w.write_all(&hj)?;
    for v in flat {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(PolicyParams, CheckpointHeader)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a policy checkpoint".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("implausible header length {len}")));
    }
    let mut hj = vec![0u8; len];
    r.read_exact(&mut hj)?;
    let header: CheckpointHeader = serde_json::from_slice(&hj)?;
    let mut params = PolicyParams::zeros(header.arch.clone())?;
    let expected: usize = params.layout(Subset::All).iter().map(|s| s.len).sum();
    if expected != header.n_params {
        return Err(Error::Format(format!(
            "header declares {} parameters, architecture has {expected}",
            header.n_params
        )));
    }
    let mut bytes = vec![0u8; 8 * header.n_params];
    r.read_exact(&mut bytes)?;
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    params.set(Subset::All, &flat)?;
    Ok((params, header))
}

pub fn save_checkpoint(path: &Path, params: &PolicyParams, seed: u64, epoch: Option<usize>) -> Result<()> {
    write_checkpoint(std::io::BufWriter::new(std::fs::File::create(path)?), params, seed, epoch)
}

pub fn load_checkpoint(path: &Path) -> Result<(PolicyParams, CheckpointHeader)> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}
