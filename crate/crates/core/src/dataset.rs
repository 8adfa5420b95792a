//! `QRGS` dataset files: magic, version, JSON header, then `f32` angles.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lattice::{LatticeSpec, RotorConfiguration};
use crate::{CoreError, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"QRGS";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Producer {
    #[serde(rename = "vmc-hmc")]
    VmcHmc,
    #[serde(rename = "dcgan")]
    Dcgan,
}

impl Producer {
    pub fn as_str(&self) -> &'static str {
        match self {
            Producer::VmcHmc => "vmc-hmc",
            Producer::Dcgan => "dcgan",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub g: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub count: usize,
    pub seed: u64,
    pub producer: Producer,
}

fn bad(path: &Path, reason: impl Into<String>) -> CoreError {
    CoreError::Dataset {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn encode_dataset(header: &DatasetHeader, batch: &[RotorConfiguration]) -> std::result::Result<Vec<u8>, String> {
    if header.count == 0 {
        return Err("count must be at least 1".into());
    }
    if header.l < 2 {
        return Err(format!("L must be at least 2, got {}", header.l));
    }
    if header.count != batch.len() {
        return Err(format!("header count {} but {} configurations", header.count, batch.len()));
    }
    if let Some(c) = batch.iter().find(|c| c.lattice().side() != header.l) {
        return Err(format!("header L {} but a configuration has side {}", header.l, c.lattice().side()));
    }
    let json = serde_json::to_vec(header).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * header.count * header.l * header.l);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for cfg in batch {
        for &a in cfg.angles() {
            out.extend_from_slice(&(a as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> std::result::Result<(DatasetHeader, Vec<RotorConfiguration>), String> {
    if bytes.len() < 12 || &bytes[..4] != DATASET_MAGIC {
        return Err("bad magic: expected \"QRGS\"".into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(format!("unsupported version {version}, expected {DATASET_VERSION}"));
    }
    let json_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let json = bytes.get(12..12 + json_len).ok_or("truncated header")?;
    let header: DatasetHeader = serde_json::from_slice(json).map_err(|e| format!("header: {e}"))?;
    if header.count == 0 {
        return Err("count must be at least 1".into());
    }
    let lattice = LatticeSpec::new(header.l).map_err(|e| e.to_string())?;
    let payload = &bytes[12 + json_len..];
    let per = lattice.sites() * 4;
    let expected = header.count * per;
    if payload.len() < expected {
        return Err(format!("truncated payload: {} of {expected} bytes", payload.len()));
    }
    if payload.len() > expected {
        return Err(format!("{} trailing bytes after payload", payload.len() - expected));
    }
    let batch = payload
        .chunks_exact(per)
        .map(|chunk| {
            let angles = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            RotorConfiguration::new(lattice, angles).expect("chunk length matches lattice")
        })
        .collect();
    Ok((header, batch))
}

/// Writes through a sibling temporary file so a failed write leaves no partial dataset.
pub fn write_dataset(path: &Path, header: &DatasetHeader, batch: &[RotorConfiguration]) -> Result<()> {
    let bytes = encode_dataset(header, batch).map_err(|r| bad(path, r))?;
    let tmp = path.with_extension("qrgs.partial");
    let result = fs::File::create(&tmp).and_then(|mut f| {
        f.write_all(&bytes)?;
        f.sync_all()
    });
    if let Err(e) = result.and_then(|_| fs::rename(&tmp, path)) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<RotorConfiguration>)> {
    let bytes = fs::read(path)?;
    decode_dataset(&bytes).map_err(|r| bad(path, r))
}
