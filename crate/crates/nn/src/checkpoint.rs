//! Model checkpoint file.
//!
//! Layout: magic `QRNN`, `u32` version, `u32` descriptor length, UTF-8 JSON
//! descriptor (ordered networks, each an ordered list of layer specs plus its
//! condition count), then every parameter and running-statistic tensor as
//! little-endian `f32` in descriptor order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Network, NnError, Result, Tensor};
use crate::layers::LayerSpec;

pub const MAGIC: &[u8; 4] = b"QRNN";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetworkDescriptor {
    name: String,
    num_conditions: usize,
    layers: Vec<LayerSpec>,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    networks: Vec<NetworkDescriptor>,
    #[serde(default)]
    metadata: serde_json::Value,
}

/// Named networks plus free-form metadata read back from disk.
#[derive(Debug)]
pub struct Checkpoint {
    pub networks: Vec<(String, Network)>,
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn take(&mut self, name: &str) -> Result<Network> {
        let pos = self
            .networks
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| NnError::Checkpoint(format!("no network named {name:?}")))?;
        Ok(self.networks.remove(pos).1)
    }
}

pub fn encode(networks: &[(&str, &Network)], metadata: &serde_json::Value) -> Result<Vec<u8>> {
    let desc = Descriptor {
        networks: networks
            .iter()
            .map(|(name, net)| NetworkDescriptor {
                name: name.to_string(),
                num_conditions: net.num_conditions(),
                layers: net.layers().to_vec(),
            })
            .collect(),
        metadata: metadata.clone(),
    };
    let json = serde_json::to_vec(&desc)?;
    let mut out = Vec::with_capacity(12 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, net) in networks {
        for (ps, bs) in net.params().iter().zip(net.buffers()) {
            for t in ps.iter().chain(bs) {
                for &v in t.data() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let err = |m: String| NnError::Checkpoint(m);
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(err(format!("bad magic, expected {:?}", std::str::from_utf8(MAGIC).unwrap())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(err(format!("unsupported version {version}, expected {VERSION}")));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let json = bytes
        .get(12..12 + len)
        .ok_or_else(|| err("truncated descriptor".into()))?;
    let desc: Descriptor = serde_json::from_slice(json)?;
    let mut blob = &bytes[12 + len..];
    let mut networks = Vec::with_capacity(desc.networks.len());
    for nd in desc.networks {
        // shapes come from a freshly initialised template
        let template = Network::from_template(nd.layers.clone())?;
        if template.num_conditions() != nd.num_conditions {
            return Err(err(format!("network {:?}: condition count mismatch", nd.name)));
        }
        let mut read = |t: &Tensor| -> Result<Tensor> {
            let need = t.len() * 4;
            if blob.len() < need {
                return Err(err(format!("truncated parameter blob in network {:?}", nd.name)));
            }
            let data = blob[..need]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            blob = &blob[need..];
            Tensor::new(t.shape().to_vec(), data)
        };
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        for (ps, bs) in template.params().iter().zip(template.buffers()) {
            params.push(ps.iter().map(&mut read).collect::<Result<Vec<_>>>()?);
            buffers.push(bs.iter().map(&mut read).collect::<Result<Vec<_>>>()?);
        }
        networks.push((nd.name, Network::from_parts(nd.layers, params, buffers)?));
    }
    if !blob.is_empty() {
        return Err(err(format!("{} trailing bytes after parameter blob", blob.len())));
    }
    Ok(Checkpoint {
        networks,
        metadata: desc.metadata,
    })
}

/// Writes through a sibling `.partial` file, so readers never see a torn checkpoint.
pub fn write_checkpoint(path: &Path, networks: &[(&str, &Network)], metadata: &serde_json::Value) -> Result<()> {
    let bytes = encode(networks, metadata)?;
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    let tmp = path.with_file_name(name);
    let written = std::fs::File::create(&tmp).and_then(|mut f| {
        f.write_all(&bytes)?;
        f.sync_all()
    });
    if let Err(e) = written.and_then(|_| std::fs::rename(&tmp, path)) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode(&std::fs::read(path)?)
}
