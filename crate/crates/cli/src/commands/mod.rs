pub mod analyze;
pub mod bench;
pub mod cgan;
pub mod dcgan;
pub mod measure;
pub mod sample;

use std::path::Path;

use qrm_core::{read_dataset, CoreError, DatasetHeader, RotorConfiguration};

use crate::error::Result;

/// Read a dataset and check that it holds side `l` samples at coupling `g`.
pub(crate) fn load_dataset(path: &Path, l: usize, g: f64) -> Result<(DatasetHeader, Vec<RotorConfiguration>)> {
    let (header, batch) = read_dataset(path)?;
    if header.l != l || (header.g - g).abs() > 1e-9 {
        return Err(CoreError::Dataset {
            path: path.to_path_buf(),
            reason: format!("expected L={l}, g={g}; file holds L={}, g={}", header.l, header.g),
        }
        .into());
    }
    Ok((header, batch))
}

/// The configured value closest to `g` within 1e-9, if any.
pub(crate) fn pick_g(values: &[f64], g: f64) -> Option<f64> {
    values.iter().copied().find(|v| (v - g).abs() < 1e-9)
}
