//! Output tree under the run directory.
//!
//! ```text
//! data/cgan/L{L}/g{g}_{train,test}.qrgs   scan datasets, plus _vmc_trace.csv and _timing.json
//! data/dcgan/L{L}/g{g}.qrgs               DCGAN training data at side L
//! data/reference/L{2L}/g{g}.qrgs          VMC reference at side 2L
//! data/adhoc/L{L}/g{g}.qrgs               single datasets from `sample --g --L`
//! cgan/L{L}/                              model.ckpt, cgan_trace.csv, latent_scan.csv,
//!                                         latent2d.csv, classification.csv, lv_fit.csv
//! critical_points.csv, extrapolation.csv
//! dcgan/g{g}/                             model.ckpt, dcgan_trace.csv, training.json,
//!                                         generated_L{2L}.qrgs
//! benchmark.csv, comparison.csv, measurements.csv, manifests/{command}.json
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub fn gtag(g: f64) -> String {
    format!("g{g:.4}")
}

#[derive(Clone, Debug)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn cgan_data(&self, l: usize, g: f64, suffix: &str) -> PathBuf {
        self.root.join(format!("data/cgan/L{l}/{}_{suffix}", gtag(g)))
    }

    pub fn cgan_train(&self, l: usize, g: f64) -> PathBuf {
        self.cgan_data(l, g, "train.qrgs")
    }

    pub fn cgan_test(&self, l: usize, g: f64) -> PathBuf {
        self.cgan_data(l, g, "test.qrgs")
    }

    pub fn cgan_vmc_trace(&self, l: usize, g: f64) -> PathBuf {
        self.cgan_data(l, g, "vmc_trace.csv")
    }

    pub fn cgan_timing(&self, l: usize, g: f64) -> PathBuf {
        self.cgan_data(l, g, "timing.json")
    }

    /// Dataset, VMC trace and timing paths of a single-file set.
    pub fn single(&self, set: &str, l: usize, g: f64) -> [PathBuf; 3] {
        let base = self.root.join(format!("data/{set}/L{l}/{}", gtag(g)));
        ["qrgs", "vmc_trace.csv", "timing.json"].map(|ext| {
            let mut p = base.clone().into_os_string();
            p.push(if ext == "qrgs" { ".qrgs".to_string() } else { format!("_{ext}") });
            PathBuf::from(p)
        })
    }

    pub fn cgan_dir(&self, l: usize) -> PathBuf {
        self.root.join(format!("cgan/L{l}"))
    }

    pub fn dcgan_dir(&self, g: f64) -> PathBuf {
        self.root.join(format!("dcgan/{}", gtag(g)))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn manifest(&self, command: &str) -> PathBuf {
        self.root.join(format!("manifests/{command}.json"))
    }
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Write through a sibling temporary file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let tmp = partial_path(path);
    let result = fs::File::create(&tmp).and_then(|mut f| {
        f.write_all(bytes)?;
        f.sync_all()
    });
    if let Err(e) = result.and_then(|_| fs::rename(&tmp, path)) {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

/// Render with a writer callback, then write atomically.
pub fn write_with<F, E>(path: &Path, render: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::result::Result<(), E>,
    CliError: From<E>,
{
    let mut buf = Vec::new();
    render(&mut buf)?;
    write_atomic(path, &buf)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn require(path: PathBuf, what: impl Into<String>) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingInput {
            what: what.into(),
            path,
        })
    }
}

/// Best-effort removal of a failed job's outputs.
pub fn remove_all(paths: &[PathBuf]) {
    for p in paths {
        let _ = fs::remove_file(p);
    }
}
