//! Run configuration, read from TOML. Every section is optional and falls back
//! to the full-scan defaults of [`RunConfig::default`].

use std::path::{Path, PathBuf};

use qrm_core::analysis::ExtremumKind;
use qrm_core::analysis::ExtremumSearch;
use qrm_core::{AnsatzKind, CouplingParams, VmcSettings};
use qrm_gan::{check_side, CganSettings, DcganSettings, LabelRule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    /// Root of every job seed.
    pub seed: u64,
    pub out: PathBuf,
    #[serde(rename = "J")]
    pub j: f64,
    /// Lattice sides of the critical-point scan.
    pub sizes: Vec<usize>,
    pub grid: GridConfig,
    pub sample: SampleConfig,
    pub labels: LabelRule,
    pub cgan: CganSettings,
    pub analysis: AnalysisConfig,
    pub amplifier: AmplifierConfig,
    pub dcgan: DcganSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: "full".into(),
            seed: 0,
            out: PathBuf::from("runs/full"),
            j: 1.0,
            sizes: vec![4, 6, 8, 10, 12],
            grid: GridConfig::default(),
            sample: SampleConfig::default(),
            labels: LabelRule::default(),
            cgan: CganSettings::default(),
            analysis: AnalysisConfig::default(),
            amplifier: AmplifierConfig::default(),
            dcgan: DcganSettings::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub g_min: f64,
    pub g_max: f64,
    pub g_step: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            g_min: 3.5,
            g_max: 4.5,
            g_step: 0.05,
        }
    }
}

impl GridConfig {
    /// Inclusive grid, rounded to 1e-9 so that file names and label bands see
    /// clean decimals.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.g_max - self.g_min) / self.g_step + 1e-6).floor() as usize;
        (0..=n).map(|k| round9(self.g_min + k as f64 * self.g_step)).collect()
    }
}

pub fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Training samples per (L, g).
    pub train_count: usize,
    /// Held-out samples per (L, g), drawn after the training ones.
    pub test_count: usize,
    pub ansatz: AnsatzKind,
    pub vmc: VmcSettings,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            train_count: 2000,
            test_count: 500,
            ansatz: AnsatzKind::Jastrow { shells: 2, harmonics: 2 },
            vmc: VmcSettings::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub degree: usize,
    /// Pick the degree in 3..=8 by AICc instead of using `degree`.
    pub select_degree: bool,
    /// Unset: chosen from the fitted curve's direction.
    pub kind: Option<ExtremumKind>,
    pub search: ExtremumSearch,
    /// Points of the exported fitted curve per size.
    pub curve_points: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            degree: 5,
            select_degree: false,
            kind: None,
            search: ExtremumSearch::default(),
            curve_points: 201,
        }
    }
}

/// Where and how much the DCGAN learns and generates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmplifierConfig {
    /// Training side `L`; generated and reference samples have side `2L`.
    pub side: usize,
    pub g_values: Vec<f64>,
    pub train_count: usize,
    pub generate_count: usize,
    pub reference_count: usize,
}

impl Default for AmplifierConfig {
    fn default() -> Self {
        Self {
            side: 4,
            g_values: vec![3.5, 4.254, 8.0],
            train_count: 2000,
            generate_count: 10000,
            reference_count: 10000,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let gr = &self.grid;
        if !(gr.g_min.is_finite() && gr.g_max.is_finite() && gr.g_step.is_finite()) {
            return Err(invalid("grid bounds and step must be finite"));
        }
        if gr.g_step <= 0.0 {
            return Err(invalid(format!("grid.g_step must be positive, got {}", gr.g_step)));
        }
        if gr.g_min >= gr.g_max {
            return Err(invalid(format!("grid.g_min {} must be below grid.g_max {}", gr.g_min, gr.g_max)));
        }
        if self.sizes.is_empty() {
            return Err(invalid("sizes must not be empty"));
        }
        if let Some(l) = self.sizes.iter().find(|&&l| l < 2) {
            return Err(invalid(format!("lattice side {l} is below 2")));
        }
        for g in self.grid.values().iter().chain(&self.amplifier.g_values) {
            CouplingParams::new(self.j, *g).map_err(|e| invalid(e.to_string()))?;
        }
        if self.sample.train_count == 0 || self.sample.test_count == 0 {
            return Err(invalid("sample.train_count and sample.test_count must be positive"));
        }
        self.sample.vmc.validate().map_err(|e| invalid(format!("sample.vmc: {e}")))?;
        self.labels.validate().map_err(|e| invalid(format!("labels: {e}")))?;
        self.cgan.validate().map_err(|e| invalid(format!("cgan: {e}")))?;
        self.dcgan.validate().map_err(|e| invalid(format!("dcgan: {e}")))?;

        let an = &self.analysis;
        if an.degree == 0 {
            return Err(invalid("analysis.degree must be positive"));
        }
        let needed = if an.select_degree { 5 } else { an.degree + 2 };
        if self.grid.values().len() < needed {
            return Err(invalid(format!(
                "{} grid points cannot support the requested fit (need {needed})",
                self.grid.values().len()
            )));
        }
        let s = &an.search;
        if !(s.grid_step > 0.0 && s.grid_step.is_finite()) || !(s.interior > 0.0 && s.interior <= 1.0) {
            return Err(invalid("analysis.search needs grid_step > 0 and interior in (0, 1]"));
        }
        if an.curve_points < 2 {
            return Err(invalid("analysis.curve_points must be at least 2"));
        }

        let amp = &self.amplifier;
        check_side(amp.side).map_err(|e| invalid(format!("amplifier.side: {e}")))?;
        if amp.g_values.is_empty() {
            return Err(invalid("amplifier.g_values must not be empty"));
        }
        if amp.train_count < 2 || amp.generate_count == 0 || amp.reference_count == 0 {
            return Err(invalid("amplifier counts must be positive (train_count at least 2)"));
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration after command-line overrides.
    /// The output directory is left out, so relocated reruns hash alike.
    pub fn digest(&self) -> String {
        let anchored = RunConfig {
            out: PathBuf::new(),
            ..self.clone()
        };
        let text = toml::to_string(&anchored).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }

    /// Seed of one job: the root seed, the section's own seed and the job
    /// name hashed together, so jobs stay independent of scheduling order.
    pub fn job_seed(&self, section_seed: u64, job: &str) -> u64 {
        let text = format!("{}:{}:{}", self.seed, section_seed, job);
        let d = Sha256::digest(text.as_bytes());
        u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
