//! Generative models for rotor ground-state samples.
//!
//! [`cgan`] is a semi-supervised conditional GAN whose generator bottleneck
//! is scanned across g to locate the critical coupling. [`dcgan`] learns
//! from `L x L` samples and generates `2L x 2L` ones.

pub mod cgan;
pub mod dcgan;
pub mod encode;
mod error;

pub use cgan::{assign_labels, check_side, extract_latents, train_cgan, CganModel, CganSettings, Label, LabelRule, LatentScanPoint};
pub use dcgan::{
    compare_producers, dcgan_loss, generate_batch, statistic_terms, train_dcgan, update_weights, DcganModel,
    DcganSettings, GenerationBenchmark, LossWeights, StatisticTerms,
};
pub use encode::encode_input;
pub use error::{GanError, Result};
