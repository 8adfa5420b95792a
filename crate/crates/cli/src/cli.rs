use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "qrm", version, about = "Quantum rotor ground states: VMC sampling, GAN critical-point scans and DCGAN amplification")]
pub struct Cli {
    /// TOML run configuration; built-in full-scan defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the root seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Recompute datasets that already exist.
    #[arg(long, global = true)]
    pub force: bool,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize the variational state and draw datasets.
    Sample(SampleArgs),
    /// Train one CGAN per size and scan its latent variable over g.
    TrainCgan(CganArgs),
    /// Fit latent scans, locate g_c per size and extrapolate in 1/L.
    Analyze,
    /// Train one DCGAN per g at side L.
    TrainDcgan(DcganArgs),
    /// Generate 2L samples and compare them with the VMC reference.
    Bench(BenchArgs),
    /// Measure M and eps_p of a dataset file.
    Measure(MeasureArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SampleSet {
    All,
    Cgan,
    Dcgan,
    Reference,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Which planned datasets to produce.
    #[arg(long, value_enum, default_value = "all")]
    pub set: SampleSet,
    /// Single dataset at this g (requires --L).
    #[arg(long)]
    pub g: Option<f64>,
    /// Single dataset at this side (requires --g).
    #[arg(long = "L")]
    pub l: Option<usize>,
    /// Sample count of the single dataset.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CganArgs {
    /// Only this size.
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DcganArgs {
    /// Only this g (must be one of amplifier.g_values).
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Only this g (must be one of amplifier.g_values).
    #[arg(long)]
    pub g: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// Dataset file.
    pub path: PathBuf,
}
