//! `qrm` pipeline: VMC datasets, CGAN latent scans, critical-point analysis,
//! DCGAN training and generation benchmarks. Every command validates the
//! whole configuration before touching the output directory, and records its
//! seeds and the configuration hash in `manifests/<command>.json`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod layout;

use qrm_core::par;
use serde::Serialize;

use cli::{Cli, Command};
use config::RunConfig;
use error::{CliError, Result};
use layout::Layout;

pub struct Context {
    pub config: RunConfig,
    pub layout: Layout,
    pub force: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JobSeed {
    pub job: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    experiment: &'a str,
    config_sha256: String,
    seed: u64,
    jobs: &'a [JobSeed],
}

pub fn notice(msg: impl AsRef<str>) {
    eprintln!("note: {}", msg.as_ref());
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Sample(_) => "sample",
        Command::TrainCgan(_) => "train-cgan",
        Command::Analyze => "analyze",
        Command::TrainDcgan(_) => "train-dcgan",
        Command::Bench(_) => "bench",
        Command::Measure(_) => "measure",
    }
}

/// Resolve the configuration with command-line overrides and validate it.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    match &cli.command {
        Command::TrainCgan(a) => {
            if let Some(e) = a.epochs {
                config.cgan.epochs = e;
            }
        }
        Command::TrainDcgan(a) => {
            if let Some(e) = a.epochs {
                config.dcgan.epochs = e;
            }
        }
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let config = resolve_config(&cli)?;
    match cli.workers {
        Some(1) => par::set_sequential(true),
        Some(n) if !par::init_pool(n) && par::is_parallel() => {
            notice(format!("worker pool already initialized; --workers {n} ignored"));
        }
        _ => {}
    }
    let ctx = Context {
        layout: Layout::new(config.out.clone()),
        config,
        force: cli.force,
    };
    let jobs = match &cli.command {
        Command::Sample(a) => commands::sample::run(&ctx, a)?,
        Command::TrainCgan(a) => commands::cgan::run(&ctx, a)?,
        Command::Analyze => commands::analyze::run(&ctx)?,
        Command::TrainDcgan(a) => commands::dcgan::run(&ctx, a)?,
        Command::Bench(a) => commands::bench::run(&ctx, a)?,
        Command::Measure(a) => commands::measure::run(&ctx, a)?,
    };
    let name = command_name(&cli.command);
    let manifest = Manifest {
        tool: "qrm",
        version: env!("CARGO_PKG_VERSION"),
        command: name,
        experiment: &ctx.config.experiment,
        config_sha256: ctx.config.digest(),
        seed: ctx.config.seed,
        jobs: &jobs,
    };
    layout::write_json(&ctx.layout.manifest(name), &manifest)
}
