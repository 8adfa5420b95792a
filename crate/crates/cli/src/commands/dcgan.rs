use std::path::PathBuf;
use std::time::Instant;

use qrm_core::{par, CouplingParams};
use qrm_gan::train_dcgan;
use serde::{Deserialize, Serialize};

use super::{load_dataset, pick_g};
use crate::cli::DcganArgs;
use crate::config::round9;
use crate::error::{CliError, Result};
use crate::layout::{gtag, require, write_json, write_with};
use crate::{Context, JobSeed};

/// `training.json` next to each DCGAN checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub g: f64,
    pub side: usize,
    pub train_count: usize,
    pub epochs: usize,
    pub wall_seconds: f64,
    pub workers: usize,
}

/// The configured g values, or the single one selected with `--g`.
pub(crate) fn selected_g(values: &[f64], g: Option<f64>) -> Result<Vec<f64>> {
    let values: Vec<f64> = values.iter().map(|&v| round9(v)).collect();
    match g {
        None => Ok(values),
        Some(g) => pick_g(&values, round9(g))
            .map(|g| vec![g])
            .ok_or_else(|| CliError::Usage(format!("--g {g} is not one of amplifier.g_values {values:?}"))),
    }
}

struct Job {
    g: f64,
    seed: u64,
    input: PathBuf,
}

fn run_job(ctx: &Context, job: &Job) -> Result<()> {
    let cfg = &ctx.config;
    let side = cfg.amplifier.side;
    let (_, train) = load_dataset(&job.input, side, job.g)?;
    let params = CouplingParams::new(cfg.j, job.g)?;
    let mut settings = cfg.dcgan.clone();
    settings.seed = job.seed;
    let clock = Instant::now();
    let (model, trace) = train_dcgan(&train, params, &settings)?;
    let wall_seconds = clock.elapsed().as_secs_f64();

    let dir = ctx.layout.dcgan_dir(job.g);
    crate::layout::ensure_dir(&dir)?;
    model.save(&dir.join("model.ckpt"))?;
    write_with(&dir.join("dcgan_trace.csv"), |b| trace.write_csv(b))?;
    write_json(
        &dir.join("training.json"),
        &TrainingRecord {
            g: job.g,
            side,
            train_count: train.len(),
            epochs: settings.epochs,
            wall_seconds,
            workers: par::workers(),
        },
    )
}

pub fn run(ctx: &Context, args: &DcganArgs) -> Result<Vec<JobSeed>> {
    let cfg = &ctx.config;
    let side = cfg.amplifier.side;
    let jobs = selected_g(&cfg.amplifier.g_values, args.g)?
        .into_iter()
        .map(|g| {
            let [data, _, _] = ctx.layout.single("dcgan", side, g);
            Ok(Job {
                g,
                seed: cfg.job_seed(cfg.dcgan.seed, &format!("train-dcgan/{}", gtag(g))),
                input: require(data, format!("DCGAN training dataset for L={side}, {}", gtag(g)))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let results = par::map_range(jobs.len(), |i| run_job(ctx, &jobs[i]));
    results.into_iter().collect::<Result<Vec<()>>>()?;
    Ok(jobs
        .iter()
        .map(|j| JobSeed {
            job: format!("train-dcgan/{}", gtag(j.g)),
            seed: j.seed,
        })
        .collect())
}
