use std::path::PathBuf;

use qrm_core::{par, RotorConfiguration};
use qrm_gan::cgan::{write_latent2d, write_latent_scan};
use qrm_gan::{assign_labels, check_side, extract_latents, train_cgan, CganModel, Label};
use serde::Serialize;

use super::load_dataset;
use crate::cli::CganArgs;
use crate::error::{CliError, Result};
use crate::layout::{gtag, require, write_with};
use crate::{Context, JobSeed};

/// One row of `classification.csv`: held-out class predictions at one g.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationRow {
    #[serde(rename = "L")]
    pub l: usize,
    pub g: f64,
    /// `0`, `1` or `unlabeled`.
    pub label: String,
    pub n_test: usize,
    pub fraction_class_one: f64,
    pub mean_probability_one: f64,
}

type Sets = Vec<(f64, Vec<RotorConfiguration>)>;

struct Job {
    l: usize,
    seed: u64,
    inputs: Vec<(f64, PathBuf, PathBuf)>,
}

fn classification(model: &CganModel, l: usize, test: &Sets, ctx: &Context) -> Result<Vec<ClassificationRow>> {
    test.iter()
        .map(|(g, batch)| {
            let p = model.class_probabilities(batch)?;
            let n = p.len() as f64;
            let label = match assign_labels(*g, &ctx.config.labels) {
                Label::Zero => "0",
                Label::One => "1",
                Label::Unlabeled => "unlabeled",
            };
            Ok(ClassificationRow {
                l,
                g: *g,
                label: label.into(),
                n_test: p.len(),
                fraction_class_one: p.iter().filter(|&&x| x > 0.5).count() as f64 / n,
                mean_probability_one: p.iter().sum::<f64>() / n,
            })
        })
        .collect()
}

fn run_job(ctx: &Context, job: &Job) -> Result<()> {
    let mut train: Sets = Vec::new();
    let mut test: Sets = Vec::new();
    for (g, tr, te) in &job.inputs {
        train.push((*g, load_dataset(tr, job.l, *g)?.1));
        test.push((*g, load_dataset(te, job.l, *g)?.1));
    }
    let mut settings = ctx.config.cgan.clone();
    settings.seed = job.seed;
    let (model, trace) = train_cgan(&train, &ctx.config.labels, &settings)?;
    drop(train);

    let dir = ctx.layout.cgan_dir(job.l);
    crate::layout::ensure_dir(&dir)?;
    model.save(&dir.join("model.ckpt"))?;
    write_with(&dir.join("cgan_trace.csv"), |b| trace.write_csv(b))?;
    let scan = extract_latents(&model, &test)?;
    write_with(&dir.join("latent_scan.csv"), |b| write_latent_scan(b, &scan))?;
    write_with(&dir.join("latent2d.csv"), |b| write_latent2d(b, &scan))?;
    let rows = classification(&model, job.l, &test, ctx)?;
    write_with(&dir.join("classification.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)
    })
}

pub fn run(ctx: &Context, args: &CganArgs) -> Result<Vec<JobSeed>> {
    let cfg = &ctx.config;
    let sizes = match args.l {
        Some(l) => vec![l],
        None => cfg.sizes.clone(),
    };
    let mut jobs = Vec::new();
    for &l in &sizes {
        check_side(l).map_err(|e| CliError::Config(format!("train-cgan: {e}")))?;
        let inputs = cfg
            .grid
            .values()
            .into_iter()
            .map(|g| {
                let what = |part: &str| format!("{part} dataset for L={l}, {}", gtag(g));
                Ok((
                    g,
                    require(ctx.layout.cgan_train(l, g), what("training"))?,
                    require(ctx.layout.cgan_test(l, g), what("test"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        jobs.push(Job {
            l,
            seed: cfg.job_seed(cfg.cgan.seed, &format!("train-cgan/L{l}")),
            inputs,
        });
    }
    let results = par::map_range(jobs.len(), |i| run_job(ctx, &jobs[i]));
    results.into_iter().collect::<Result<Vec<()>>>()?;
    Ok(jobs
        .iter()
        .map(|j| JobSeed {
            job: format!("train-cgan/L{}", j.l),
            seed: j.seed,
        })
        .collect())
}
