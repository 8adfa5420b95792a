use std::path::PathBuf;

use qrm_core::{generate_dataset, par, write_dataset, CouplingParams, DatasetHeader, LatticeSpec};
use serde::{Deserialize, Serialize};

use crate::cli::{SampleArgs, SampleSet};
use crate::config::round9;
use crate::error::{CliError, Result};
use crate::layout::{gtag, remove_all, write_json, write_with};
use crate::{notice, Context, JobSeed};

/// Wall-clock sidecar of one VMC run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VmcTiming {
    pub optimize_seconds: f64,
    pub sample_seconds: f64,
    pub sample_count: usize,
    pub workers: usize,
}

struct Job {
    name: String,
    l: usize,
    g: f64,
    seed: u64,
    /// `(count, path)` pieces cut from one run, in draw order.
    parts: Vec<(usize, PathBuf)>,
    trace: PathBuf,
    timing: PathBuf,
}

impl Job {
    fn outputs(&self) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = self.parts.iter().map(|(_, p)| p.clone()).collect();
        v.push(self.trace.clone());
        v.push(self.timing.clone());
        v
    }
}

fn plan(ctx: &Context, args: &SampleArgs) -> Result<Vec<Job>> {
    let cfg = &ctx.config;
    let lay = &ctx.layout;
    let section = cfg.sample.vmc.hmc.seed;
    let single = |set: &str, l: usize, g: f64, count: usize| {
        let [data, trace, timing] = lay.single(set, l, g);
        let name = format!("sample/{set}/L{l}/{}", gtag(g));
        Job {
            seed: cfg.job_seed(section, &name),
            name,
            l,
            g,
            parts: vec![(count, data)],
            trace,
            timing,
        }
    };

    match (args.g, args.l) {
        (Some(g), Some(l)) => {
            if l < 2 {
                return Err(CliError::Usage(format!("--L {l} is below 2")));
            }
            let g = round9(g);
            CouplingParams::new(cfg.j, g).map_err(|e| CliError::Usage(e.to_string()))?;
            let count = args.count.unwrap_or(cfg.sample.train_count);
            if count == 0 {
                return Err(CliError::Usage("--count must be positive".into()));
            }
            return Ok(vec![single("adhoc", l, g, count)]);
        }
        (None, None) if args.count.is_none() => {}
        _ => return Err(CliError::Usage("--g, --L and --count select one dataset; give --g and --L together".into())),
    }

    let want = |s: SampleSet| args.set == SampleSet::All || args.set == s;
    let mut jobs = Vec::new();
    if want(SampleSet::Cgan) {
        for &l in &cfg.sizes {
            for g in cfg.grid.values() {
                let name = format!("sample/cgan/L{l}/{}", gtag(g));
                jobs.push(Job {
                    seed: cfg.job_seed(section, &name),
                    name,
                    l,
                    g,
                    parts: vec![
                        (cfg.sample.train_count, lay.cgan_train(l, g)),
                        (cfg.sample.test_count, lay.cgan_test(l, g)),
                    ],
                    trace: lay.cgan_vmc_trace(l, g),
                    timing: lay.cgan_timing(l, g),
                });
            }
        }
    }
    let amp = &cfg.amplifier;
    if want(SampleSet::Dcgan) {
        for &g in &amp.g_values {
            jobs.push(single("dcgan", amp.side, round9(g), amp.train_count));
        }
    }
    if want(SampleSet::Reference) {
        for &g in &amp.g_values {
            jobs.push(single("reference", 2 * amp.side, round9(g), amp.reference_count));
        }
    }
    Ok(jobs)
}

fn run_job(ctx: &Context, job: &Job) -> Result<()> {
    let cfg = &ctx.config;
    let params = CouplingParams::new(cfg.j, job.g)?;
    let lattice = LatticeSpec::new(job.l)?;
    let mut settings = cfg.sample.vmc.clone();
    settings.hmc.seed = job.seed;
    let total: usize = job.parts.iter().map(|(n, _)| n).sum();
    let generated = generate_dataset(params, lattice, total, cfg.sample.ansatz, &settings, None)?;
    let mut start = 0;
    for (count, path) in &job.parts {
        let header = DatasetHeader {
            count: *count,
            ..generated.header.clone()
        };
        if let Some(dir) = path.parent() {
            crate::layout::ensure_dir(dir)?;
        }
        write_dataset(path, &header, &generated.configurations[start..start + count])?;
        start += count;
    }
    write_with(&job.trace, |b| generated.trace.write_csv(b))?;
    write_json(
        &job.timing,
        &VmcTiming {
            optimize_seconds: generated.optimize_seconds,
            sample_seconds: generated.sample_seconds,
            sample_count: total,
            workers: par::workers(),
        },
    )
}

pub fn run(ctx: &Context, args: &SampleArgs) -> Result<Vec<JobSeed>> {
    let jobs = plan(ctx, args)?;
    let seeds = jobs
        .iter()
        .map(|j| JobSeed {
            job: j.name.clone(),
            seed: j.seed,
        })
        .collect();
    let todo: Vec<&Job> = jobs
        .iter()
        .filter(|j| {
            let done = j.outputs().iter().all(|p| p.is_file());
            if done && !ctx.force {
                notice(format!("{} exists, skipping (use --force to recompute)", j.name));
            }
            ctx.force || !done
        })
        .collect();
    let results = par::map_range(todo.len(), |i| {
        let job = todo[i];
        let r = run_job(ctx, job);
        if r.is_err() {
            remove_all(&job.outputs());
        }
        r
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    Ok(seeds)
}
