use qrm_core::{measure, write_dataset, CouplingParams, DatasetHeader, Producer};
use qrm_gan::dcgan::{write_benchmarks, BenchmarkRow};
use qrm_gan::{compare_producers, generate_batch, DcganModel, GenerationBenchmark};
use serde::Serialize;

use super::dcgan::{selected_g, TrainingRecord};
use super::load_dataset;
use super::sample::VmcTiming;
use crate::cli::BenchArgs;
use crate::error::Result;
use crate::layout::{gtag, read_json, require, write_with};
use crate::{notice, Context, JobSeed};

/// One row of `comparison.csv`: DCGAN minus VMC at side `2L`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub g: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub count: usize,
    pub time_ratio: f64,
    #[serde(rename = "delta_M")]
    pub delta_m: f64,
    pub delta_eps_p: f64,
    #[serde(rename = "M_pooled_stderr")]
    pub m_pooled_stderr: f64,
    pub eps_p_pooled_stderr: f64,
    /// `|delta_M| <= max(0.05, 3 pooled stderr)`.
    #[serde(rename = "M_agrees")]
    pub m_agrees: bool,
    /// `|delta_eps_p| <= max(0.05 J, 3 pooled stderr)`.
    pub eps_p_agrees: bool,
}

pub fn run(ctx: &Context, args: &BenchArgs) -> Result<Vec<JobSeed>> {
    let cfg = &ctx.config;
    let amp = &cfg.amplifier;
    let big = 2 * amp.side;
    let gs = selected_g(&amp.g_values, args.g)?;
    let mut plan = Vec::new();
    for &g in &gs {
        let dir = ctx.layout.dcgan_dir(g);
        let what = |f: &str| format!("DCGAN {f} for {} (run train-dcgan first)", gtag(g));
        let model = require(dir.join("model.ckpt"), what("checkpoint"))?;
        let record = require(dir.join("training.json"), what("training record"))?;
        let [data, _, timing] = ctx.layout.single("reference", big, g);
        let reference = (data.is_file() && timing.is_file()).then_some((data, timing));
        if reference.is_none() {
            notice(format!(
                "no VMC reference at L={big}, {}: generation timing only, observables unverified",
                gtag(g)
            ));
        }
        let job = format!("bench/{}", gtag(g));
        let seed = cfg.job_seed(cfg.dcgan.seed, &job);
        plan.push((g, model, record, reference, job, seed));
    }

    let mut rows = Vec::new();
    let mut comparisons = Vec::new();
    for (g, model_path, record_path, reference, _, seed) in &plan {
        let model = DcganModel::load(model_path)?;
        let record: TrainingRecord = read_json(record_path)?;
        let trained = record.epochs > 0;
        let (batch, bench) = generate_batch(&model, amp.generate_count, *seed)?;
        let header = DatasetHeader {
            g: *g,
            j: cfg.j,
            l: big,
            count: batch.len(),
            seed: *seed,
            producer: Producer::Dcgan,
        };
        write_dataset(&ctx.layout.dcgan_dir(*g).join(format!("generated_L{big}.qrgs")), &header, &batch)?;
        drop(batch);

        let train_row = BenchmarkRow::training(
            Producer::Dcgan,
            *g,
            record.side,
            record.train_count,
            record.wall_seconds,
            trained,
        );
        let Some((data, timing)) = reference else {
            rows.push(BenchmarkRow {
                workers: record.workers,
                ..train_row
            });
            rows.push(BenchmarkRow::generation(&bench, trained, false));
            continue;
        };

        let (_, reference) = load_dataset(data, big, *g)?;
        let timing: VmcTiming = read_json(timing)?;
        let vmc = GenerationBenchmark {
            producer: Producer::VmcHmc,
            g: *g,
            side: big,
            sample_count: reference.len(),
            wall_seconds: timing.sample_seconds,
            workers: timing.workers,
            observables: measure(&reference, CouplingParams::new(cfg.j, *g)?)?,
        };
        let verified = match compare_producers(&bench, &vmc) {
            Ok(c) => {
                comparisons.push(ComparisonRow {
                    g: *g,
                    l: big,
                    count: bench.sample_count,
                    time_ratio: c.time_ratio,
                    delta_m: c.delta_m,
                    delta_eps_p: c.delta_eps_p,
                    m_pooled_stderr: c.m_pooled_stderr,
                    eps_p_pooled_stderr: c.eps_p_pooled_stderr,
                    m_agrees: c.delta_m.abs() <= 0.05f64.max(3.0 * c.m_pooled_stderr),
                    eps_p_agrees: c.delta_eps_p.abs() <= (0.05 * cfg.j).max(3.0 * c.eps_p_pooled_stderr),
                });
                true
            }
            Err(e) => {
                notice(format!("{}: not compared ({e})", gtag(*g)));
                false
            }
        };
        rows.push(BenchmarkRow {
            workers: record.workers,
            ..train_row
        });
        rows.push(BenchmarkRow::generation(&bench, trained, verified));
        rows.push(BenchmarkRow {
            workers: timing.workers,
            ..BenchmarkRow::training(Producer::VmcHmc, *g, big, timing.sample_count, timing.optimize_seconds, true)
        });
        rows.push(BenchmarkRow::generation(&vmc, true, verified));
    }
    write_with(&ctx.layout.file("benchmark.csv"), |b| write_benchmarks(b, &rows))?;
    write_with(&ctx.layout.file("comparison.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        for r in &comparisons {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)
    })?;
    Ok(plan
        .into_iter()
        .map(|(_, _, _, _, job, seed)| JobSeed { job, seed })
        .collect())
}
