use std::fs::File;

use qrm_core::analysis::{
    extrapolate, locate_gc, read_latent_scan, select_degree, write_critical_points, write_extrapolation,
    NormalizedCurvature,
};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::layout::{require, write_with};
use crate::{notice, Context, JobSeed};

/// One row of `lv_fit.csv`: the fitted latent curve and its normalized curvature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitRow {
    pub g: f64,
    pub lv_fit: f64,
    pub curvature: f64,
}

pub fn run(ctx: &Context) -> Result<Vec<JobSeed>> {
    let cfg = &ctx.config;
    let an = &cfg.analysis;
    let mut sizes = cfg.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let scans = sizes
        .iter()
        .map(|&l| {
            let path = require(
                ctx.layout.cgan_dir(l).join("latent_scan.csv"),
                format!("latent scan for L={l} (run train-cgan first)"),
            )?;
            let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
            Ok((l, read_latent_scan(file)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut seeds = Vec::new();
    let mut estimates = Vec::new();
    for (l, scan) in &scans {
        let job = format!("analyze/L{l}");
        let mut search = an.search;
        search.seed = cfg.job_seed(an.search.seed, &job);
        seeds.push(JobSeed {
            job,
            seed: search.seed,
        });
        let degree = if an.select_degree {
            let points: Vec<_> = scan.iter().map(|r| (r.g, r.lv_mean, 1.0)).collect();
            select_degree(&points, 3..=8)?
        } else {
            an.degree
        };
        let (estimate, fit) = locate_gc(*l, scan, degree, an.kind, &search)?;
        if estimate.low_confidence {
            notice(format!("L={l}: curvature extremum at the search boundary; g_c flagged low confidence"));
        }
        let field = NormalizedCurvature::new(&fit);
        let (a, b) = fit.domain;
        let n = an.curve_points - 1;
        let rows: Vec<FitRow> = (0..=n)
            .map(|i| {
                let g = a + (b - a) * i as f64 / n as f64;
                FitRow {
                    g,
                    lv_fit: fit.value(g),
                    curvature: field.at(g),
                }
            })
            .collect();
        write_with(&ctx.layout.cgan_dir(*l).join("lv_fit.csv"), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush().map_err(csv::Error::from)
        })?;
        estimates.push(estimate);
    }
    write_with(&ctx.layout.file("critical_points.csv"), |b| write_critical_points(b, &estimates))?;
    if estimates.len() >= 2 {
        let result = extrapolate(&estimates)?;
        write_with(&ctx.layout.file("extrapolation.csv"), |b| write_extrapolation(b, &result))?;
    } else {
        notice("a single lattice size: extrapolation skipped");
    }
    Ok(seeds)
}
