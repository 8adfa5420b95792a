use std::fs;
use std::io::Write;

use qrm_core::{measure, read_dataset, CouplingParams};
use serde::Serialize;

use crate::cli::MeasureArgs;
use crate::error::{CliError, Result};
use crate::layout::write_atomic;
use crate::{Context, JobSeed};

/// One row of `measurements.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurementRow {
    pub path: String,
    pub producer: String,
    pub g: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub count: usize,
    #[serde(rename = "M")]
    pub m: f64,
    pub eps_p: f64,
    #[serde(rename = "M_stderr")]
    pub m_stderr: f64,
    pub eps_p_stderr: f64,
}

fn render(row: &MeasurementRow, header: bool) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(Vec::new());
    w.serialize(row)?;
    w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
}

pub fn run(ctx: &Context, args: &MeasureArgs) -> Result<Vec<JobSeed>> {
    if args.path.as_os_str().is_empty() {
        return Err(CliError::Usage("measure needs a dataset path".into()));
    }
    let (header, batch) = read_dataset(&args.path)?;
    let record = measure(&batch, CouplingParams::new(header.j, header.g)?)?;
    let row = MeasurementRow {
        path: args.path.display().to_string(),
        producer: header.producer.as_str().into(),
        g: header.g,
        l: header.l,
        count: record.sample_count,
        m: record.magnetization,
        eps_p: record.potential_energy_density,
        m_stderr: record.magnetization_stderr,
        eps_p_stderr: record.potential_energy_stderr,
    };
    let out = ctx.layout.file("measurements.csv");
    let mut bytes = match fs::read(&out) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(CliError::io(&out, e)),
    };
    let line = render(&row, bytes.is_empty())?;
    bytes.extend_from_slice(&line);
    write_atomic(&out, &bytes)?;
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(&render(&row, true)?)
        .map_err(|e| CliError::io("<stdout>", e))?;
    Ok(Vec::new())
}
