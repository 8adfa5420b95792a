#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

/// Two sizes, five couplings, a handful of samples: the whole pipeline in seconds.
pub const TINY: &str = r#"
experiment = "tiny"
seed = 7
sizes = [4, 6]

[grid]
g_min = 3.5
g_max = 4.5
g_step = 0.25

[sample]
train_count = 12
test_count = 6

[sample.vmc]
opt_steps = 3
batch_per_step = 8

[sample.vmc.hmc]
burn_in = 10
thinning = 1
chains = 2

[cgan]
epochs = 2
batch_size = 8

[analysis]
degree = 2
curve_points = 11

[analysis.search]
grid_step = 0.001
bootstrap = 8

[amplifier]
side = 4
g_values = [3.5]
train_count = 16
generate_count = 24
reference_count = 24

[dcgan]
epochs = 2
batch_size = 8
probe_size = 8
"#;

pub fn qrm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrm"))
        .args(args)
        .output()
        .expect("qrm binary runs")
}

/// Run and require success, echoing stderr on failure.
pub fn qrm_ok(args: &[&str]) -> Output {
    let out = qrm(args);
    assert!(
        out.status.success(),
        "qrm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// Rows of a CSV file as header-keyed string maps.
pub fn read_csv(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

pub fn num(row: &std::collections::HashMap<String, String>, key: &str) -> f64 {
    row.get(key)
        .unwrap_or_else(|| panic!("missing column {key}"))
        .parse()
        .unwrap_or_else(|e| panic!("column {key}: {e}"))
}
