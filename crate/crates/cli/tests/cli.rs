mod common;

use common::{num, qrm, qrm_ok, read_csv, write_config, TINY};
use qrm_core::{write_dataset, DatasetHeader, LatticeSpec, Producer, RotorConfiguration};

fn error_json(stderr: &[u8]) -> serde_json::Value {
    let text = String::from_utf8_lossy(stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

#[test]
fn zero_step_fails_validation_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "bad.toml", &TINY.replace("g_step = 0.25", "g_step = 0.0"));
    let res = qrm(&["--config", &cfg, "--out", out.to_str().unwrap(), "sample"]);
    assert_eq!(res.status.code(), Some(1));
    let err = error_json(&res.stderr);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("g_step"));
    assert!(!out.exists());
}

#[test]
fn unknown_keys_and_bad_sections_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for (name, text) in [
        ("typo.toml", TINY.replace("[cgan]\nepochs", "[cgan]\nepoch")),
        ("range.toml", TINY.replace("g_min = 3.5", "g_min = 5.0")),
        ("side.toml", TINY.replace("sizes = [4, 6]", "sizes = [1, 4]")),
    ] {
        let cfg = write_config(dir.path(), name, &text);
        let res = qrm(&["--config", &cfg, "--out", out.to_str().unwrap(), "train-cgan"]);
        assert_eq!(res.status.code(), Some(1), "{name}");
        assert_eq!(error_json(&res.stderr)["error"], "config", "{name}");
    }
    assert!(!out.exists());
}

#[test]
fn usage_errors_are_machine_readable() {
    let res = qrm(&["measure", ""]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res.stderr)["error"], "usage");
    let res = qrm(&["no-such-command"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res.stderr)["error"], "usage");
    let res = qrm(&["--workers", "0", "analyze"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn measure_aligned_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let lat = LatticeSpec::new(4).unwrap();
    let batch = vec![RotorConfiguration::uniform(lat, 0.3); 5];
    let header = DatasetHeader {
        g: 4.0,
        j: 1.5,
        l: 4,
        count: 5,
        seed: 0,
        producer: Producer::Dcgan,
    };
    let data = dir.path().join("aligned.qrgs");
    write_dataset(&data, &header, &batch).unwrap();
    let out = dir.path().join("run");
    let args = ["--out", out.to_str().unwrap(), "measure", data.to_str().unwrap()];
    let res = qrm_ok(&args);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.starts_with("path,producer,g,L,count,M,eps_p,M_stderr,eps_p_stderr\n"));
    qrm_ok(&args);
    let rows = read_csv(&out.join("measurements.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(num(r, "M"), 1.0);
        assert_eq!(num(r, "eps_p"), -3.0);
        assert_eq!(num(r, "count"), 5.0);
        assert_eq!(r["producer"], "dcgan");
    }
    let res = qrm(&["--out", out.to_str().unwrap(), "measure", "/nonexistent/file.qrgs"]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(error_json(&res.stderr)["error"], "core");
}

#[test]
fn single_dataset_sample_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    let args = ["--config", &cfg, "--out", o, "sample", "--g", "4.25", "--L", "4", "--count", "10"];
    qrm_ok(&args);
    let data = out.join("data/adhoc/L4/g4.2500.qrgs");
    let (header, batch) = qrm_core::read_dataset(&data).unwrap();
    assert_eq!((header.l, header.count, batch.len()), (4, 10, 10));
    assert_eq!(header.g, 4.25);
    assert!(out.join("data/adhoc/L4/g4.2500_vmc_trace.csv").is_file());
    let before = std::fs::metadata(&data).unwrap().modified().unwrap();
    let again = qrm_ok(&args);
    assert!(String::from_utf8_lossy(&again.stderr).contains("skipping"));
    assert_eq!(std::fs::metadata(&data).unwrap().modified().unwrap(), before);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifests/sample.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["jobs"].as_array().unwrap().len(), 1);

    let res = qrm(&["--config", &cfg, "--out", o, "sample", "--g", "4.25"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn missing_dataset_names_the_hole() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    qrm_ok(&["--config", &cfg, "--out", o, "sample", "--set", "cgan"]);
    std::fs::remove_file(out.join("data/cgan/L6/g4.0000_test.qrgs")).unwrap();
    let res = qrm(&["--config", &cfg, "--out", o, "train-cgan"]);
    assert_eq!(res.status.code(), Some(1));
    let err = error_json(&res.stderr);
    assert_eq!(err["error"], "missing_input");
    let msg = err["message"].as_str().unwrap();
    assert!(msg.contains("L=6") && msg.contains("g4.0000"), "{msg}");
    assert!(!out.join("cgan").exists());
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    let base = ["--config", cfg.as_str(), "--out", o];
    let run = |extra: &[&str]| qrm_ok(&[&base[..], extra].concat());

    run(&["sample"]);
    for l in [4, 6] {
        for g in ["3.5000", "3.7500", "4.0000", "4.2500", "4.5000"] {
            assert!(out.join(format!("data/cgan/L{l}/g{g}_train.qrgs")).is_file());
        }
    }
    run(&["train-cgan"]);
    for l in [4, 6] {
        let d = out.join(format!("cgan/L{l}"));
        for f in ["model.ckpt", "cgan_trace.csv", "latent_scan.csv", "latent2d.csv", "classification.csv"] {
            assert!(d.join(f).is_file(), "{f}");
        }
        assert_eq!(read_csv(&d.join("latent_scan.csv")).len(), 5);
        assert_eq!(read_csv(&d.join("cgan_trace.csv")).len(), 2);
    }
    run(&["analyze"]);
    assert_eq!(read_csv(&out.join("critical_points.csv")).len(), 2);
    assert_eq!(read_csv(&out.join("extrapolation.csv")).len(), 1);
    assert_eq!(read_csv(&out.join("cgan/L4/lv_fit.csv")).len(), 11);

    run(&["train-dcgan"]);
    run(&["bench"]);
    let rows = read_csv(&out.join("benchmark.csv"));
    let kinds: Vec<(String, String)> = rows.iter().map(|r| (r["producer"].clone(), r["stage"].clone())).collect();
    let expect = [("dcgan", "train"), ("dcgan", "generate"), ("vmc-hmc", "train"), ("vmc-hmc", "generate")];
    assert_eq!(kinds, expect.map(|(a, b)| (a.to_string(), b.to_string())));
    assert!(rows.iter().all(|r| r["trained"] == "true"));
    assert_eq!(rows[1]["verified"], "true");
    assert_eq!(num(&rows[1], "L"), 8.0);
    assert_eq!(read_csv(&out.join("comparison.csv")).len(), 1);
    let gen = out.join("dcgan/g3.5000/generated_L8.qrgs");
    let res = run(&["measure", gen.to_str().unwrap()]);
    assert!(String::from_utf8(res.stdout).unwrap().contains(",dcgan,3.5,8,24,"));
    for m in ["sample", "train-cgan", "analyze", "train-dcgan", "bench", "measure"] {
        assert!(out.join(format!("manifests/{m}.json")).is_file(), "{m}");
    }
}

#[test]
fn single_size_skips_extrapolation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "one.toml", &TINY.replace("sizes = [4, 6]", "sizes = [4]"));
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    qrm_ok(&["--config", &cfg, "--out", o, "sample", "--set", "cgan"]);
    qrm_ok(&["--config", &cfg, "--out", o, "train-cgan"]);
    let res = qrm_ok(&["--config", &cfg, "--out", o, "analyze"]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("extrapolation skipped"));
    assert_eq!(read_csv(&out.join("critical_points.csv")).len(), 1);
    assert!(!out.join("extrapolation.csv").exists());
}

#[test]
fn untrained_and_unverified_benchmarks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    qrm_ok(&["--config", &cfg, "--out", o, "sample", "--set", "dcgan"]);
    qrm_ok(&["--config", &cfg, "--out", o, "train-dcgan", "--epochs", "0"]);
    let res = qrm_ok(&["--config", &cfg, "--out", o, "bench"]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("unverified"));
    let rows = read_csv(&out.join("benchmark.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["producer"] == "dcgan" && r["trained"] == "false" && r["verified"] == "false"));
    assert!(read_csv(&out.join("dcgan/g3.5000/dcgan_trace.csv")).is_empty());

    let res = qrm(&["--config", &cfg, "--out", o, "bench", "--g", "4.0"]);
    assert_eq!(res.status.code(), Some(2));
}
