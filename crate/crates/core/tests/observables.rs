use std::f64::consts::PI;

use proptest::prelude::*;
use qrm_core::dataset::{decode_dataset, encode_dataset};
use qrm_core::observables::{config_magnetization, config_potential_energy};
use qrm_core::{
    magnetization, potential_energy_density, read_dataset, write_dataset, CouplingParams, DatasetHeader, LatticeSpec,
    Producer, RotorConfiguration,
};
use qrm_oracles::{bond_loop_potential_energy, site_loop_magnetization};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_config(rng: &mut ChaCha8Rng, side: usize) -> RotorConfiguration {
    let lat = LatticeSpec::new(side).unwrap();
    RotorConfiguration::new(lat, (0..side * side).map(|_| rng.random_range(-PI..PI)).collect()).unwrap()
}

#[test]
fn observables_match_brute_force_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let j = 1.0;
    for _ in 0..1000 {
        let side = rng.random_range(2..9);
        let c = random_config(&mut rng, side);
        let m = magnetization(std::slice::from_ref(&c)).unwrap();
        assert!((m - site_loop_magnetization(c.angles(), side)).abs() < 1e-10);
        let e = potential_energy_density(std::slice::from_ref(&c), CouplingParams::new(j, 4.0).unwrap()).unwrap();
        assert!((e - bond_loop_potential_energy(c.angles(), side, j)).abs() < 1e-10);
    }
}

#[test]
fn analytic_configurations() {
    let p = CouplingParams::new(1.0, 1.0).unwrap();
    for side in [2, 4, 6] {
        let lat = LatticeSpec::new(side).unwrap();
        let aligned = vec![RotorConfiguration::uniform(lat, 0.7)];
        assert_eq!(magnetization(&aligned).unwrap(), 1.0);
        assert_eq!(potential_energy_density(&aligned, p).unwrap(), -2.0);
        let check = vec![RotorConfiguration::checkerboard(lat)];
        assert!(magnetization(&check).unwrap() < 1e-15);
        assert!((potential_energy_density(&check, p).unwrap() - 2.0).abs() < 1e-15);
    }
    let lat = LatticeSpec::new(2).unwrap();
    let c = RotorConfiguration::new(lat, vec![0.0, PI, 0.0, PI]).unwrap();
    assert!(magnetization(&[c]).unwrap() < 1e-15);
}

#[test]
fn empty_and_mixed_batches_are_rejected() {
    let p = CouplingParams::new(1.0, 1.0).unwrap();
    assert!(magnetization(&[]).is_err());
    assert!(potential_energy_density(&[], p).is_err());
    let a = RotorConfiguration::uniform(LatticeSpec::new(2).unwrap(), 0.0);
    let b = RotorConfiguration::uniform(LatticeSpec::new(3).unwrap(), 0.0);
    assert!(magnetization(&[a, b]).is_err());
}

#[test]
fn invalid_couplings() {
    assert!(CouplingParams::new(0.0, 1.0).is_err());
    assert!(CouplingParams::new(1.0, -0.1).is_err());
    assert!(CouplingParams::new(1.0, 0.0).is_ok());
}

fn header(count: usize, l: usize) -> DatasetHeader {
    DatasetHeader {
        g: 4.25,
        j: 1.0,
        l,
        count,
        seed: 7,
        producer: Producer::VmcHmc,
    }
}

#[test]
fn dataset_roundtrip_is_byte_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch: Vec<_> = (0..3).map(|_| random_config(&mut rng, 4)).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.qrgs");
    write_dataset(&path, &header(3, 4), &batch).unwrap();
    let first = std::fs::read(&path).unwrap();
    let (h, back) = read_dataset(&path).unwrap();
    assert_eq!(h, header(3, 4));
    for (a, b) in batch.iter().zip(&back) {
        for (x, y) in a.angles().iter().zip(b.angles()) {
            assert_eq!(*x as f32 as f64, *y);
        }
    }
    write_dataset(&path, &h, &back).unwrap();
    assert_eq!(first, std::fs::read(&path).unwrap());
    let json_start = 12;
    let text = String::from_utf8_lossy(&first[json_start..]);
    assert!(text.contains("\"producer\":\"vmc-hmc\"") && text.contains("\"L\":4") && text.contains("\"J\":1.0"));
}

#[test]
fn dataset_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch: Vec<_> = (0..2).map(|_| random_config(&mut rng, 3)).collect();
    assert!(encode_dataset(&header(0, 3), &[]).is_err());
    assert!(encode_dataset(&header(3, 3), &batch).is_err());
    assert!(encode_dataset(&header(2, 4), &batch).is_err());
    let bytes = encode_dataset(&header(2, 3), &batch).unwrap();
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(decode_dataset(&wrong).unwrap_err().contains("QRGS"));
    let mut version = bytes.clone();
    version[4] = 2;
    assert!(decode_dataset(&version).unwrap_err().contains("version"));
    assert!(decode_dataset(&bytes[..bytes.len() - 3]).unwrap_err().contains("truncated"));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_dataset(&extra).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.qrgs");
    std::fs::write(&path, &wrong).unwrap();
    let err = read_dataset(&path).unwrap_err().to_string();
    assert!(err.contains("QRGS") && err.contains("bad.qrgs"));
}

proptest! {
    #[test]
    fn observables_are_symmetric_and_bounded(
        seed in 0u64..10_000,
        side in 2usize..7,
        c in -10.0f64..10.0,
        dr in 0isize..7,
        dc in 0isize..7,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = random_config(&mut rng, side);
        let lat = cfg.lattice();
        let m = config_magnetization(cfg.angles());
        let e = config_potential_energy(&lat, cfg.angles(), 1.0);
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert!((-2.0..=2.0).contains(&e));
        let rotated: Vec<f64> = cfg.angles().iter().map(|a| a + c).collect();
        prop_assert!((config_magnetization(&rotated) - m).abs() < 1e-12);
        prop_assert!((config_potential_energy(&lat, &rotated, 1.0) - e).abs() < 1e-12);
        let shifted: Vec<f64> = (0..lat.sites()).map(|s| cfg.angles()[lat.offset(s, dr, dc)]).collect();
        prop_assert!((config_potential_energy(&lat, &shifted, 1.0) - e).abs() < 1e-12);
    }

    #[test]
    fn canonicalization_preserves_the_state(angles in prop::collection::vec(-100.0f64..100.0, 4)) {
        let lat = LatticeSpec::new(2).unwrap();
        let c = RotorConfiguration::new(lat, angles.clone()).unwrap().canonicalize().unwrap();
        for (a, b) in angles.iter().zip(c.angles()) {
            prop_assert!((-PI..PI).contains(b));
            prop_assert!((a.cos() - b.cos()).abs() < 1e-12 && (a.sin() - b.sin()).abs() < 1e-12);
        }
    }
}
