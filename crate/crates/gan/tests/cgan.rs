use qrm_core::{LatticeSpec, RotorConfiguration};
use qrm_gan::cgan::{labeled_accuracy, write_latent2d, write_latent_scan};
use qrm_gan::{
    assign_labels, encode_input, extract_latents, train_cgan, CganModel, CganSettings, GanError, Label, LabelRule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_config(side: usize, spread: f64, rng: &mut ChaCha8Rng) -> RotorConfiguration {
    let lat = LatticeSpec::new(side).unwrap();
    let angles = (0..side * side).map(|_| rng.random_range(-spread..spread)).collect();
    RotorConfiguration::new(lat, angles).unwrap()
}

/// Ordered-looking samples at small g, disordered ones at large g.
fn toy_sets(side: usize, per_g: usize, seed: u64) -> Vec<(f64, Vec<RotorConfiguration>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [3.5, 3.6, 4.0, 4.4, 4.5]
        .iter()
        .map(|&g| {
            let spread = 0.3 + (g - 3.5) * 2.5;
            (g, (0..per_g).map(|_| random_config(side, spread, &mut rng)).collect())
        })
        .collect()
}

fn quick(epochs: usize) -> CganSettings {
    CganSettings {
        epochs,
        batch_size: 16,
        seed: 5,
        ..CganSettings::default()
    }
}

#[test]
fn label_examples_and_grid_counts() {
    let rule = LabelRule::default();
    assert_eq!(assign_labels(3.55, &rule), Label::Zero);
    assert_eq!(assign_labels(4.45, &rule), Label::One);
    assert_eq!(assign_labels(4.00, &rule), Label::Unlabeled);
    let grid: Vec<f64> = (0..21).map(|k| 3.5 + 0.05 * k as f64).collect();
    let count = |l: Label| grid.iter().filter(|&&g| assign_labels(g, &rule) == l).count();
    assert_eq!(count(Label::Zero), 3);
    assert_eq!(count(Label::One), 3);
    assert_eq!(count(Label::Unlabeled), 15);
}

#[test]
fn encoding_examples() {
    let lat = LatticeSpec::new(4).unwrap();
    let aligned = encode_input(&[RotorConfiguration::uniform(lat, 1.3)]).unwrap();
    assert_eq!(aligned.shape(), &[1, 4, 4, 4]);
    let d = aligned.data();
    assert!(d[..32].iter().all(|&v| v == 1.0));
    assert!(d[32..].iter().all(|&v| v == 0.0));

    let board = encode_input(&[RotorConfiguration::checkerboard(lat)]).unwrap();
    let d = board.data();
    assert!(d[..32].iter().all(|&v| (v + 1.0).abs() < 1e-15));
    assert!(d[32..].iter().all(|&v| v.abs() < 1e-15));
}

#[test]
fn encoding_rotation_invariant_and_translation_equivariant() {
    let side = 6;
    let lat = LatticeSpec::new(side).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // dyadic angles keep the rotated differences exactly representable
    let angles: Vec<f64> = (0..side * side).map(|_| rng.random_range(-64i32..64) as f64 / 64.0).collect();
    let base = encode_input(&[RotorConfiguration::new(lat, angles.clone()).unwrap()]).unwrap();
    let rotated: Vec<f64> = angles.iter().map(|a| a + 0.5).collect();
    let rot = encode_input(&[RotorConfiguration::new(lat, rotated).unwrap()]).unwrap();
    assert_eq!(base, rot);

    let generic: Vec<f64> = (0..side * side).map(|_| rng.random_range(-3.0..3.0)).collect();
    let a = encode_input(&[RotorConfiguration::new(lat, generic.clone()).unwrap()]).unwrap();
    let turned: Vec<f64> = generic.iter().map(|t| qrm_core::wrap_angle(t + 1.234)).collect();
    let b = encode_input(&[RotorConfiguration::new(lat, turned).unwrap()]).unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-12);
    }

    // shift by (1, 2): site (r, c) takes the angle of (r - 1, c - 2)
    let shifted: Vec<f64> = (0..side * side)
        .map(|s| {
            let (r, c) = (s / side, s % side);
            angles[((r + side - 1) % side) * side + (c + side - 2) % side]
        })
        .collect();
    let sh = encode_input(&[RotorConfiguration::new(lat, shifted).unwrap()]).unwrap();
    let plane = side * side;
    for ch in 0..4 {
        for s in 0..plane {
            let (r, c) = (s / side, s % side);
            let src = ((r + side - 1) % side) * side + (c + side - 2) % side;
            assert_eq!(sh.data()[ch * plane + s], base.data()[ch * plane + src]);
        }
    }
}

#[test]
fn generator_output_matches_input_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for side in [4, 6, 8, 10, 12] {
        let model = CganModel::new(side, 0).unwrap();
        let batch: Vec<_> = (0..3).map(|_| random_config(side, 3.0, &mut rng)).collect();
        let out = model.reconstruct(&batch).unwrap();
        assert_eq!(out.shape(), &[3, 4, side, side], "L = {side}");
    }
}

#[test]
fn decoder_consumes_exactly_the_taps() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = CganModel::new(4, 9).unwrap();
    let batch: Vec<_> = (0..5).map(|_| random_config(4, 2.0, &mut rng)).collect();
    let (z2, z1) = model.latents(&batch).unwrap();
    assert_eq!(model.decode(&z2, &z1).unwrap(), model.reconstruct(&batch).unwrap());
}

#[test]
fn zero_epochs_returns_initialization() {
    let sets = toy_sets(4, 8, 1);
    let (model, trace) = train_cgan(&sets, &LabelRule::default(), &quick(0)).unwrap();
    assert_eq!(model, CganModel::new(4, 5).unwrap());
    assert!(trace.rows.is_empty());
}

#[test]
fn short_training_is_finite_and_reproducible() {
    let sets = toy_sets(4, 24, 2);
    let rule = LabelRule::default();
    let (m1, t1) = train_cgan(&sets, &rule, &quick(3)).unwrap();
    let (m2, t2) = train_cgan(&sets, &rule, &quick(3)).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(m1, m2);
    assert_eq!(t1.rows.len(), 3);
    for r in &t1.rows {
        assert!(r.d_loss.is_finite() && r.g_loss.is_finite() && r.reconstruction.is_finite());
        assert!((0.0..=1.0).contains(&r.labeled_accuracy));
    }
    assert_ne!(m1, CganModel::new(4, 5).unwrap());
}

#[test]
fn toy_phases_become_separable() {
    let sets = toy_sets(4, 64, 3);
    let rule = LabelRule::default();
    let (model, _) = train_cgan(&sets, &rule, &quick(15)).unwrap();
    let held_out = toy_sets(4, 64, 4);
    let acc = labeled_accuracy(&model, &held_out, &rule).unwrap().unwrap();
    assert!(acc > 0.9, "accuracy {acc}");
}

#[test]
fn latent_tap_orders_the_bands() {
    let sets = toy_sets(4, 64, 3);
    let rule = LabelRule::default();
    let (model, _) = train_cgan(&sets, &rule, &quick(15)).unwrap();
    let scan = extract_latents(&model, &toy_sets(4, 64, 4)).unwrap();
    let first = scan.first().unwrap();
    let last = scan.last().unwrap();
    let se = first.lv_stderr.hypot(last.lv_stderr);
    assert!(last.lv_mean - first.lv_mean > 6.0 * se, "{} vs {} (se {se})", first.lv_mean, last.lv_mean);

    let plain = CganSettings {
        latent_weight: 0.0,
        ..quick(15)
    };
    let (other, _) = train_cgan(&sets, &rule, &plain).unwrap();
    assert_ne!(model, other);
}

#[test]
fn training_preconditions() {
    let sets = toy_sets(4, 4, 1);
    let rule = LabelRule::default();
    let no_one: Vec<_> = sets.iter().filter(|(g, _)| *g < 4.2).cloned().collect();
    assert!(matches!(
        train_cgan(&no_one, &rule, &quick(1)),
        Err(GanError::NoLabeledData { band: 1 })
    ));
    let mut mixed = sets.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    mixed[2].1.push(random_config(6, 1.0, &mut rng));
    assert!(matches!(train_cgan(&mixed, &rule, &quick(1)), Err(GanError::SideMismatch { .. })));
    assert!(matches!(train_cgan(&[], &rule, &quick(1)), Err(GanError::EmptyTrainingSet)));
    let bad = CganSettings {
        batch_size: 1,
        ..quick(1)
    };
    assert!(matches!(train_cgan(&sets, &rule, &bad), Err(GanError::InvalidSettings(_))));
}

#[test]
fn latent_scan_examples() {
    let model = CganModel::new(4, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let one = random_config(4, 2.0, &mut rng);
    let same = vec![one.clone(); 7];
    let scan = extract_latents(&model, &[(4.0, same)]).unwrap();
    let (_, z1) = model.latents(&[one]).unwrap();
    assert_eq!(scan.len(), 1);
    assert_eq!(scan[0].lv_stderr, 0.0);
    assert!((scan[0].lv_mean - z1[0]).abs() < 1e-12);
    assert_eq!(scan[0].n_test(), 7);

    let sets = toy_sets(4, 5, 6);
    let scan = extract_latents(&model, &sets).unwrap();
    assert_eq!(scan.len(), sets.len());
    for (p, (g, s)) in scan.iter().zip(&sets) {
        assert_eq!(p.g, *g);
        assert_eq!(p.n_test(), s.len());
        assert!(p.lv_stderr >= 0.0);
    }
    let wrong = vec![(4.0, vec![random_config(6, 1.0, &mut rng)])];
    assert!(matches!(extract_latents(&model, &wrong), Err(GanError::SideMismatch { .. })));
    assert!(matches!(extract_latents(&model, &[(4.0, vec![])]), Err(GanError::EmptyTestSet(_))));

    let mut buf = Vec::new();
    write_latent_scan(&mut buf, &scan).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("g,lv_mean,lv_stderr,n_test\n"));
    assert_eq!(text.lines().count(), 1 + sets.len());
    let mut buf = Vec::new();
    write_latent2d(&mut buf, &scan).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("g,z1,z2,predicted_class\n"));
    assert_eq!(text.lines().count(), 1 + 25);
}

#[test]
fn checkpoint_roundtrip() {
    let sets = toy_sets(4, 16, 7);
    let (model, _) = train_cgan(&sets, &LabelRule::default(), &quick(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cgan.ckpt");
    model.save(&path).unwrap();
    let loaded = CganModel::load(&path).unwrap();
    assert_eq!(loaded.side(), 4);
    let batch = &sets[0].1[..4];
    let (a, _) = model.latents(batch).unwrap();
    let (b, _) = loaded.latents(batch).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x[0] - y[0]).abs() < 1e-4 && (x[1] - y[1]).abs() < 1e-4);
    }
    // f32 storage is a fixed point after one roundtrip
    let again = dir.path().join("again.ckpt");
    loaded.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}
