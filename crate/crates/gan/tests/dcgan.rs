use std::f64::consts::{LN_2, PI};

use proptest::prelude::*;
use qrm_core::observables::{config_magnetization, config_potential_energy};
use qrm_core::{CouplingParams, LatticeSpec, ObservableRecord, Producer, RotorConfiguration};
use qrm_gan::dcgan::{bond_field, write_benchmarks, BenchmarkRow, RunningMagnitudes};
use qrm_gan::{
    compare_producers, dcgan_loss, generate_batch, statistic_terms, train_dcgan, update_weights, DcganModel,
    DcganSettings, GanError, GenerationBenchmark, LossWeights, StatisticTerms,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(g: f64) -> CouplingParams {
    CouplingParams::new(1.0, g).unwrap()
}

fn samples(side: usize, n: usize, spread: f64, seed: u64) -> Vec<RotorConfiguration> {
    let lat = LatticeSpec::new(side).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let base = rng.random_range(-PI..PI);
            let angles = (0..side * side)
                .map(|_| qrm_core::wrap_angle(base + rng.random_range(-spread..spread)))
                .collect();
            RotorConfiguration::new(lat, angles).unwrap()
        })
        .collect()
}

fn quick(epochs: usize) -> DcganSettings {
    DcganSettings {
        epochs,
        batch_size: 16,
        probe_size: 32,
        seed: 4,
        ..DcganSettings::default()
    }
}

#[test]
fn statistic_term_examples() {
    let lat = LatticeSpec::new(4).unwrap();
    let batch = samples(4, 6, 1.0, 1);
    assert_eq!(statistic_terms(&batch, &batch).unwrap(), StatisticTerms::default());

    let a = vec![RotorConfiguration::uniform(lat, 0.3), RotorConfiguration::uniform(lat, -2.0)];
    let b = vec![RotorConfiguration::uniform(lat, 1.7)];
    assert_eq!(statistic_terms(&a, &b).unwrap(), StatisticTerms::default());

    let board = vec![RotorConfiguration::checkerboard(lat)];
    let t = statistic_terms(&board, &b).unwrap();
    assert!((t.mu - 4.0).abs() < 1e-12);
    assert!(t.sigma.abs() < 1e-24 && t.skew == 0.0);
    assert!(statistic_terms(&[], &b).is_err());
}

#[test]
fn statistic_terms_rotation_invariant_exactly() {
    let side = 4;
    let lat = LatticeSpec::new(side).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // dyadic angles in [-1, 1]: rotation by 0.5 is exact and never wraps
    let mut dyadic = || -> Vec<RotorConfiguration> {
        (0..5)
            .map(|_| {
                let a = (0..side * side).map(|_| rng.random_range(-64i32..=64) as f64 / 64.0).collect();
                RotorConfiguration::new(lat, a).unwrap()
            })
            .collect()
    };
    let gen = dyadic();
    let real = dyadic();
    let rotate = |b: &[RotorConfiguration], phi: f64| -> Vec<RotorConfiguration> {
        b.iter()
            .map(|c| RotorConfiguration::new(lat, c.angles().iter().map(|a| a + phi).collect()).unwrap())
            .collect()
    };
    let base = statistic_terms(&gen, &real).unwrap();
    assert_eq!(statistic_terms(&rotate(&gen, 0.5), &real).unwrap(), base);
    assert_eq!(statistic_terms(&gen, &rotate(&real, -0.25)).unwrap(), base);
}

#[test]
fn loss_examples() {
    let w = LossWeights {
        w2: 0.5,
        ..LossWeights::default()
    };
    let terms = StatisticTerms {
        mu: 4.0,
        sigma: 0.0,
        skew: 0.0,
    };
    let loss = dcgan_loss(&[0.5, 0.5], &[1.0, 0.0], &terms, &w).unwrap();
    assert!((loss - (LN_2 + 2.0)).abs() < 1e-12);
    assert!((loss - 2.6931).abs() < 1e-4);

    let p = [0.9, 0.3, 0.6];
    let t = [1.0, 0.0, 1.0];
    let bce = qrm_nn::bce_loss(&p, &t).unwrap();
    let zero_w = LossWeights {
        w2: 0.0,
        w3: 0.0,
        w4: 0.0,
        ..LossWeights::default()
    };
    assert_eq!(dcgan_loss(&p, &t, &terms, &zero_w).unwrap(), bce);
    assert_eq!(dcgan_loss(&p, &t, &StatisticTerms::default(), &LossWeights::default()).unwrap(), bce);
    let bad = LossWeights {
        w1: 0.5,
        ..LossWeights::default()
    };
    assert!(dcgan_loss(&p, &t, &terms, &bad).is_err());
}

#[test]
fn weight_update_examples() {
    let w = LossWeights {
        w2: 3.0,
        w3: 0.0,
        w4: 10.0,
        ..LossWeights::default()
    };
    let equal = RunningMagnitudes {
        bce: 0.7,
        mu: 0.7,
        sigma: 0.7,
        skew: 0.7,
    };
    let u = update_weights(&w, &equal);
    let target = 0.7 / (0.7 + 1e-8);
    for (before, after) in [(w.w2, u.w2), (w.w3, u.w3), (w.w4, u.w4)] {
        assert!((after - (0.9 * before + 0.1 * target)).abs() < 1e-12);
        assert!((after - 1.0).abs() < (before - 1.0).abs());
    }
    assert_eq!(u.w1, 1.0);

    let zero = RunningMagnitudes {
        bce: 0.7,
        ..RunningMagnitudes::default()
    };
    let u = update_weights(&w, &zero);
    assert!((u.w3 - 0.1 * w.ceiling).abs() < 1e-12);

    let frozen = LossWeights { momentum: 1.0, ..w };
    assert_eq!(update_weights(&frozen, &equal), frozen);
}

proptest! {
    #[test]
    fn weights_stay_bounded_and_contract(
        w2 in 0.0..10.0f64, w3 in 0.0..10.0f64, w4 in 0.0..10.0f64,
        m in 0.0..0.999f64,
        bce in 0.0..5.0f64, mu in 0.0..5.0f64, sigma in 0.0..5.0f64, skew in 0.0..5.0f64,
    ) {
        let w = LossWeights { w2, w3, w4, momentum: m, ..LossWeights::default() };
        let r = RunningMagnitudes { bce, mu, sigma, skew };
        let u = update_weights(&w, &r);
        for (before, after, term) in [(w2, u.w2, mu), (w3, u.w3, sigma), (w4, u.w4, skew)] {
            prop_assert!((0.0..=w.ceiling).contains(&after));
            let t = (bce / (term + 1e-8)).min(w.ceiling);
            prop_assert!((after - t).abs() <= m * (before - t).abs() + 1e-12);
        }
    }

    #[test]
    fn loss_monotone_in_terms(
        p in 0.01..0.99f64, a in 0.0..3.0f64, b in 0.0..3.0f64, c in 0.0..3.0f64,
        bump in 0.0..2.0f64, which in 0usize..3,
        w2 in 0.0..10.0f64, w3 in 0.0..10.0f64, w4 in 0.0..10.0f64,
    ) {
        let w = LossWeights { w2, w3, w4, ..LossWeights::default() };
        let t = StatisticTerms { mu: a, sigma: b, skew: c };
        let mut more = t;
        match which {
            0 => more.mu += bump,
            1 => more.sigma += bump,
            _ => more.skew += bump,
        }
        let base = dcgan_loss(&[p], &[1.0], &t, &w).unwrap();
        prop_assert!(dcgan_loss(&[p], &[1.0], &more, &w).unwrap() >= base);
    }
}

#[test]
fn generated_side_doubles() {
    for side in [4, 6, 8] {
        let model = DcganModel::new(side, 32, params(4.0), 1).unwrap();
        let (batch, bench) = generate_batch(&model, 1, 0).unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch[0].lattice().side(), 2 * side);
        assert!(batch[0].angles().iter().all(|a| (-PI..PI).contains(a)));
        assert_eq!(bench.side, 2 * side);
        assert_eq!(bench.producer, Producer::Dcgan);
        assert!(bench.wall_seconds > 0.0);
    }
    assert!(matches!(DcganModel::new(5, 32, params(4.0), 1), Err(GanError::UnsupportedSide(5))));
}

#[test]
fn generation_is_seeded_and_sharded() {
    let model = DcganModel::new(4, 32, params(4.0), 2).unwrap();
    let (a, _) = generate_batch(&model, 2500, 11).unwrap();
    let (b, _) = generate_batch(&model, 2500, 11).unwrap();
    assert_eq!(a, b);
    let (c, _) = generate_batch(&model, 2500, 12).unwrap();
    assert_ne!(a, c);
    // the first shard does not depend on how many follow
    let (d, _) = generate_batch(&model, 1000, 11).unwrap();
    assert_eq!(&a[..1000], &d[..]);
    qrm_core::par::set_sequential(true);
    let (e, _) = generate_batch(&model, 2500, 11).unwrap();
    qrm_core::par::set_sequential(false);
    assert_eq!(a, e);
    assert!(generate_batch(&model, 0, 11).is_err());
}

#[test]
fn ten_thousand_samples_of_side_eight() {
    let model = DcganModel::new(4, 32, params(4.254), 3).unwrap();
    let (batch, bench) = generate_batch(&model, 10_000, 0).unwrap();
    assert_eq!(batch.len(), 10_000);
    assert!(batch.iter().all(|c| c.lattice().side() == 8));
    assert_eq!(bench.sample_count, 10_000);
    assert_eq!(bench.observables.sample_count, 10_000);
}

#[test]
fn zero_epochs_returns_initialization() {
    let train = samples(4, 20, 0.5, 3);
    let (model, trace) = train_dcgan(&train, params(4.0), &quick(0)).unwrap();
    assert_eq!(model, DcganModel::new(4, 32, params(4.0), 4).unwrap());
    assert!(trace.rows.is_empty());
}

#[test]
fn short_training_trace_is_bounded_and_reproducible() {
    let train = samples(4, 48, 0.6, 5);
    let settings = quick(4);
    let (m1, t1) = train_dcgan(&train, params(4.0), &settings).unwrap();
    let (m2, t2) = train_dcgan(&train, params(4.0), &settings).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(m1, m2);
    assert_eq!(t1.rows.len(), 4);
    let c = settings.weights.ceiling;
    for r in &t1.rows {
        assert!(r.d_loss.is_finite() && r.g_loss.is_finite());
        for w in [r.w2, r.w3, r.w4] {
            assert!((0.0..=c).contains(&w));
        }
        assert!((0.0..=1.0).contains(&r.probe_m));
        assert!(r.probe_eps_p.abs() <= 2.0 + 1e-12);
    }
    // probe columns are the observables of the model's own samples
    let last = t1.rows.last().unwrap();
    let mut probe_rng = ChaCha8Rng::seed_from_u64(4);
    probe_rng.set_stream(3);
    let z: Vec<f64> = (0..32 * 32).map(|_| probe_rng.sample(rand_distr::StandardNormal)).collect();
    let batch = m1.generate_from_noise(qrm_nn::Tensor::new(vec![32, 32], z).unwrap()).unwrap();
    let lat = batch[0].lattice();
    let m = batch.iter().map(|c| config_magnetization(c.angles())).sum::<f64>() / 32.0;
    let e = batch.iter().map(|c| config_potential_energy(&lat, c.angles(), 1.0)).sum::<f64>() / 32.0;
    assert!((m - last.probe_m).abs() < 1e-12);
    assert!((e - last.probe_eps_p).abs() < 1e-12);
}

#[test]
fn frozen_zero_weights_match_plain_dcgan() {
    let train = samples(4, 40, 0.6, 6);
    let zero = LossWeights {
        w2: 0.0,
        w3: 0.0,
        w4: 0.0,
        momentum: 1.0,
        ..LossWeights::default()
    };
    let with_terms = DcganSettings {
        weights: zero,
        statistics: true,
        ..quick(3)
    };
    let plain = DcganSettings {
        statistics: false,
        ..with_terms.clone()
    };
    let (ma, ta) = train_dcgan(&train, params(4.0), &with_terms).unwrap();
    let (mb, tb) = train_dcgan(&train, params(4.0), &plain).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(ma, mb);
    // the terms do change training once weighted
    let (_, tc) = train_dcgan(&train, params(4.0), &quick(3)).unwrap();
    assert_ne!(ta.rows[2].g_loss, tc.rows[2].g_loss);
}

#[test]
fn mode_collapse_guard_aborts() {
    let train = samples(4, 32, 0.6, 7);
    let settings = DcganSettings {
        collapse_sigma: 10.0,
        collapse_patience: 2,
        ..quick(5)
    };
    match train_dcgan(&train, params(4.0), &settings) {
        Err(GanError::ModeCollapse { epoch, epochs, .. }) => assert_eq!((epoch, epochs), (2, 2)),
        other => panic!("expected mode collapse, got {other:?}"),
    }
}

fn bench(producer: Producer, count: usize, seconds: f64, m: f64, e: f64) -> GenerationBenchmark {
    GenerationBenchmark {
        producer,
        g: 4.254,
        side: 8,
        sample_count: count,
        wall_seconds: seconds,
        workers: 1,
        observables: ObservableRecord {
            magnetization: m,
            potential_energy_density: e,
            sample_count: count,
            magnetization_stderr: 0.003,
            potential_energy_stderr: 0.004,
        },
    }
}

#[test]
fn producer_comparison() {
    let a = bench(Producer::Dcgan, 100, 2.0, 0.5, -1.0);
    let same = compare_producers(&a, &a).unwrap();
    assert_eq!(same.time_ratio, 1.0);
    assert_eq!((same.delta_m, same.delta_eps_p), (0.0, 0.0));
    assert!((same.m_pooled_stderr - 0.003 * 2f64.sqrt()).abs() < 1e-15);

    let v = bench(Producer::VmcHmc, 100, 10.0, 0.45, -1.1);
    let c = compare_producers(&a, &v).unwrap();
    assert!((c.time_ratio - 0.2).abs() < 1e-15);
    assert!((c.delta_m - 0.05).abs() < 1e-12 && (c.delta_eps_p - 0.1).abs() < 1e-12);

    let empty = bench(Producer::VmcHmc, 0, 1.0, 0.0, 0.0);
    assert!(matches!(compare_producers(&a, &empty), Err(GanError::Incomparable(_))));
    let other = bench(Producer::VmcHmc, 50, 1.0, 0.5, -1.0);
    assert!(compare_producers(&a, &other).is_err());
    let mut far = v;
    far.g = 3.5;
    assert!(compare_producers(&a, &far).is_err());
}

#[test]
fn benchmark_csv_columns() {
    let rows = vec![
        BenchmarkRow::training(Producer::Dcgan, 4.254, 4, 2000, 12.5, true),
        BenchmarkRow::generation(&bench(Producer::Dcgan, 100, 2.0, 0.5, -1.0), false, true),
    ];
    let mut buf = Vec::new();
    write_benchmarks(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "producer,stage,g,L,count,wall_seconds,workers,M,eps_p,M_stderr,eps_p_stderr,trained,verified"
    );
    assert_eq!(lines.next().unwrap(), "dcgan,train,4.254,4,2000,12.5,1,,,,,true,false");
    let gen = lines.next().unwrap();
    assert!(gen.starts_with("dcgan,generate,4.254,8,100,2.0,1,0.5,-1.0,"));
    assert!(gen.ends_with(",false,true"));
}

#[test]
fn bond_field_counts() {
    let batch = samples(6, 3, 1.0, 9);
    assert_eq!(bond_field(&batch).len(), 3 * 2 * 36);
}

#[test]
fn checkpoint_roundtrip() {
    let train = samples(4, 32, 0.6, 10);
    let (model, _) = train_dcgan(&train, params(3.5), &quick(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dcgan.ckpt");
    model.save(&path).unwrap();
    let loaded = DcganModel::load(&path).unwrap();
    assert_eq!((loaded.side(), loaded.noise_dim(), loaded.params()), (4, 32, params(3.5)));
    let (a, _) = generate_batch(&model, 8, 1).unwrap();
    let (b, _) = generate_batch(&loaded, 8, 1).unwrap();
    for (x, y) in a.iter().zip(&b) {
        for (p, q) in x.angles().iter().zip(y.angles()) {
            let d = (p - q).abs();
            assert!(d.min(2.0 * PI - d) < 1e-3);
        }
    }
}
