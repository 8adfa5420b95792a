use qrm_core::vmc::{covariance_gradient, estimate_energy, Sampler};
use qrm_core::{
    generate_dataset, measure, par, read_dataset, vmc_optimize, Ansatz, AnsatzKind, CoreError, CouplingParams,
    LatticeSpec, Producer, VmcSettings,
};

fn settings(seed: u64, steps: usize, batch: usize) -> VmcSettings {
    let mut s = VmcSettings::default();
    s.hmc.seed = seed;
    s.opt_steps = steps;
    s.batch_per_step = batch;
    s
}

#[test]
fn free_rotor_is_an_exact_eigenstate() {
    let a = Ansatz::isolated(1, 2);
    let p = CouplingParams::new(1.0, 2.0).unwrap();
    let s = settings(1, 1, 64);
    let mut sampler = Sampler::new(&a, &s.hmc).unwrap();
    let batch = sampler.draw(&a, 64).unwrap();
    let energies: Vec<f64> = batch.iter().map(|t| qrm_core::local_energy(&a, t, p).unwrap()).collect();
    let grads: Vec<Vec<f64>> = batch.iter().map(|t| a.param_gradient(t).unwrap()).collect();
    assert!(energies.iter().all(|&e| e == 0.0));
    assert!(covariance_gradient(&energies, &grads).iter().all(|&g| g == 0.0));
    let (_, trace) = vmc_optimize(a, p, &settings(1, 5, 32)).unwrap();
    assert!(trace.rows.iter().all(|r| r.variance == 0.0 && r.energy == 0.0));
}

#[test]
fn moving_average_energy_decreases_on_four_by_four() {
    let lattice = LatticeSpec::new(4).unwrap();
    let p = CouplingParams::new(1.0, 4.25).unwrap();
    let s = settings(3, 400, 128);
    let (_, trace) = vmc_optimize(Ansatz::jastrow(lattice, 2, 2).unwrap(), p, &s).unwrap();
    let e = trace.energies();
    let window = 50;
    let ma: Vec<f64> = e.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect();
    // stationary noise of one step's estimate, from the settled tail
    let tail = &e[e.len() - 100..];
    let m = tail.iter().sum::<f64>() / tail.len() as f64;
    let sd = (tail.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (tail.len() - 1) as f64).sqrt();
    let tol = 4.0 * std::f64::consts::SQRT_2 * sd / window as f64;
    for (t, pair) in ma.windows(2).enumerate() {
        assert!(pair[1] <= pair[0] + tol, "moving average rose at {t}: {} -> {} (tol {tol})", pair[0], pair[1]);
    }
    assert!(ma.last().unwrap() < &(ma[0] - 10.0 * tol), "no net descent");
}

#[test]
fn ordered_phase_is_magnetized() {
    let lattice = LatticeSpec::new(4).unwrap();
    let p = CouplingParams::new(1.0, 0.5).unwrap();
    let out = generate_dataset(p, lattice, 500, AnsatzKind::default(), &settings(4, 200, 128), None).unwrap();
    let rec = measure(&out.configurations, p).unwrap();
    assert!(rec.magnetization > 0.8, "M = {}", rec.magnetization);
}

#[test]
fn datasets_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let lattice = LatticeSpec::new(4).unwrap();
    let p = CouplingParams::new(1.0, 4.25).unwrap();
    let one = dir.path().join("one.qrgs");
    let out = generate_dataset(p, lattice, 1, AnsatzKind::default(), &settings(5, 20, 64), Some(&one)).unwrap();
    let (h, batch) = read_dataset(&one).unwrap();
    assert_eq!((h.count, h.l, h.producer), (1, 4, Producer::VmcHmc));
    assert_eq!(batch.len(), 1);
    assert_eq!(out.header, h);

    let big = dir.path().join("big.qrgs");
    generate_dataset(p, lattice, 10_000, AnsatzKind::default(), &settings(6, 50, 128), Some(&big)).unwrap();
    let (h, batch) = read_dataset(&big).unwrap();
    assert_eq!((h.count, h.l, h.g, h.j), (10_000, 4, 4.25, 1.0));
    assert_eq!(batch.len(), 10_000);
    assert!(batch.iter().all(|c| c.angles().iter().all(|a| (-std::f64::consts::PI..std::f64::consts::PI).contains(a))));

    assert!(generate_dataset(p, lattice, 0, AnsatzKind::default(), &settings(6, 5, 16), None).is_err());
}

#[test]
fn energy_guard_aborts_with_the_trace() {
    let lattice = LatticeSpec::new(3).unwrap();
    let p = CouplingParams::new(1.0, 4.0).unwrap();
    let mut s = settings(7, 10, 32);
    s.energy_guard = 1e-3;
    match vmc_optimize(Ansatz::jastrow(lattice, 2, 2).unwrap(), p, &s) {
        Err(CoreError::DivergentEnergy { step, trace, .. }) => {
            assert_eq!(step, 0);
            assert_eq!(trace.rows.len(), 1);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn results_do_not_depend_on_threading() {
    let lattice = LatticeSpec::new(3).unwrap();
    let p = CouplingParams::new(1.0, 3.0).unwrap();
    let s = settings(8, 15, 64);
    let run = || {
        let (a, t) = vmc_optimize(Ansatz::jastrow(lattice, 2, 2).unwrap(), p, &s).unwrap();
        let e = estimate_energy(&a, p, &s.hmc, 200).unwrap();
        (a.params().to_vec(), t, e.mean)
    };
    let parallel = run();
    par::set_sequential(true);
    let sequential = run();
    par::set_sequential(false);
    assert_eq!(parallel, sequential);
    assert_eq!(parallel, run());
}

#[test]
fn invalid_vmc_settings() {
    let lattice = LatticeSpec::new(2).unwrap();
    let p = CouplingParams::new(1.0, 1.0).unwrap();
    for s in [settings(0, 0, 16), settings(0, 5, 1)] {
        assert!(vmc_optimize(Ansatz::jastrow(lattice, 1, 1).unwrap(), p, &s).is_err());
    }
}
