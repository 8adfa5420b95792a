use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qrm_core::analysis::{locate_gc, ExtremumSearch, LatentScanRow};
use qrm_core::hmc::{burn_in_chains, sample_chains, HmcChain, HmcSettings};
use qrm_core::{par, Ansatz, LatticeSpec};

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn hmc_sampling(c: &mut Criterion) {
    let lattice = LatticeSpec::new(8).unwrap();
    let mut ansatz = Ansatz::jastrow(lattice, 2, 2).unwrap();
    ansatz.params_mut().copy_from_slice(&[0.4, 0.05, 0.1, 0.01]);
    let settings = HmcSettings {
        chains: 8,
        burn_in: 50,
        ..HmcSettings::default()
    };
    let mut group = c.benchmark_group("hmc_8_chains_L8");
    group.sample_size(10);
    for (name, sequential) in modes() {
        par::set_sequential(sequential);
        let mut chains: Vec<HmcChain> = (0..settings.chains)
            .map(|i| HmcChain::random_start(&settings, i, lattice.sites()).unwrap())
            .collect();
        burn_in_chains(&ansatz, &mut chains, &settings).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sample_chains(&ansatz, &mut chains, 16).unwrap())
        });
    }
    par::set_sequential(false);
    group.finish();
}

fn bootstrap(c: &mut Criterion) {
    let scan: Vec<LatentScanRow> = (0..21)
        .map(|i| {
            let g = 3.5 + 0.05 * i as f64;
            LatentScanRow {
                g,
                lv_mean: (-(g - 4.25) / 0.2).exp().ln_1p() + 0.01 * (7.0 * g).sin(),
                lv_stderr: 0.0,
                n_test: 1,
            }
        })
        .collect();
    let search = ExtremumSearch {
        bootstrap: 64,
        grid_step: 1e-3,
        ..ExtremumSearch::default()
    };
    let mut group = c.benchmark_group("bootstrap_64");
    group.sample_size(10);
    for (name, sequential) in modes() {
        par::set_sequential(sequential);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| locate_gc(4, &scan, 5, None, &search).unwrap())
        });
    }
    par::set_sequential(false);
    group.finish();
}

criterion_group!(benches, hmc_sampling, bootstrap);
criterion_main!(benches);
