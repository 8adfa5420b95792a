use qrm_core::vmc::estimate_energy;
use qrm_core::{vmc_optimize, Ansatz, AnsatzKind, CouplingParams, LatticeSpec, VmcSettings};
use qrm_oracles::{bond_list, truncated_basis_ground_energy};
use rand::SeedableRng;

#[test]
fn two_by_two_energies_match_exact_diagonalization() {
    let lattice = LatticeSpec::new(2).unwrap();
    for g in [2.0, 10.0] {
        let exact = truncated_basis_ground_energy(4, &bond_list(2), 1.0, g, 5);
        let params = CouplingParams::new(1.0, g).unwrap();
        let mut settings = VmcSettings::default();
        settings.hmc.seed = 11;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let init = Ansatz::new(AnsatzKind::default(), lattice, &mut rng).unwrap();
        let (ansatz, _) = vmc_optimize(init, params, &settings).unwrap();
        let est = estimate_energy(&ansatz, params, &settings.hmc, 20000).unwrap();
        let rel = ((est.mean - exact) / exact).abs();
        assert!(rel < 0.02, "g={g}: vmc {} +- {} vs exact {exact}", est.mean, est.stderr);
    }
}
