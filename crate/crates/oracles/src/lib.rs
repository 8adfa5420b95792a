//! Reference computations for tests. Nothing here shares code with the
//! implementations it checks: loops are explicit and slow on purpose.

use std::f64::consts::PI;

/// Central finite-difference gradient of a scalar function.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Zero-padded convolution by direct summation. `x` is `(b, cin, h, w)`,
/// `w` is `(cout, cin, k, k)`.
#[allow(clippy::too_many_arguments)]
pub fn direct_conv2d(
    x: &[f64],
    (b, cin, h, wd): (usize, usize, usize, usize),
    w: &[f64],
    (cout, k): (usize, usize),
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; b * cout * ho * wo];
    for n in 0..b {
        for co in 0..cout {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for ki in 0..k {
                            for kj in 0..k {
                                let r = (i * stride + ki) as isize - pad as isize;
                                let c = (j * stride + kj) as isize - pad as isize;
                                if r < 0 || c < 0 || r >= h as isize || c >= wd as isize {
                                    continue;
                                }
                                acc += w[((co * cin + ci) * k + ki) * k + kj]
                                    * x[((n * cin + ci) * h + r as usize) * wd + c as usize];
                            }
                        }
                    }
                    out[((n * cout + co) * ho + i) * wo + j] = acc;
                }
            }
        }
    }
    (out, ho, wo)
}

/// Magnetization of one row-major `side x side` configuration by summing
/// unit vectors site by site.
pub fn site_loop_magnetization(angles: &[f64], side: usize) -> f64 {
    let n = side * side;
    assert_eq!(angles.len(), n);
    let (mut cx, mut cy) = (0.0, 0.0);
    for r in 0..side {
        for c in 0..side {
            let t = angles[r * side + c];
            cx += t.cos();
            cy += t.sin();
        }
    }
    (cx * cx + cy * cy).sqrt() / n as f64
}

/// Every periodic nearest-neighbour bond as an explicit pair list: right
/// and down neighbour of each site, `2 * side^2` bonds.
pub fn bond_list(side: usize) -> Vec<(usize, usize)> {
    let mut bonds = Vec::new();
    for r in 0..side {
        for c in 0..side {
            let s = r * side + c;
            bonds.push((s, r * side + (c + 1) % side));
            bonds.push((s, ((r + 1) % side) * side + c));
        }
    }
    bonds
}

/// `-(J/N) Σ_bonds cos(θ_k − θ_l)` by explicit bond enumeration.
pub fn bond_loop_potential_energy(angles: &[f64], side: usize, coupling: f64) -> f64 {
    let n = (side * side) as f64;
    let total: f64 = bond_list(side)
        .into_iter()
        .map(|(a, b)| (angles[a] - angles[b]).cos())
        .sum();
    -coupling * total / n
}

/// `(HΨ)/Ψ` by central second differences of `Ψ = exp(log_psi)`.
pub fn finite_difference_local_energy(
    log_psi: impl Fn(&[f64]) -> f64,
    theta: &[f64],
    bonds: &[(usize, usize)],
    coupling: f64,
    g: f64,
    h: f64,
) -> f64 {
    let psi0 = log_psi(theta).exp();
    let mut probe = theta.to_vec();
    let mut kinetic = 0.0;
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let up = log_psi(&probe).exp();
        probe[i] = theta[i] - h;
        let down = log_psi(&probe).exp();
        probe[i] = theta[i];
        kinetic += -(up - 2.0 * psi0 + down) / (h * h);
    }
    let potential: f64 = bonds.iter().map(|&(a, b)| (theta[a] - theta[b]).cos()).sum();
    coupling * g / 2.0 * kinetic / psi0 - coupling * potential
}

/// Ground energy of `H = (Jg/2) Σ L_i² − J Σ_bonds cos(θ_a − θ_b)` for
/// `n_sites` rotors in the angular-momentum basis truncated to `|m| ≤ m_max`.
/// The Hamiltonian conserves `Σ m`, and the ground state lives in the
/// `Σ m = 0` sector, which is diagonalized densely.
pub fn truncated_basis_ground_energy(
    n_sites: usize,
    bonds: &[(usize, usize)],
    coupling: f64,
    g: f64,
    m_max: i32,
) -> f64 {
    let span = (2 * m_max + 1) as usize;
    let total = span.pow(n_sites as u32);
    let decode = |mut idx: usize| {
        let mut ms = vec![0i32; n_sites];
        for m in ms.iter_mut() {
            *m = (idx % span) as i32 - m_max;
            idx /= span;
        }
        ms
    };
    let states: Vec<Vec<i32>> = (0..total)
        .map(decode)
        .filter(|ms| ms.iter().sum::<i32>() == 0)
        .collect();
    let index_of = |ms: &[i32]| -> Option<usize> { states.binary_search_by(|s| cmp_rev(s, ms)).ok() };
    let dim = states.len();
    let mut h = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for (row, ms) in states.iter().enumerate() {
        h[(row, row)] += coupling * g / 2.0 * ms.iter().map(|m| (m * m) as f64).sum::<f64>();
        // cos(θa − θb) = (e^{i(θa−θb)} + e^{−i(θa−θb)})/2 shifts (m_a, m_b) by (±1, ∓1)
        for &(a, b) in bonds {
            for sgn in [1, -1] {
                let mut t = ms.clone();
                t[a] += sgn;
                t[b] -= sgn;
                if t[a].abs() > m_max || t[b].abs() > m_max {
                    continue;
                }
                if let Some(col) = index_of(&t) {
                    h[(row, col)] -= coupling / 2.0;
                }
            }
        }
    }
    let eig = nalgebra::SymmetricEigen::new(h);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

// states are generated in increasing mixed-radix order with the first site
// as the least significant digit
fn cmp_rev(a: &[i32], b: &[i32]) -> std::cmp::Ordering {
    a.iter().rev().cmp(b.iter().rev())
}

/// Kolmogorov–Smirnov distance of angle draws from the uniform law on
/// `[−π, π)`.
pub fn ks_uniform_statistic(draws: &[f64]) -> f64 {
    let mut u: Vec<f64> = draws.iter().map(|t| (t + PI) / (2.0 * PI)).collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i as f64 + 1.0) / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_rotor_pair_without_bonds_has_zero_energy() {
        let e = truncated_basis_ground_energy(2, &[], 1.0, 3.0, 3);
        assert!(e.abs() < 1e-12);
    }

    #[test]
    fn two_rotor_second_order_perturbation() {
        // one bond, large g: E ≈ −2 (J/2)² / (J g) = −1/(2g)
        let g = 200.0;
        let e = truncated_basis_ground_energy(2, &[(0, 1)], 1.0, g, 4);
        assert!((e + 1.0 / (2.0 * g)).abs() < 1e-5, "{e}");
    }

    #[test]
    fn bond_list_counts() {
        assert_eq!(bond_list(4).len(), 32);
        assert_eq!(bond_list(2).len(), 8);
    }
}
