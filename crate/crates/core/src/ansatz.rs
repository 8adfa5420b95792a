//! Real, positive trial wavefunctions `ln Psi(theta)` with analytic angle
//! derivatives and parameter gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{CouplingParams, LatticeSpec};
use crate::{CoreError, Result};

/// Neighbor offsets `(rows, cols)` of the Jastrow shells, nearest first.
const SHELL_OFFSETS: [&[(isize, isize)]; 4] = [
    &[(0, 1), (1, 0)],
    &[(1, 1), (1, -1)],
    &[(0, 2), (2, 0)],
    &[(1, 2), (2, 1), (1, -2), (2, -1)],
];

pub const MAX_SHELLS: usize = SHELL_OFFSETS.len();

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnsatzKind {
    /// `ln Psi = sum_p sum_h alpha_{p,h} sum_{<kl>_p} cos(h (theta_k - theta_l))`
    /// over neighbor shells `p` and harmonics `h = 1..=harmonics`.
    Jastrow {
        shells: usize,
        #[serde(default = "one")]
        harmonics: usize,
    },
    /// 3x3 periodic convolution over `(cos, sin)` of bond differences,
    /// `tanh`, then a weighted sum over sites and channels.
    SmallConv { hidden: usize },
}

impl Default for AnsatzKind {
    fn default() -> Self {
        AnsatzKind::Jastrow { shells: 2, harmonics: 2 }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq)]
enum Geometry {
    Lattice(LatticeSpec),
    /// Uncoupled sites with no bonds at all.
    Isolated(usize),
}

/// `ln Psi`, its per-angle gradient and the diagonal of its Hessian.
#[derive(Clone, Debug)]
pub struct Derivatives {
    pub log_psi: f64,
    pub gradient: Vec<f64>,
    pub laplacian: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ansatz {
    kind: AnsatzKind,
    geometry: Geometry,
    shells: Vec<Vec<(usize, usize)>>,
    bonds: Vec<(usize, usize)>,
    params: Vec<f64>,
}

impl Ansatz {
    /// Jastrow ansatz with all amplitudes zero (uniform `Psi`).
    pub fn jastrow(lattice: LatticeSpec, shells: usize, harmonics: usize) -> Result<Self> {
        if shells == 0 || shells > MAX_SHELLS {
            return Err(CoreError::InvalidSettings(format!(
                "jastrow shells must be in 1..={MAX_SHELLS}, got {shells}"
            )));
        }
        if harmonics == 0 {
            return Err(CoreError::InvalidSettings("jastrow needs at least one harmonic".into()));
        }
        let shell_bonds = SHELL_OFFSETS[..shells]
            .iter()
            .map(|offs| {
                lattice
                    .shell_bonds(offs)
                    .into_iter()
                    .filter(|(k, l)| k != l)
                    .collect()
            })
            .collect();
        Ok(Ansatz {
            kind: AnsatzKind::Jastrow { shells, harmonics },
            geometry: Geometry::Lattice(lattice),
            shells: shell_bonds,
            bonds: lattice.bonds(),
            params: vec![0.0; shells * harmonics],
        })
    }

    /// Jastrow form on `sites` uncoupled rotors: every shell is empty.
    pub fn isolated(sites: usize, shells: usize) -> Self {
        Ansatz {
            kind: AnsatzKind::Jastrow { shells, harmonics: 1 },
            geometry: Geometry::Isolated(sites),
            shells: vec![Vec::new(); shells],
            bonds: Vec::new(),
            params: vec![0.0; shells],
        }
    }

    /// Small convolutional ansatz with random weights of scale `0.1`.
    pub fn small_conv<R: Rng + ?Sized>(lattice: LatticeSpec, hidden: usize, rng: &mut R) -> Result<Self> {
        if hidden == 0 {
            return Err(CoreError::InvalidSettings("small-conv needs at least one hidden channel".into()));
        }
        let n = hidden * (4 * 9 + 2);
        let params = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();
        Ok(Ansatz {
            kind: AnsatzKind::SmallConv { hidden },
            geometry: Geometry::Lattice(lattice),
            shells: Vec::new(),
            bonds: lattice.bonds(),
            params,
        })
    }

    pub fn new<R: Rng + ?Sized>(kind: AnsatzKind, lattice: LatticeSpec, rng: &mut R) -> Result<Self> {
        match kind {
            AnsatzKind::Jastrow { shells, harmonics } => Ansatz::jastrow(lattice, shells, harmonics),
            AnsatzKind::SmallConv { hidden } => Ansatz::small_conv(lattice, hidden, rng),
        }
    }

    pub fn kind(&self) -> AnsatzKind {
        self.kind
    }

    pub fn sites(&self) -> usize {
        match self.geometry {
            Geometry::Lattice(l) => l.sites(),
            Geometry::Isolated(n) => n,
        }
    }

    pub fn lattice(&self) -> Option<LatticeSpec> {
        match self.geometry {
            Geometry::Lattice(l) => Some(l),
            Geometry::Isolated(_) => None,
        }
    }

    /// Nearest-neighbor bonds entering the potential energy.
    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(CoreError::InvalidSettings(format!(
                "ansatz expects {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(self)
    }

    fn check_len(&self, angles: &[f64]) -> Result<()> {
        if angles.len() != self.sites() {
            return Err(CoreError::AngleCount {
                expected: self.sites(),
                actual: angles.len(),
            });
        }
        Ok(())
    }

    pub fn log_psi(&self, angles: &[f64]) -> Result<f64> {
        self.check_len(angles)?;
        Ok(match self.kind {
            AnsatzKind::Jastrow { .. } => {
                let mut scratch = vec![0.0; angles.len()];
                self.jastrow_pass(angles, &mut scratch, None)
            }
            AnsatzKind::SmallConv { hidden } => self.conv_pass(angles, hidden, None, None),
        })
    }

    /// `ln Psi`, writing `d ln Psi / d theta` into `gradient`.
    pub fn log_psi_gradient(&self, angles: &[f64], gradient: &mut [f64]) -> Result<f64> {
        self.check_len(angles)?;
        gradient.iter_mut().for_each(|g| *g = 0.0);
        Ok(match self.kind {
            AnsatzKind::Jastrow { .. } => self.jastrow_pass(angles, gradient, None),
            AnsatzKind::SmallConv { hidden } => self.conv_pass(angles, hidden, Some(gradient), None),
        })
    }

    pub fn derivatives(&self, angles: &[f64]) -> Result<Derivatives> {
        self.check_len(angles)?;
        let n = angles.len();
        let mut gradient = vec![0.0; n];
        let mut laplacian = vec![0.0; n];
        let log_psi = match self.kind {
            AnsatzKind::Jastrow { .. } => self.jastrow_pass(angles, &mut gradient, Some(&mut laplacian)),
            AnsatzKind::SmallConv { hidden } => {
                self.conv_pass(angles, hidden, Some(&mut gradient), Some(&mut laplacian))
            }
        };
        Ok(Derivatives {
            log_psi,
            gradient,
            laplacian,
        })
    }

    /// `d ln Psi / d w` for every variational parameter.
    pub fn param_gradient(&self, angles: &[f64]) -> Result<Vec<f64>> {
        self.check_len(angles)?;
        Ok(match self.kind {
            AnsatzKind::Jastrow { harmonics, .. } => {
                let mut out = vec![0.0; self.params.len()];
                for (p, bonds) in self.shells.iter().enumerate() {
                    for &(k, l) in bonds {
                        let d = angles[k] - angles[l];
                        for h in 0..harmonics {
                            out[p * harmonics + h] += ((h + 1) as f64 * d).cos();
                        }
                    }
                }
                out
            }
            AnsatzKind::SmallConv { hidden } => self.conv_param_gradient(angles, hidden),
        })
    }

    fn jastrow_pass(&self, angles: &[f64], grad: &mut [f64], mut lap: Option<&mut [f64]>) -> f64 {
        let harmonics = self.params.len() / self.shells.len().max(1);
        let mut value = 0.0;
        for (bonds, amps) in self.shells.iter().zip(self.params.chunks(harmonics.max(1))) {
            for &(k, l) in bonds {
                let d = angles[k] - angles[l];
                for (h, &a) in amps.iter().enumerate() {
                    let m = (h + 1) as f64;
                    let (s, c) = (m * d).sin_cos();
                    value += a * c;
                    grad[k] -= m * a * s;
                    grad[l] += m * a * s;
                    if let Some(lap) = lap.as_deref_mut() {
                        lap[k] -= m * m * a * c;
                        lap[l] -= m * m * a * c;
                    }
                }
            }
        }
        value
    }

    fn conv_features(&self, angles: &[f64]) -> ConvFeatures {
        let lattice = self.lattice().expect("small-conv ansatz lives on a lattice");
        let n = lattice.sites();
        let mut f = ConvFeatures {
            lattice,
            value: vec![[0.0; 4]; n],
            d_self: vec![[0.0; 4]; n],
            d_neighbor: vec![[0.0; 4]; n],
            second: vec![[0.0; 4]; n],
        };
        for s in 0..n {
            for dir in 0..2 {
                let nb = if dir == 0 { lattice.right(s) } else { lattice.down(s) };
                let (sn, cs) = (angles[nb] - angles[s]).sin_cos();
                // channel order: cos dx, cos dy, sin dx, sin dy
                let (ci, si) = (dir, dir + 2);
                f.value[s][ci] = cs;
                f.d_self[s][ci] = sn;
                f.d_neighbor[s][ci] = -sn;
                f.second[s][ci] = -cs;
                f.value[s][si] = sn;
                f.d_self[s][si] = -cs;
                f.d_neighbor[s][si] = cs;
                f.second[s][si] = -sn;
            }
        }
        f
    }

    /// Pre-activation `a_{h,i}`; layout of `params` is `W[h][c][3][3]`, then `b[h]`, then `v[h]`.
    fn conv_pass(&self, angles: &[f64], hidden: usize, mut grad: Option<&mut [f64]>, mut lap: Option<&mut [f64]>) -> f64 {
        let f = self.conv_features(angles);
        let lattice = f.lattice;
        let (w, rest) = self.params.split_at(hidden * 36);
        let (b, v) = rest.split_at(hidden);
        let mut value = 0.0;
        let mut local: Vec<(usize, f64, f64)> = Vec::with_capacity(18);
        for h in 0..hidden {
            for i in 0..lattice.sites() {
                let mut a = b[h];
                local.clear();
                for u in 0..3 {
                    for x in 0..3 {
                        let s = lattice.offset(i, u as isize - 1, x as isize - 1);
                        for c in 0..4 {
                            let wt = w[((h * 4 + c) * 3 + u) * 3 + x];
                            a += wt * f.value[s][c];
                            if grad.is_some() {
                                let nb = if c % 2 == 0 { lattice.right(s) } else { lattice.down(s) };
                                accumulate(&mut local, s, wt * f.d_self[s][c], wt * f.second[s][c]);
                                accumulate(&mut local, nb, wt * f.d_neighbor[s][c], wt * f.second[s][c]);
                            }
                        }
                    }
                }
                let t = a.tanh();
                value += v[h] * t;
                if let Some(grad) = grad.as_deref_mut() {
                    let sech2 = 1.0 - t * t;
                    for &(j, da, d2a) in &local {
                        grad[j] += v[h] * sech2 * da;
                        if let Some(lap) = lap.as_deref_mut() {
                            lap[j] += v[h] * sech2 * (d2a - 2.0 * t * da * da);
                        }
                    }
                }
            }
        }
        value
    }

    fn conv_param_gradient(&self, angles: &[f64], hidden: usize) -> Vec<f64> {
        let f = self.conv_features(angles);
        let lattice = f.lattice;
        let (w, rest) = self.params.split_at(hidden * 36);
        let (b, v) = rest.split_at(hidden);
        let mut out = vec![0.0; self.params.len()];
        for h in 0..hidden {
            for i in 0..lattice.sites() {
                let mut a = b[h];
                for u in 0..3 {
                    for x in 0..3 {
                        let s = lattice.offset(i, u as isize - 1, x as isize - 1);
                        for c in 0..4 {
                            a += w[((h * 4 + c) * 3 + u) * 3 + x] * f.value[s][c];
                        }
                    }
                }
                let t = a.tanh();
                let back = v[h] * (1.0 - t * t);
                out[hidden * 37 + h] += t;
                out[hidden * 36 + h] += back;
                for u in 0..3 {
                    for x in 0..3 {
                        let s = lattice.offset(i, u as isize - 1, x as isize - 1);
                        for c in 0..4 {
                            out[((h * 4 + c) * 3 + u) * 3 + x] += back * f.value[s][c];
                        }
                    }
                }
            }
        }
        out
    }
}

struct ConvFeatures {
    lattice: LatticeSpec,
    value: Vec<[f64; 4]>,
    d_self: Vec<[f64; 4]>,
    d_neighbor: Vec<[f64; 4]>,
    second: Vec<[f64; 4]>,
}

fn accumulate(local: &mut Vec<(usize, f64, f64)>, site: usize, d: f64, d2: f64) {
    match local.iter_mut().find(|e| e.0 == site) {
        Some(e) => {
            e.1 += d;
            e.2 += d2;
        }
        None => local.push((site, d, d2)),
    }
}

/// `(H Psi)/Psi` at one configuration:
/// `(J g / 2) sum_i [-d2 ln Psi - (d ln Psi)^2] - J sum_<kl> cos(theta_k - theta_l)`.
pub fn local_energy(ansatz: &Ansatz, angles: &[f64], params: CouplingParams) -> Result<f64> {
    let d = ansatz.derivatives(angles)?;
    local_energy_from(ansatz, angles, params, &d)
}

pub(crate) fn local_energy_from(ansatz: &Ansatz, angles: &[f64], params: CouplingParams, d: &Derivatives) -> Result<f64> {
    let mut kinetic = 0.0;
    for (site, (g, l)) in d.gradient.iter().zip(&d.laplacian).enumerate() {
        if !g.is_finite() {
            return Err(CoreError::NonFiniteDerivative { quantity: "gradient", site });
        }
        if !l.is_finite() {
            return Err(CoreError::NonFiniteDerivative { quantity: "laplacian", site });
        }
        kinetic -= l + g * g;
    }
    let potential: f64 = ansatz.bonds().iter().map(|&(k, l)| (angles[k] - angles[l]).cos()).sum();
    Ok(0.5 * params.j * params.g * kinetic - params.j * potential)
}
