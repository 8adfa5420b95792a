//! Periodic square lattices, coupling constants and rotor configurations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
}

/// An `L x L` square lattice with periodic boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    side: usize,
    boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(side: usize) -> Result<Self> {
        if side < 2 {
            return Err(CoreError::LatticeTooSmall(side));
        }
        Ok(LatticeSpec {
            side,
            boundary: Boundary::Periodic,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn sites(&self) -> usize {
        self.side * self.side
    }

    /// Site index displaced by `(dr, dc)` rows/columns with periodic wrap.
    #[inline]
    pub fn offset(&self, site: usize, dr: isize, dc: isize) -> usize {
        let l = self.side as isize;
        let r = (site / self.side) as isize;
        let c = (site % self.side) as isize;
        let nr = (r + dr).rem_euclid(l) as usize;
        let nc = (c + dc).rem_euclid(l) as usize;
        nr * self.side + nc
    }

    pub fn right(&self, site: usize) -> usize {
        self.offset(site, 0, 1)
    }

    pub fn down(&self, site: usize) -> usize {
        self.offset(site, 1, 0)
    }

    /// Nearest-neighbor bonds, one per site and direction: `2 N` in total.
    /// On `L = 2` each neighboring pair appears twice, once per wrap direction.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        self.shell_bonds(&[(0, 1), (1, 0)])
    }

    /// Bonds `site -> site + offset` for every site and every offset.
    pub fn shell_bonds(&self, offsets: &[(isize, isize)]) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.sites() * offsets.len());
        for s in 0..self.sites() {
            for &(dr, dc) in offsets {
                out.push((s, self.offset(s, dr, dc)));
            }
        }
        out
    }
}

/// Coupling strength `J` and control parameter `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub j: f64,
    pub g: f64,
}

impl CouplingParams {
    pub fn new(j: f64, g: f64) -> Result<Self> {
        if !(j.is_finite() && j > 0.0) {
            return Err(CoreError::InvalidCouplings(format!("J must be positive, got {j}")));
        }
        if !(g.is_finite() && g >= 0.0) {
            return Err(CoreError::InvalidCouplings(format!("g must be non-negative, got {g}")));
        }
        Ok(CouplingParams { j, g })
    }
}

/// Wrap one angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut t = theta - two_pi * ((theta + PI) / two_pi).floor();
    // rounding can land exactly on the open upper bound
    if t >= PI {
        t -= two_pi;
    }
    if t < -PI {
        t += two_pi;
    }
    t
}

/// One sample: row-major planar angles on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct RotorConfiguration {
    lattice: LatticeSpec,
    angles: Vec<f64>,
}

impl RotorConfiguration {
    pub fn new(lattice: LatticeSpec, angles: Vec<f64>) -> Result<Self> {
        if angles.len() != lattice.sites() {
            return Err(CoreError::AngleCount {
                expected: lattice.sites(),
                actual: angles.len(),
            });
        }
        Ok(RotorConfiguration { lattice, angles })
    }

    pub fn uniform(lattice: LatticeSpec, theta: f64) -> Self {
        RotorConfiguration {
            lattice,
            angles: vec![theta; lattice.sites()],
        }
    }

    /// Alternating `0 / pi` pattern.
    pub fn checkerboard(lattice: LatticeSpec) -> Self {
        let l = lattice.side();
        let angles = (0..lattice.sites())
            .map(|s| if (s / l + s % l).is_multiple_of(2) { 0.0 } else { PI })
            .collect();
        RotorConfiguration { lattice, angles }
    }

    pub fn lattice(&self) -> LatticeSpec {
        self.lattice
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn into_angles(self) -> Vec<f64> {
        self.angles
    }

    /// Wrap every angle into `[-pi, pi)`; cosines and sines are unchanged.
    pub fn canonicalize(mut self) -> Result<Self> {
        canonicalize_angles(&mut self.angles)?;
        Ok(self)
    }
}

pub fn canonicalize_angles(angles: &mut [f64]) -> Result<()> {
    if let Some((site, &value)) = angles.iter().enumerate().find(|(_, a)| !a.is_finite()) {
        return Err(CoreError::NonFiniteAngle { site, value });
    }
    for a in angles.iter_mut() {
        *a = wrap_angle(*a);
    }
    Ok(())
}
