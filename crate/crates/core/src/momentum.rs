//! Momentum-space form of the periodic transverse-field Ising chain in the
//! even-parity sector.
//!
//! Each positive momentum k carries a 2×2 Nambu block acting on the pair
//! (c_k†, c_{−k}) with Bloch vector `a_k(g) = (2 sin k, 0, 2(g − cos k))`.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::pauli::{self, Bloch};
use crate::two_level::eigenbasis_of;

/// Critical transverse field.
pub const G_CRITICAL: f64 = 1.0;

/// Periodic Ising chain of `n_sites` spins at transverse field `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSpec {
    n_sites: usize,
    pub g: f64,
}

impl ChainSpec {
    pub fn new(n_sites: usize, g: f64) -> Result<Self> {
        check_sites(n_sites)?;
        Ok(ChainSpec { n_sites, g })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn momenta(&self) -> Vec<f64> {
        grid(self.n_sites)
    }

    /// `E₀(g) = −Σ_{k>0} ε_k(g)`
    pub fn ground_energy(&self) -> f64 {
        -crate::numeric::neumaier_sum(self.momenta().iter().map(|&k| bloch_vector(k, self.g).energy()))
    }
}

pub(crate) fn check_sites(n_sites: usize) -> Result<()> {
    if n_sites < 2 || !n_sites.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "chain length must be even and >= 2, got {n_sites}"
        )));
    }
    Ok(())
}

fn grid(n_sites: usize) -> Vec<f64> {
    let n = n_sites as f64;
    (0..n_sites / 2).map(|j| (2 * j + 1) as f64 * PI / n).collect()
}

/// Positive anti-periodic momenta {π/N, 3π/N, …, (N−1)π/N}, ascending.
pub fn momentum_grid(n_sites: usize) -> Result<Vec<f64>> {
    check_sites(n_sites)?;
    Ok(grid(n_sites))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl BlochVector {
    pub fn new(ax: f64, ay: f64, az: f64) -> Self {
        BlochVector { ax, ay, az }
    }

    /// ε = |a|
    pub fn energy(&self) -> f64 {
        self.ax.hypot(self.ay).hypot(self.az)
    }

    pub fn cross(&self, other: &BlochVector) -> BlochVector {
        BlochVector {
            ax: self.ay * other.az - self.az * other.ay,
            ay: self.az * other.ax - self.ax * other.az,
            az: self.ax * other.ay - self.ay * other.ax,
        }
    }

    pub fn scaled(&self, s: f64) -> BlochVector {
        BlochVector::new(self.ax * s, self.ay * s, self.az * s)
    }

    /// `a·σ`
    pub fn matrix(&self) -> Matrix2<Complex64> {
        pauli::bloch_matrix(self.ax, self.ay, self.az)
    }

    pub(crate) fn as_bloch(&self) -> Bloch {
        Bloch::new(self.ax, self.ay, self.az)
    }
}

pub fn bloch_vector(k: f64, g: f64) -> BlochVector {
    BlochVector::new(2.0 * k.sin(), 0.0, 2.0 * (g - k.cos()))
}

/// Nambu amplitudes (u, v) of one (k, −k) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeState {
    pub u: Complex64,
    pub v: Complex64,
}

impl ModeState {
    pub fn new(u: Complex64, v: Complex64) -> Self {
        ModeState { u, v }
    }

    pub fn from_array(a: [Complex64; 2]) -> Self {
        ModeState { u: a[0], v: a[1] }
    }

    pub fn to_array(self) -> [Complex64; 2] {
        [self.u, self.v]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.u.norm_sqr() + self.v.norm_sqr()
    }

    /// `⟨other|self⟩`
    pub fn overlap(&self, other: &ModeState) -> Complex64 {
        other.u.conj() * self.u + other.v.conj() * self.v
    }

    /// `⟨self| a·σ |self⟩`
    pub fn energy_in(&self, a: &BlochVector) -> f64 {
        let hv = a.matrix() * nalgebra::Vector2::new(self.u, self.v);
        (self.u.conj() * hv[0] + self.v.conj() * hv[1]).re
    }
}

fn mode_eigenstates(k: f64, g: f64) -> Result<(ModeState, ModeState)> {
    let a = bloch_vector(k, g);
    let scale = a.ax.abs().max(a.az.abs()).max(1.0);
    let basis = eigenbasis_of(&a.as_bloch(), scale)?;
    Ok((
        ModeState::from_array(basis.ground.0),
        ModeState::from_array(basis.excited.0),
    ))
}

/// Lower eigenvector of `a_k(g)·σ`, real gauge.
pub fn mode_ground_state(k: f64, g: f64) -> Result<ModeState> {
    Ok(mode_eigenstates(k, g)?.0)
}

/// Upper eigenvector of `a_k(g)·σ`, real gauge.
pub fn mode_excited_state(k: f64, g: f64) -> Result<ModeState> {
    Ok(mode_eigenstates(k, g)?.1)
}

/// `f(k) = ¼ sin k / (g² + 1 − 2g cos k)`.
///
/// The exact σʸ coefficient of the counterdiabatic term in mode k is
/// `−g′(t)·2 f(k)`.
pub fn cd_kernel_exact(k: f64, g: f64) -> Result<f64> {
    let denom = g * g + 1.0 - 2.0 * g * k.cos();
    if denom <= 0.0 || (k == 0.0 && g.abs() == 1.0) {
        return Err(Error::Singular(format!("f(k) diverges at k = {k}, g = {g}")));
    }
    Ok(crate::coefficients::kernel_value(k.sin(), k.cos(), g))
}

/// `rate/(2ε²) (a × ∂a)·σ`, the transitionless term for a Bloch Hamiltonian.
pub fn free_fermion_cd(a: &BlochVector, da: &BlochVector, rate: f64) -> Result<Matrix2<Complex64>> {
    let e2 = a.ax * a.ax + a.ay * a.ay + a.az * a.az;
    if e2 == 0.0 {
        return Err(Error::Singular("zero mode energy".into()));
    }
    Ok(a.cross(da).scaled(rate / (2.0 * e2)).matrix())
}

/// `a_k(g)·σ + cd·σʸ`
pub fn mode_hamiltonian(k: f64, g: f64, cd_coefficient: f64) -> Matrix2<Complex64> {
    let a = bloch_vector(k, g);
    BlochVector::new(a.ax, a.ay + cd_coefficient, a.az).matrix()
}

/// ∂a_k/∂g for the Ising chain.
pub fn bloch_vector_dg() -> BlochVector {
    BlochVector::new(0.0, 0.0, 2.0)
}
