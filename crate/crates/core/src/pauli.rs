//! Pauli matrices and the Bloch-vector form of 2×2 Hermitian matrices.

use nalgebra::Matrix2;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn sigma_x() -> Matrix2<Complex64> {
    Matrix2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Matrix2<Complex64> {
    Matrix2::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Matrix2<Complex64> {
    Matrix2::new(ONE, ZERO, ZERO, -ONE)
}

/// `x σˣ + y σʸ + z σᶻ`
pub fn bloch_matrix(x: f64, y: f64, z: f64) -> Matrix2<Complex64> {
    Matrix2::new(
        Complex64::new(z, 0.0),
        Complex64::new(x, -y),
        Complex64::new(x, y),
        Complex64::new(-z, 0.0),
    )
}

/// `id·𝟙 + x σˣ + y σʸ + z σᶻ`
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Bloch {
    pub id: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Bloch {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Bloch { id: 0.0, x, y, z }
    }

    /// Decomposes the Hermitian part of `h`.
    pub fn from_matrix(h: &Matrix2<Complex64>) -> Self {
        let off = (h[(0, 1)].conj() + h[(1, 0)]) * 0.5;
        Bloch {
            id: 0.5 * (h[(0, 0)].re + h[(1, 1)].re),
            x: off.re,
            y: off.im,
            z: 0.5 * (h[(0, 0)].re - h[(1, 1)].re),
        }
    }

    pub fn radius(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// (ground, excited), each normalized with its first non-zero component
    /// real and positive. Requires a non-zero radius.
    pub fn eigenvectors(&self) -> ([Complex64; 2], [Complex64; 2]) {
        let r = self.radius();
        let minus = Complex64::new(self.x, -self.y);
        let plus = Complex64::new(self.x, self.y);
        // pick the row of (H − E) that avoids cancellation
        let (ground, excited) = if self.z >= 0.0 {
            (
                [minus, Complex64::new(-(self.z + r), 0.0)],
                [Complex64::new(r + self.z, 0.0), plus],
            )
        } else {
            (
                [Complex64::new(r - self.z, 0.0), -plus],
                [minus, Complex64::new(r - self.z, 0.0)],
            )
        };
        (fix_gauge(ground), fix_gauge(excited))
    }

    /// `−i H ψ`
    #[inline]
    pub fn schrodinger(&self, psi: &[Complex64; 2]) -> [Complex64; 2] {
        let off_up = Complex64::new(self.x, -self.y);
        let off_dn = Complex64::new(self.x, self.y);
        let h0 = psi[0] * (self.id + self.z) + off_up * psi[1];
        let h1 = off_dn * psi[0] + psi[1] * (self.id - self.z);
        [Complex64::new(h0.im, -h0.re), Complex64::new(h1.im, -h1.re)]
    }
}

fn fix_gauge(v: [Complex64; 2]) -> [Complex64; 2] {
    let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let lead = if v[0].norm() > 0.0 { v[0] } else { v[1] };
    let phase = lead.conj() / lead.norm();
    let s = phase / norm;
    let mut out = [v[0] * s, v[1] * s];
    // the leading component is real by construction; drop round-off
    if v[0].norm() > 0.0 {
        out[0] = Complex64::new(out[0].norm(), 0.0);
    } else {
        out[1] = Complex64::new(out[1].norm(), 0.0);
    }
    out
}
