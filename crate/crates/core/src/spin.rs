//! Brute-force spin-basis oracle for small periodic chains.
//!
//! Basis state `b` stores spin n in bit n: 0 is σᶻ = +1, 1 is σᶻ = −1.
//! Jordan-Wigner fermions are occupied on down spins,
//! `c_n = (Π_{l<n} σᶻ_l) σ⁺_n`, and momentum modes use
//! `c_k = e^{iπ/4} N^{−1/2} Σ_n e^{−ik(n+1)} c_n` with Nambu spinor
//! `ψ_k = (c_k, c_{−k}†)`.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use num_complex::Complex64;

use crate::coefficients::{h_m_analytic, h_m_exact, CdConfig, CoeffMode};
use crate::error::{Error, Result};
use crate::momentum::{bloch_vector, check_sites, momentum_grid, ChainSpec};
use crate::numeric::neumaier_sum;
use crate::ode::{Dop853, StepControl};
use crate::quench::{DriverConfig, QuenchProtocol};

/// Largest chain for operator assembly.
pub const OPERATOR_CAP: usize = 12;
/// Largest chain for full time evolution.
pub const EVOLUTION_CAP: usize = 10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// Sparse operator on the 2^N spin basis, stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperator {
    n_sites: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

fn check_cap(n_sites: usize, cap: usize) -> Result<()> {
    check_sites(n_sites)?;
    if n_sites > cap {
        return Err(Error::TooLarge { n_sites, cap });
    }
    Ok(())
}

impl SpinOperator {
    fn from_triplets(n_sites: usize, mut entries: Vec<(usize, usize, Complex64)>) -> Self {
        let dim = 1usize << n_sites;
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *vals.last_mut().expect("previous entry") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        SpinOperator {
            n_sites,
            row_ptr,
            cols,
            vals,
        }
    }

    fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim())
            .flat_map(move |r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |i| (r, self.cols[i], self.vals[i])))
    }

    pub fn zero(n_sites: usize) -> Result<Self> {
        check_cap(n_sites, OPERATOR_CAP)?;
        Ok(SpinOperator::from_triplets(n_sites, Vec::new()))
    }

    /// Product of single-site Paulis on distinct sites.
    pub fn pauli_string(n_sites: usize, ops: &[(usize, Pauli)]) -> Result<Self> {
        check_cap(n_sites, OPERATOR_CAP)?;
        for (i, &(s, _)) in ops.iter().enumerate() {
            if s >= n_sites || ops[..i].iter().any(|&(t, _)| t == s) {
                return Err(Error::invalid(format!(
                    "bad site list {:?}",
                    ops.iter().map(|o| o.0).collect::<Vec<_>>()
                )));
            }
        }
        let entries = (0..1usize << n_sites)
            .map(|b| {
                let mut out = b;
                let mut phase = Complex64::new(1.0, 0.0);
                for &(s, p) in ops {
                    let down = (b >> s) & 1 == 1;
                    match p {
                        Pauli::X => out ^= 1 << s,
                        Pauli::Y => {
                            out ^= 1 << s;
                            phase *= if down { -I } else { I };
                        }
                        Pauli::Z => {
                            if down {
                                phase = -phase;
                            }
                        }
                    }
                }
                (out, b, phase)
            })
            .collect();
        Ok(SpinOperator::from_triplets(n_sites, entries))
    }

    /// `self + c·other`
    pub fn plus_scaled(&self, other: &SpinOperator, c: Complex64) -> Result<Self> {
        if self.n_sites != other.n_sites {
            return Err(Error::invalid("operators act on different chains"));
        }
        let entries = self
            .triplets()
            .chain(other.triplets().map(|(r, col, v)| (r, col, v * c)))
            .collect();
        Ok(SpinOperator::from_triplets(self.n_sites, entries))
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(i) => self.vals[span.start + i],
            Err(_) => ZERO,
        }
    }

    /// `y = A x`
    pub fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[i] * x[self.cols[i]];
            }
            *out = acc;
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|r| self.entry(r, r)).sum()
    }

    /// `max |A_rc − conj(A_cr)|`
    pub fn hermiticity_error(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.entry(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entry of `[A, P]` with `P = Π σᶻ_n`.
    pub fn parity_commutator_norm(&self) -> f64 {
        // P is diagonal with entries (−1)^popcount, so [A, P]_rc = A_rc (p_c − p_r)
        self.triplets()
            .map(|(r, c, v)| v.norm() * (parity(c) - parity(r)).abs())
            .fold(0.0, f64::max)
    }

    /// Dense restriction to the given basis states.
    pub fn block(&self, states: &[usize]) -> DMatrix<Complex64> {
        let mut pos = vec![usize::MAX; self.dim()];
        for (i, &s) in states.iter().enumerate() {
            pos[s] = i;
        }
        let mut m = DMatrix::from_element(states.len(), states.len(), ZERO);
        for (i, &r) in states.iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let j = pos[self.cols[k]];
                if j != usize::MAX {
                    m[(i, j)] = self.vals[k];
                }
            }
        }
        m
    }
}

fn parity(b: usize) -> f64 {
    if b.count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Basis states with `Π σᶻ = +1`, ascending.
pub fn even_states(n_sites: usize) -> Vec<usize> {
    (0..1usize << n_sites)
        .filter(|b| b.count_ones().is_multiple_of(2))
        .collect()
}

/// `−Σ_n (σˣ_n σˣ_{n+1} + g σᶻ_n)` with `σ_{N+1} = σ_1`. For N = 2 both bonds
/// join the same pair and are both kept.
pub fn build_spin_h0(n_sites: usize, g: f64) -> Result<SpinOperator> {
    let (xx, z) = h0_parts(n_sites)?;
    xx.plus_scaled(&z, Complex64::from(g))
}

/// (`−Σ σˣσˣ`, `−Σ σᶻ`)
fn h0_parts(n_sites: usize) -> Result<(SpinOperator, SpinOperator)> {
    let mut xx = SpinOperator::zero(n_sites)?;
    let mut z = SpinOperator::zero(n_sites)?;
    let minus = Complex64::from(-1.0);
    for n in 0..n_sites {
        let bond = SpinOperator::pauli_string(n_sites, &[(n, Pauli::X), ((n + 1) % n_sites, Pauli::X)])?;
        xx = xx.plus_scaled(&bond, minus)?;
        z = z.plus_scaled(&SpinOperator::pauli_string(n_sites, &[(n, Pauli::Z)])?, minus)?;
    }
    Ok((xx, z))
}

/// `Σ_n (σˣ_n σᶻ…σᶻ σʸ_{n+m} + σʸ_n σᶻ…σᶻ σˣ_{n+m})`, periodic.
pub fn build_spin_h1m(n_sites: usize, m: usize) -> Result<SpinOperator> {
    check_cap(n_sites, OPERATOR_CAP)?;
    if m == 0 || m > n_sites / 2 {
        return Err(Error::invalid(format!("range m = {m} outside 1..={}", n_sites / 2)));
    }
    let one = Complex64::from(1.0);
    let mut op = SpinOperator::zero(n_sites)?;
    for n in 0..n_sites {
        for (a, b) in [(Pauli::X, Pauli::Y), (Pauli::Y, Pauli::X)] {
            let mut ops = vec![(n, a)];
            ops.extend((1..m).map(|j| ((n + j) % n_sites, Pauli::Z)));
            ops.push(((n + m) % n_sites, b));
            op = op.plus_scaled(&SpinOperator::pauli_string(n_sites, &ops)?, one)?;
        }
    }
    Ok(op)
}

fn jw_sign(b: usize, site: usize) -> f64 {
    if (b & ((1 << site) - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `c_n |x⟩`
pub fn annihilate(site: usize, x: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; x.len()];
    for (b, &amp) in x.iter().enumerate() {
        if (b >> site) & 1 == 1 {
            out[b ^ (1 << site)] += amp * jw_sign(b, site);
        }
    }
    out
}

/// `c_n† |x⟩`
pub fn create(site: usize, x: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; x.len()];
    for (b, &amp) in x.iter().enumerate() {
        if (b >> site) & 1 == 0 {
            out[b | (1 << site)] += amp * jw_sign(b, site);
        }
    }
    out
}

fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

fn n_of(x: &[Complex64]) -> usize {
    x.len().trailing_zeros() as usize
}

/// `c_k |x⟩`
pub fn momentum_annihilate(k: f64, x: &[Complex64]) -> Vec<Complex64> {
    let n = n_of(x);
    let pre = Complex64::from_polar(1.0 / (n as f64).sqrt(), FRAC_PI_4);
    let mut out = vec![ZERO; x.len()];
    for site in 0..n {
        let phase = pre * Complex64::from_polar(1.0, -k * (site + 1) as f64);
        axpy(&mut out, phase, &annihilate(site, x));
    }
    out
}

/// `c_k† |x⟩`
pub fn momentum_create(k: f64, x: &[Complex64]) -> Vec<Complex64> {
    let n = n_of(x);
    let pre = Complex64::from_polar(1.0 / (n as f64).sqrt(), -FRAC_PI_4);
    let mut out = vec![ZERO; x.len()];
    for site in 0..n {
        let phase = pre * Complex64::from_polar(1.0, k * (site + 1) as f64);
        axpy(&mut out, phase, &create(site, x));
    }
    out
}

/// (`ψ_0 x`, `ψ_1 x`) = (`c_k x`, `c_{−k}† x`)
fn nambu(k: f64, x: &[Complex64]) -> [Vec<Complex64>; 2] {
    [momentum_annihilate(k, x), momentum_create(-k, x)]
}

/// `ψ_i† y`
fn nambu_dagger(i: usize, k: f64, y: &[Complex64]) -> Vec<Complex64> {
    match i {
        0 => momentum_create(k, y),
        _ => momentum_annihilate(-k, y),
    }
}

/// `Σ_ij A_ij ψ_i† ψ_j |x⟩` for the mode pair (k, −k).
pub fn mode_bilinear(k: f64, a: &Matrix2<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    let w = nambu(k, x);
    let mut out = vec![ZERO; x.len()];
    for i in 0..2 {
        let mut v = vec![ZERO; x.len()];
        for (j, wj) in w.iter().enumerate() {
            axpy(&mut v, a[(i, j)], wj);
        }
        axpy(&mut out, Complex64::from(1.0), &nambu_dagger(i, k, &v));
    }
    out
}

/// `⟨x|ψ_i† ψ_j|x⟩`
pub fn nambu_correlations(k: f64, x: &[Complex64]) -> Matrix2<Complex64> {
    let w = nambu(k, x);
    let dot = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(a, b)| a.conj() * b).sum::<Complex64>();
    Matrix2::new(
        dot(&w[0], &w[0]),
        dot(&w[0], &w[1]),
        dot(&w[1], &w[0]),
        dot(&w[1], &w[1]),
    )
}

/// Even-parity block of `Σ_{k>0} ψ_k† A(k) ψ_k`, plus the largest amplitude
/// it leaks into the odd sector.
fn momentum_block(n_sites: usize, a: impl Fn(f64) -> Matrix2<Complex64>) -> Result<(DMatrix<Complex64>, f64)> {
    let ks = momentum_grid(n_sites)?;
    let even = even_states(n_sites);
    let dim = 1usize << n_sites;
    let mut m = DMatrix::from_element(even.len(), even.len(), ZERO);
    let mut leak = 0.0f64;
    let mats: Vec<_> = ks.iter().map(|&k| a(k)).collect();
    for (col, &b) in even.iter().enumerate() {
        let mut x = vec![ZERO; dim];
        x[b] = Complex64::from(1.0);
        let mut y = vec![ZERO; dim];
        for (&k, mat) in ks.iter().zip(&mats) {
            axpy(&mut y, Complex64::from(1.0), &mode_bilinear(k, mat, &x));
        }
        for (r, v) in y.iter().enumerate() {
            if r.count_ones() % 2 == 1 {
                leak = leak.max(v.norm());
            }
        }
        for (row, &s) in even.iter().enumerate() {
            m[(row, col)] = y[s];
        }
    }
    Ok((m, leak))
}

fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Largest matrix-element deviation between the even-parity block of
/// `H₁^[m]` and `Σ_k 4 sin(mk) ψ_k† σʸ ψ_k`.
pub fn verify_h1m_momentum_form(n_sites: usize, m: usize) -> Result<f64> {
    let spin = build_spin_h1m(n_sites, m)?;
    let sy = crate::pauli::sigma_y();
    let (mom, leak) = momentum_block(n_sites, |k| sy * Complex64::from(4.0 * (m as f64 * k).sin()))?;
    Ok(max_abs_diff(&spin.block(&even_states(n_sites)), &mom).max(leak))
}

/// Largest matrix-element deviation between the even-parity block of H₀(g)
/// and `Σ_k ψ_k† (a_k·σ) ψ_k`.
pub fn verify_h0_momentum_form(n_sites: usize, g: f64) -> Result<f64> {
    let spin = build_spin_h0(n_sites, g)?;
    let (mom, leak) = momentum_block(n_sites, |k| bloch_vector(k, g).matrix())?;
    Ok(max_abs_diff(&spin.block(&even_states(n_sites)), &mom).max(leak))
}

fn real_block(op: &SpinOperator, states: &[usize]) -> Result<DMatrix<f64>> {
    let m = op.block(states);
    if m.iter().any(|z| z.im != 0.0) {
        return Err(Error::invalid("operator block is not real"));
    }
    Ok(m.map(|z| z.re))
}

/// Ascending eigenvalues and eigenvectors (columns) of the even block of H₀.
pub fn even_eigensystem(n_sites: usize, g: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let h = real_block(&build_spin_h0(n_sites, g)?, &even_states(n_sites))?;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    Ok((values, vectors))
}

/// Even-sector levels predicted by the mode picture: `Σ_k s_k ε_k` with
/// `s_k = ±1` for an empty or paired mode and `s_k = 0` (twice) for a singly
/// occupied one, keeping an even number of singly occupied modes.
pub fn mode_picture_levels(n_sites: usize, g: f64) -> Result<Vec<f64>> {
    let eps: Vec<f64> = momentum_grid(n_sites)?
        .iter()
        .map(|&k| bloch_vector(k, g).energy())
        .collect();
    let mut levels = Vec::with_capacity(1 << (n_sites - 1));
    let modes = eps.len();
    let mut choice = vec![0u8; modes];
    loop {
        let singles = choice.iter().filter(|&&c| c == 2).count();
        if singles % 2 == 0 {
            let e = neumaier_sum(choice.iter().zip(&eps).map(|(&c, &e)| match c {
                0 => -e,
                1 => e,
                _ => 0.0,
            }));
            for _ in 0..(1usize << singles) {
                levels.push(e);
            }
        }
        let mut i = 0;
        loop {
            if i == modes {
                levels.sort_by(f64::total_cmp);
                return Ok(levels);
            }
            choice[i] += 1;
            if choice[i] < 3 {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Largest gap between the sorted even-sector spectrum of H₀ and the
/// mode-picture levels.
pub fn even_spectrum_deviation(n_sites: usize, g: f64) -> Result<f64> {
    let (values, _) = even_eigensystem(n_sites, g)?;
    let levels = mode_picture_levels(n_sites, g)?;
    if values.len() != levels.len() {
        return Err(Error::invalid("level count mismatch"));
    }
    Ok(values
        .iter()
        .zip(&levels)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Full auxiliary operator `υ Σ_m w_m h_m(g) H₁^[m]` for a ramp `g′ = −υ`.
fn assemble_h1(n_sites: usize, g: f64, rate: f64, cd: &CdConfig, terms: &[SpinOperator]) -> Result<SpinOperator> {
    let weights = cd.weights(n_sites)?;
    let mut op = SpinOperator::zero(n_sites)?;
    for (m, (w, term)) in weights.iter().zip(terms).enumerate() {
        let h = coefficient(m + 1, g, n_sites, cd.coeff_mode)?;
        op = op.plus_scaled(term, Complex64::from(rate * w * h))?;
    }
    Ok(op)
}

fn coefficient(m: usize, g: f64, n_sites: usize, mode: CoeffMode) -> Result<f64> {
    match mode {
        CoeffMode::Exact => h_m_exact(m, g, n_sites),
        CoeffMode::Analytic => Ok(h_m_analytic(m, g)),
    }
}

fn h1_terms(n_sites: usize, cutoff: usize) -> Result<Vec<SpinOperator>> {
    (1..=cutoff).map(|m| build_spin_h1m(n_sites, m)).collect()
}

/// Checks `⟨0|H₁|n⟩ = i g′ ⟨0|∂_g H₀|n⟩ / (E_n − E_0)` for every even-sector
/// eigenstate n coupled to the ground state, with the untruncated H₁ built
/// from spin strings. Returns the largest relative deviation; `⟨0|H₁|0⟩`
/// enters as an absolute deviation.
pub fn cd_matrix_element_check(n_sites: usize, g: f64) -> Result<f64> {
    check_cap(n_sites, EVOLUTION_CAP)?;
    let rate = 1.0;
    let even = even_states(n_sites);
    let (values, vectors) = even_eigensystem(n_sites, g)?;
    let gap = values[1] - values[0];
    let threshold = 1e-10 * values[0].abs().max(1.0);
    if gap < threshold {
        return Err(Error::Degenerate { gap, threshold });
    }
    let h1 = assemble_h1(
        n_sites,
        g,
        rate,
        &CdConfig::full(n_sites),
        &h1_terms(n_sites, n_sites / 2)?,
    )?;
    let h1 = h1.block(&even);
    let (_, dz) = h0_parts(n_sites)?;
    let dh = real_block(&dz, &even)?;

    let v0 = vectors.column(0).map(Complex64::from);
    let left = h1.adjoint() * &v0;
    let dleft = dh.transpose() * vectors.column(0);
    let mut worst = left.dotc(&v0).norm();
    for n in 1..values.len() {
        let vn = vectors.column(n);
        let coupling = dleft.dot(&vn);
        if coupling.abs() <= 1e-12 {
            continue;
        }
        let lhs: Complex64 = left.iter().zip(vn.iter()).map(|(l, v)| l.conj() * v).sum();
        let rhs = I * (-rate) * coupling / (values[n] - values[0]);
        worst = worst.max((lhs - rhs).norm() / rhs.norm());
    }
    Ok(worst)
}

/// Result of a full spin-basis quench.
#[derive(Debug, Clone, PartialEq)]
pub struct FullEvolution {
    pub k_grid: Vec<f64>,
    pub p_k: Vec<f64>,
    pub n_ex: f64,
}

/// Occupation of the upper band of each mode at field g:
/// `p_k = (⟨ψ_k† (a_k·σ) ψ_k⟩/ε_k + 1)/2`, valid on states with every mode
/// pair empty or doubly occupied.
pub fn mode_occupations(x: &[Complex64], g: f64) -> Result<Vec<f64>> {
    let n_sites = n_of(x);
    momentum_grid(n_sites)?
        .iter()
        .map(|&k| {
            let a = bloch_vector(k, g);
            let corr = nambu_correlations(k, x);
            let h = a.matrix();
            let mut e = ZERO;
            for i in 0..2 {
                for j in 0..2 {
                    e += h[(i, j)] * corr[(i, j)];
                }
            }
            Ok((e.re / a.energy() + 1.0) / 2.0)
        })
        .collect()
}

struct SpinDrive {
    protocol: QuenchProtocol,
    has_h0: bool,
    cd: CdConfig,
    xx: SpinOperator,
    z: SpinOperator,
    terms: Vec<SpinOperator>,
    n_sites: usize,
}

impl SpinDrive {
    fn new(n_sites: usize, protocol: &QuenchProtocol, driver: &DriverConfig) -> Result<Self> {
        check_cap(n_sites, EVOLUTION_CAP)?;
        let cd = driver.effective_cd();
        cd.validate(n_sites)?;
        let (xx, z) = h0_parts(n_sites)?;
        Ok(SpinDrive {
            protocol: *protocol,
            has_h0: driver.composition.has_h0(),
            cd,
            xx,
            z,
            terms: h1_terms(n_sites, cd.cutoff)?,
            n_sites,
        })
    }

    fn evolve(&self, x0: Vec<Complex64>, tol: f64) -> Result<Vec<Complex64>> {
        let weights = self.cd.weights(self.n_sites)?;
        let mode = self.cd.coeff_mode;
        let n = self.n_sites;
        let rate = self.protocol.rate();
        let dim = x0.len();
        let mut tmp = vec![ZERO; dim];
        let mut failure = None;
        let rhs = |t: f64, y: &Vec<Complex64>, dy: &mut Vec<Complex64>| {
            let g = self.protocol.field_at(t);
            dy.iter_mut().for_each(|d| *d = ZERO);
            if self.has_h0 {
                self.xx.apply_into(y, &mut tmp);
                axpy(dy, Complex64::from(1.0), &tmp);
                self.z.apply_into(y, &mut tmp);
                axpy(dy, Complex64::from(g), &tmp);
            }
            for (m, (w, term)) in weights.iter().zip(&self.terms).enumerate() {
                let h = match coefficient(m + 1, g, n, mode) {
                    Ok(h) => h,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                };
                term.apply_into(y, &mut tmp);
                axpy(dy, Complex64::from(rate * w * h), &tmp);
            }
            dy.iter_mut().for_each(|d| *d *= -I);
        };
        // the oracle uses its own step cap so that the two integrations never
        // share a step sequence
        let control = StepControl {
            h_max: 0.05,
            ..StepControl::with_tolerance(tol)
        };
        let mut stepper = Dop853::new(rhs, self.protocol.t_initial(), x0, control);
        stepper.advance_to(self.protocol.t_final())?;
        let out = stepper.into_state();
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(out)
    }
}

fn even_ground_state(n_sites: usize, g: f64) -> Result<Vec<Complex64>> {
    let even = even_states(n_sites);
    let (values, vectors) = even_eigensystem(n_sites, g)?;
    let gap = values[1] - values[0];
    let threshold = 1e-10 * values[0].abs().max(1.0);
    if gap < threshold {
        return Err(Error::Degenerate { gap, threshold });
    }
    let mut x = vec![ZERO; 1 << n_sites];
    for (i, &b) in even.iter().enumerate() {
        x[b] = Complex64::from(vectors[(i, 0)]);
    }
    Ok(x)
}

/// Integrates the full 2^N Schrödinger equation for the quench, starting
/// from the even-sector ground state of H₀(g_i) found by diagonalization,
/// and reads off the final mode occupations at g_f.
pub fn evolve_full(
    n_sites: usize,
    protocol: &QuenchProtocol,
    driver: &DriverConfig,
    tol: f64,
) -> Result<FullEvolution> {
    let drive = SpinDrive::new(n_sites, protocol, driver)?;
    let x0 = even_ground_state(n_sites, protocol.g_i())?;
    let x = drive.evolve(x0, tol)?;
    let p_k = mode_occupations(&x, protocol.g_f())?;
    Ok(FullEvolution {
        k_grid: momentum_grid(n_sites)?,
        n_ex: 2.0 * neumaier_sum(p_k.iter().copied()) / n_sites as f64,
        p_k,
    })
}

/// Prepares the excited eigenstate with the single mode pair `mode` lifted
/// to its upper band, ramps it with the untruncated auxiliary term, and
/// returns the final mode occupations at g_f. Exact driving keeps them at
/// `δ_{k,mode}`.
pub fn excited_state_tracking(n_sites: usize, protocol: &QuenchProtocol, mode: usize, tol: f64) -> Result<Vec<f64>> {
    let ks = momentum_grid(n_sites)?;
    let k = *ks
        .get(mode)
        .ok_or_else(|| Error::invalid(format!("mode index {mode} outside 0..{}", ks.len())))?;
    let g_i = protocol.g_i();
    let ground = even_ground_state(n_sites, g_i)?;
    // |e⟩⟨g| in the Nambu space of k lifts that pair alone
    let lift = {
        let (gs, ex) = crate::two_level::eigenbasis_of(&bloch_vector(k, g_i).as_bloch(), 1.0)
            .map(|b| (b.ground.0, b.excited.0))?;
        Matrix2::from_fn(|i, j| ex[i] * gs[j].conj())
    };
    let x0 = mode_bilinear(k, &lift, &ground);
    let norm = x0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let x0: Vec<Complex64> = x0.iter().map(|z| z / norm).collect();
    let drive = SpinDrive::new(n_sites, protocol, &DriverConfig::assisted(CdConfig::full(n_sites)))?;
    let x = drive.evolve(x0, tol)?;
    mode_occupations(&x, protocol.g_f())
}

/// Ground energy of the even sector from diagonalization.
pub fn even_ground_energy(n_sites: usize, g: f64) -> Result<f64> {
    Ok(even_eigensystem(n_sites, g)?.0[0])
}

/// Ground energy predicted by the mode picture.
pub fn mode_ground_energy(n_sites: usize, g: f64) -> Result<f64> {
    Ok(ChainSpec::new(n_sites, g)?.ground_energy())
}
