//! Landau-Zener two-level system and its counterdiabatic (transitionless) term.
//!
//! Matrices are written in the fixed diabatic basis {|1⟩, |2⟩} where
//! `H₀ = λ σᶻ + Δ σˣ`. The counterdiabatic term keeps the state on the
//! instantaneous eigenvectors of `H₀` at any sweep rate.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ode::{norm_drift_limit, Dop853, StepControl, LOCAL_TOL_DIVISOR};
use crate::pauli::{self, Bloch};

/// Relative gap below which a 2×2 Hamiltonian counts as degenerate.
pub const DEGENERACY_EPS: f64 = 1e-14;

/// Affine sweep λ(t) = λ_i + rate·t over t ∈ [0, duration].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LzParams {
    delta: f64,
    lambda_i: f64,
    lambda_f: f64,
    rate: f64,
    duration: f64,
}

impl LzParams {
    /// Sweep from `lambda_i` to `lambda_f` at constant `rate`.
    pub fn ramp(delta: f64, lambda_i: f64, lambda_f: f64, rate: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::invalid(format!("gap parameter must be >= 0, got {delta}")));
        }
        if rate == 0.0 || !rate.is_finite() {
            return Err(Error::invalid(
                "sweep rate must be finite and non-zero; use LzParams::hold",
            ));
        }
        let duration = (lambda_f - lambda_i) / rate;
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::invalid(format!(
                "rate {rate} does not carry λ from {lambda_i} to {lambda_f} forward in time"
            )));
        }
        Ok(LzParams {
            delta,
            lambda_i,
            lambda_f,
            rate,
            duration,
        })
    }

    /// Constant λ for a fixed duration (rate zero).
    pub fn hold(delta: f64, lambda: f64, duration: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::invalid(format!("gap parameter must be >= 0, got {delta}")));
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::invalid(format!("duration must be positive, got {duration}")));
        }
        Ok(LzParams {
            delta,
            lambda_i: lambda,
            lambda_f: lambda,
            rate: 0.0,
            duration,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn lambda_i(&self) -> f64 {
        self.lambda_i
    }

    pub fn lambda_f(&self) -> f64 {
        self.lambda_f
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// λ(t); the endpoints are returned exactly.
    pub fn lambda_at(&self, t: f64) -> f64 {
        if t == self.duration {
            self.lambda_f
        } else if t == 0.0 {
            self.lambda_i
        } else {
            self.lambda_i + self.rate * t
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    /// Bare `H₀` only.
    Bare,
    /// `H₀ + H₁` with the exact counterdiabatic term.
    Assisted,
}

/// Amplitudes (c₁, c₂) in the diabatic basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelState(pub [Complex64; 2]);

impl TwoLevelState {
    pub fn new(c1: Complex64, c2: Complex64) -> Self {
        TwoLevelState([c1, c2])
    }

    pub fn from_vector(v: &Vector2<Complex64>) -> Self {
        TwoLevelState([v[0], v[1]])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0[0].norm_sqr() + self.0[1].norm_sqr()
    }

    /// |⟨other|self⟩|²
    pub fn fidelity(&self, other: &TwoLevelState) -> f64 {
        (other.0[0].conj() * self.0[0] + other.0[1].conj() * self.0[1]).norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenbasis {
    pub ground: TwoLevelState,
    pub excited: TwoLevelState,
    /// (E_ground, E_excited)
    pub energies: (f64, f64),
}

pub fn lz_hamiltonian(lambda: f64, delta: f64) -> Matrix2<Complex64> {
    pauli::bloch_matrix(delta, 0.0, lambda)
}

/// `−rate·Δ/(2(Δ²+λ²))·σʸ`
pub fn lz_cd_term(lambda: f64, delta: f64, rate: f64) -> Result<Matrix2<Complex64>> {
    let denom = delta * delta + lambda * lambda;
    if denom == 0.0 {
        return Err(Error::Singular("Δ = λ = 0: H₀ is degenerate".into()));
    }
    Ok(pauli::sigma_y() * Complex64::from(-0.5 * rate * delta / denom))
}

/// Eigenvectors of a 2×2 Hermitian matrix.
///
/// Gauge: the first non-zero component of each vector is real and positive,
/// so real matrices give real eigenvectors.
pub fn instantaneous_eigenbasis(h: &Matrix2<Complex64>) -> Result<Eigenbasis> {
    let bloch = Bloch::from_matrix(h);
    let scale = h.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
    eigenbasis_of(&bloch, scale)
}

pub(crate) fn eigenbasis_of(bloch: &Bloch, scale: f64) -> Result<Eigenbasis> {
    let r = bloch.radius();
    let threshold = DEGENERACY_EPS * scale;
    if 2.0 * r < threshold {
        return Err(Error::Degenerate {
            gap: 2.0 * r,
            threshold,
        });
    }
    let (ground, excited) = bloch.eigenvectors();
    Ok(Eigenbasis {
        ground: TwoLevelState(ground),
        excited: TwoLevelState(excited),
        energies: (bloch.id - r, bloch.id + r),
    })
}

fn ground_at(params: &LzParams, t: f64) -> Result<TwoLevelState> {
    let lambda = params.lambda_at(t);
    let bloch = Bloch::new(params.delta, 0.0, lambda);
    Ok(eigenbasis_of(&bloch, lambda.abs().max(params.delta).max(1.0))?.ground)
}

/// Ground state of `H₀(λ)`.
pub fn lz_ground(lambda: f64, delta: f64) -> Result<TwoLevelState> {
    Ok(instantaneous_eigenbasis(&lz_hamiltonian(lambda, delta))?.ground)
}

/// Integrate `i dψ/dt = H(t) ψ` over the full sweep.
pub fn evolve_two_level(params: &LzParams, driver: Driver, initial: &TwoLevelState, tol: f64) -> Result<TwoLevelState> {
    let states = evolve_two_level_sampled(params, driver, initial, tol, &[params.duration])?;
    Ok(states[0])
}

/// Like [`evolve_two_level`], returning the state at each of the ascending
/// `times` (within [0, duration]).
pub fn evolve_two_level_sampled(
    params: &LzParams,
    driver: Driver,
    initial: &TwoLevelState,
    tol: f64,
    times: &[f64],
) -> Result<Vec<TwoLevelState>> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let n0 = initial.norm_sqr();
    if (n0 - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("initial state not normalized: |ψ|² = {n0}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0 || t > params.duration) {
        return Err(Error::invalid("sample times must be ascending and inside the sweep"));
    }
    let p = *params;
    let rhs = move |t: f64, y: &[Complex64; 2], dy: &mut [Complex64; 2]| {
        let lambda = p.lambda_at(t);
        let cd = match driver {
            Driver::Bare => 0.0,
            Driver::Assisted => {
                let denom = p.delta * p.delta + lambda * lambda;
                if denom > 0.0 {
                    -0.5 * p.rate * p.delta / denom
                } else {
                    0.0
                }
            }
        };
        *dy = Bloch::new(p.delta, cd, lambda).schrodinger(y);
    };
    let control = StepControl::with_tolerance(tol / LOCAL_TOL_DIVISOR);
    let mut stepper = Dop853::new(rhs, 0.0, initial.0, control);
    let limit = norm_drift_limit(tol);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        stepper.advance_to(t)?;
        let state = TwoLevelState(*stepper.state());
        let drift = (state.norm_sqr() - 1.0).abs();
        if drift > limit {
            return Err(Error::NormDrift { drift, limit });
        }
        out.push(state);
    }
    Ok(out)
}

/// Fidelity `|⟨ground(λ(t))|ψ(t)⟩|²` at each sample time, starting from the
/// ground state at λ_i.
pub fn ground_fidelity_trace(params: &LzParams, driver: Driver, tol: f64, times: &[f64]) -> Result<Vec<f64>> {
    let start = ground_at(params, 0.0)?;
    let states = evolve_two_level_sampled(params, driver, &start, tol, times)?;
    times
        .iter()
        .zip(&states)
        .map(|(&t, s)| Ok(s.fidelity(&ground_at(params, t)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector2;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn eigenvalues(h: &Matrix2<Complex64>) -> (f64, f64) {
        let e = instantaneous_eigenbasis(h).unwrap();
        e.energies
    }

    #[test]
    fn hamiltonian_spectrum() {
        let (lo, hi) = eigenvalues(&lz_hamiltonian(0.0, 1.0));
        assert_abs_diff_eq!(lo, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hi - lo, 2.0, epsilon = 1e-15);

        let (lo, hi) = eigenvalues(&lz_hamiltonian(3.0, 4.0));
        assert_abs_diff_eq!(lo, -5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hi, 5.0, epsilon = 1e-14);

        let h = lz_hamiltonian(1.0, 0.0);
        assert_eq!(h, Matrix2::new(c(1.0), c(0.0), c(0.0), c(-1.0)));
    }

    #[test]
    fn cd_term_values() {
        let h1 = lz_cd_term(0.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!((h1 - pauli::sigma_y() * c(-0.5)).norm(), 0.0, epsilon = 1e-16);

        assert_eq!(lz_cd_term(7.3, 1.0, 0.0).unwrap().norm(), 0.0);

        let far = lz_cd_term(1e6, 1.0, 1.0).unwrap();
        // −5e−13·σʸ
        assert_abs_diff_eq!(far[(0, 1)].im, 5e-13, epsilon = 1e-18);
        assert_abs_diff_eq!(far[(1, 0)].im, -5e-13, epsilon = 1e-18);

        assert!(matches!(lz_cd_term(0.0, 0.0, 1.0), Err(Error::Singular(_))));
    }

    #[test]
    fn eigenbasis_examples() {
        let e = instantaneous_eigenbasis(&pauli::sigma_z()).unwrap();
        assert_eq!(e.ground.0, [c(0.0), c(1.0)]);
        assert_eq!(e.excited.0, [c(1.0), c(0.0)]);
        assert_eq!(e.energies, (-1.0, 1.0));

        let e = instantaneous_eigenbasis(&pauli::sigma_x()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(e.ground.0[0].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(e.ground.0[1].re, -s, epsilon = 1e-15);
        assert_eq!(e.energies.0, -1.0);

        let h = lz_hamiltonian(3.0, 4.0);
        let e = instantaneous_eigenbasis(&h).unwrap();
        let v = Vector2::new(e.ground.0[0], e.ground.0[1]);
        assert!((h * v + v * c(5.0)).norm() < 1e-12);
    }

    #[test]
    fn eigenbasis_rejects_degenerate() {
        let h = Matrix2::identity() * c(2.0);
        assert!(matches!(instantaneous_eigenbasis(&h), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn complex_matrix_gauge_and_residual() {
        let h = pauli::bloch_matrix(0.3, -1.2, 0.7) + Matrix2::identity() * c(0.25);
        let e = instantaneous_eigenbasis(&h).unwrap();
        for (v, en) in [(e.ground, e.energies.0), (e.excited, e.energies.1)] {
            let first = if v.0[0].norm() > 0.0 { v.0[0] } else { v.0[1] };
            assert_eq!(first.im, 0.0);
            assert!(first.re > 0.0);
            let x = Vector2::new(v.0[0], v.0[1]);
            assert!((h * x - x * c(en)).norm() < 1e-13);
        }
        assert!(e.ground.fidelity(&e.excited) < 1e-28);
    }

    #[test]
    fn gauge_consistency_with_finite_differences() {
        // i λ' Σ_n (|∂n⟩⟨n| − ⟨n|∂n⟩|n⟩⟨n|) against the closed form
        let delta = 1.0;
        let rate = 1.7;
        let d = 1e-5;
        for &lambda in &[-2.0, 0.0, 2.0] {
            let at = |l: f64| instantaneous_eigenbasis(&lz_hamiltonian(l, delta)).unwrap();
            let (lo, mid, hi) = (at(lambda - d), at(lambda), at(lambda + d));
            let mut h1 = Matrix2::<Complex64>::zeros();
            for (vm, v0, vp) in [
                (lo.ground, mid.ground, hi.ground),
                (lo.excited, mid.excited, hi.excited),
            ] {
                let n = Vector2::new(v0.0[0], v0.0[1]);
                let dn = (Vector2::new(vp.0[0], vp.0[1]) - Vector2::new(vm.0[0], vm.0[1])) / c(2.0 * d);
                let berry = n.dotc(&dn);
                h1 += dn * n.adjoint() - n * n.adjoint() * berry;
            }
            h1 *= Complex64::new(0.0, rate);
            let exact = lz_cd_term(lambda, delta, rate).unwrap();
            assert!(
                (h1 - exact).iter().all(|z| z.norm() < 1e-6),
                "λ = {lambda}: {h1} vs {exact}"
            );
        }
    }

    #[test]
    fn stationary_state_stays_put() {
        let p = LzParams::hold(1.0, 0.4, 25.0).unwrap();
        let g = lz_ground(0.4, 1.0).unwrap();
        let out = evolve_two_level(&p, Driver::Bare, &g, 1e-10).unwrap();
        assert!(1.0 - out.fidelity(&g) < 1e-10);
    }

    #[test]
    fn assisted_fast_sweep_is_transitionless() {
        let p = LzParams::ramp(1.0, -20.0, 20.0, 100.0).unwrap();
        let g0 = lz_ground(-20.0, 1.0).unwrap();
        let out = evolve_two_level(&p, Driver::Assisted, &g0, 1e-10).unwrap();
        let gf = lz_ground(20.0, 1.0).unwrap();
        assert!(out.fidelity(&gf) >= 1.0 - 1e-6);
    }

    #[test]
    fn bare_sweep_matches_landau_zener_formula() {
        let v = 10.0;
        let p = LzParams::ramp(1.0, -50.0, 50.0, v).unwrap();
        let g0 = lz_ground(-50.0, 1.0).unwrap();
        let out = evolve_two_level(&p, Driver::Bare, &g0, 1e-10).unwrap();
        let excited = instantaneous_eigenbasis(&lz_hamiltonian(50.0, 1.0)).unwrap().excited;
        let p_ex = out.fidelity(&excited);
        let oracle = (-std::f64::consts::PI / v).exp();
        assert!((p_ex - oracle).abs() / oracle < 0.01, "{p_ex} vs {oracle}");
    }

    #[test]
    fn slow_sweep_is_adiabatic_either_way() {
        let p = LzParams::ramp(1.0, -5.0, 5.0, 1e-3).unwrap();
        let times: Vec<f64> = (0..=10).map(|j| p.duration() * j as f64 / 10.0).collect();
        for driver in [Driver::Bare, Driver::Assisted] {
            let f = ground_fidelity_trace(&p, driver, 1e-10, &times).unwrap();
            assert!(f.iter().all(|&x| x >= 1.0 - 1e-6), "{driver:?}: {f:?}");
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(LzParams::ramp(1.0, -1.0, 1.0, 0.0).is_err());
        assert!(LzParams::ramp(1.0, -1.0, 1.0, -2.0).is_err());
        assert!(LzParams::ramp(-1.0, -1.0, 1.0, 2.0).is_err());
        let p = LzParams::ramp(1.0, -1.0, 1.0, 1.0).unwrap();
        let bad = TwoLevelState::new(c(1.0), c(1.0));
        assert!(evolve_two_level(&p, Driver::Bare, &bad, 1e-8).is_err());
        assert_eq!(p.lambda_at(p.duration()), 1.0);
    }
}
