//! Linear quenches of the Ising chain through its critical point, mode by
//! mode, with optional (truncated) counterdiabatic driving.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CdConfig, CoeffMode, KernelEvaluator};
use crate::error::{Error, Result};
use crate::momentum::{bloch_vector, check_sites, mode_excited_state, mode_ground_state, ModeState, G_CRITICAL};
use crate::numeric::{neumaier_sum, NeumaierSum};
use crate::ode::{norm_drift_limit, Dop853, StepControl, LOCAL_TOL_DIVISOR};
use crate::pauli::{self, Bloch};

/// Default accuracy target.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Linear ramp `g(t) = g_c − υ t` from `g_i` to `g_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchProtocol {
    g_i: f64,
    g_f: f64,
    rate: f64,
}

impl QuenchProtocol {
    pub fn new(g_i: f64, g_f: f64, rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::invalid(format!("quench rate must be positive, got {rate}")));
        }
        if !(g_i.is_finite() && g_f.is_finite()) || g_i <= g_f {
            return Err(Error::invalid(format!(
                "need g_i > g_f for a downward ramp, got {g_i} -> {g_f}"
            )));
        }
        Ok(QuenchProtocol { g_i, g_f, rate })
    }

    pub fn g_i(&self) -> f64 {
        self.g_i
    }

    pub fn g_f(&self) -> f64 {
        self.g_f
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// True for a paramagnet to ferromagnet passage `g_i > g_c > g_f`.
    pub fn crosses_critical(&self) -> bool {
        self.g_i > G_CRITICAL && G_CRITICAL > self.g_f
    }

    pub fn t_initial(&self) -> f64 {
        (G_CRITICAL - self.g_i) / self.rate
    }

    pub fn t_final(&self) -> f64 {
        (G_CRITICAL - self.g_f) / self.rate
    }

    /// Field at time t; exact at both endpoints.
    pub fn field_at(&self, t: f64) -> f64 {
        if t == self.t_initial() {
            self.g_i
        } else if t == self.t_final() {
            self.g_f
        } else {
            G_CRITICAL - self.rate * t
        }
    }

    /// Time at which the ramp passes field g.
    pub fn time_at(&self, g: f64) -> f64 {
        if g == self.g_i {
            self.t_initial()
        } else if g == self.g_f {
            self.t_final()
        } else {
            (G_CRITICAL - g) / self.rate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    H0Only,
    H1Only,
    H0PlusH1,
}

impl Composition {
    pub fn has_h0(&self) -> bool {
        !matches!(self, Composition::H1Only)
    }

    pub fn has_h1(&self) -> bool {
        !matches!(self, Composition::H0Only)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub composition: Composition,
    pub cd: CdConfig,
}

impl DriverConfig {
    pub fn new(composition: Composition, cd: CdConfig) -> Self {
        DriverConfig { composition, cd }
    }

    /// Bare Kibble-Zurek quench.
    pub fn bare() -> Self {
        DriverConfig::new(Composition::H0Only, CdConfig::none())
    }

    pub fn assisted(cd: CdConfig) -> Self {
        DriverConfig::new(Composition::H0PlusH1, cd)
    }

    /// The auxiliary configuration actually applied: none for `H0Only`.
    pub fn effective_cd(&self) -> CdConfig {
        if self.composition.has_h1() {
            self.cd
        } else {
            CdConfig::none()
        }
    }
}

/// Knobs for a spectrum run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub tol: f64,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub workers: Option<usize>,
}

impl RunOptions {
    pub fn new(tol: f64) -> Self {
        RunOptions { tol, workers: None }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions::new(DEFAULT_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub k_grid: Vec<f64>,
    pub p_k: Vec<f64>,
    pub n_ex: f64,
    pub protocol: QuenchProtocol,
    pub driver: DriverConfig,
    pub n_sites: usize,
    pub tol: f64,
}

/// One row of a rate × cutoff sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub rate: f64,
    pub cutoff: usize,
    pub filter: crate::coefficients::Filter,
    pub n_ex: Result<f64>,
}

/// Time-dependent mode Hamiltonians for one run.
struct ModeDrive {
    protocol: QuenchProtocol,
    composition: Composition,
    eval: KernelEvaluator,
    ks: Vec<f64>,
    indices: Vec<usize>,
}

struct DriveScratch {
    kernel: Vec<f64>,
    weighted: Vec<f64>,
    f: Vec<f64>,
}

impl ModeDrive {
    fn new(protocol: QuenchProtocol, driver: DriverConfig, n_sites: usize, indices: Vec<usize>) -> Result<Self> {
        let cd = driver.effective_cd();
        let eval = KernelEvaluator::new(n_sites, cd)?;
        let ks = indices.iter().map(|&j| eval.grid()[j]).collect();
        Ok(ModeDrive {
            protocol,
            composition: driver.composition,
            eval,
            ks,
            indices,
        })
    }

    fn scratch(&self) -> DriveScratch {
        DriveScratch {
            kernel: Vec::new(),
            weighted: vec![0.0; self.eval.config().cutoff],
            f: vec![0.0; self.indices.len()],
        }
    }

    fn uses_kernel(&self) -> bool {
        self.composition.has_h1() && self.eval.config().cutoff > 0
    }

    /// Fills `scratch.f` with `F_M(k_j, g(t))` for every driven mode.
    fn kernel(&self, t: f64, scratch: &mut DriveScratch) {
        if !self.uses_kernel() {
            return;
        }
        let g = self.protocol.field_at(t);
        self.eval
            .weighted_coefficients_into(g, &mut scratch.kernel, &mut scratch.weighted);
        self.eval
            .kernel_on_grid(&scratch.weighted, &self.indices, &mut scratch.f);
    }

    #[inline]
    fn bloch(&self, slot: usize, g: f64, f: f64) -> Bloch {
        let ay = if self.composition.has_h1() {
            4.0 * self.protocol.rate * f
        } else {
            0.0
        };
        if self.composition.has_h0() {
            let a = bloch_vector(self.ks[slot], g);
            Bloch::new(a.ax, ay, a.az)
        } else {
            Bloch::new(0.0, ay, 0.0)
        }
    }

    /// Shared h_m(g) sums make integrating all modes as one system cheaper
    /// than one system per mode.
    fn batched(&self) -> bool {
        self.uses_kernel() && self.eval.config().coeff_mode == CoeffMode::Exact
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn check_samples(protocol: &QuenchProtocol, times: &[f64]) -> Result<()> {
    let (t0, t1) = (protocol.t_initial(), protocol.t_final());
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(t >= t0 && t <= t1)) {
        return Err(Error::invalid("sample times must be ascending and inside the ramp"));
    }
    Ok(())
}

fn check_norm(state: &ModeState, tol: f64) -> Result<()> {
    let drift = (state.norm_sqr() - 1.0).abs();
    let limit = norm_drift_limit(tol);
    if drift > limit {
        return Err(Error::NormDrift { drift, limit });
    }
    Ok(())
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(0) => Err(Error::invalid("worker count must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// States of the selected modes at each sample time: `out[sample][mode]`.
fn evolve_modes(drive: &ModeDrive, tol: f64, times: &[f64]) -> Result<Vec<Vec<ModeState>>> {
    let t0 = drive.protocol.t_initial();
    let g_i = drive.protocol.g_i;
    let control = StepControl::with_tolerance(tol / LOCAL_TOL_DIVISOR);
    if drive.batched() {
        let mut y0 = Vec::with_capacity(2 * drive.ks.len());
        for (slot, &k) in drive.ks.iter().enumerate() {
            let s = mode_ground_state(k, g_i).map_err(|e| e.at_mode(drive.ks[slot]))?;
            y0.extend_from_slice(&s.to_array());
        }
        let mut scratch = drive.scratch();
        let rhs = move |t: f64, y: &Vec<Complex64>, dy: &mut Vec<Complex64>| {
            drive.kernel(t, &mut scratch);
            let g = drive.protocol.field_at(t);
            for (slot, (psi, out)) in y.chunks_exact(2).zip(dy.chunks_exact_mut(2)).enumerate() {
                let d = drive.bloch(slot, g, scratch.f[slot]).schrodinger(&[psi[0], psi[1]]);
                out.copy_from_slice(&d);
            }
        };
        let mut stepper = Dop853::new(rhs, t0, y0, control);
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            stepper.advance_to(t)?;
            let states: Vec<ModeState> = stepper
                .state()
                .chunks_exact(2)
                .map(|c| ModeState::new(c[0], c[1]))
                .collect();
            for (s, &k) in states.iter().zip(&drive.ks) {
                check_norm(s, tol).map_err(|e| e.at_mode(k))?;
            }
            out.push(states);
        }
        Ok(out)
    } else {
        let per_mode: Vec<Result<Vec<ModeState>>> = (0..drive.ks.len())
            .into_par_iter()
            .map(|slot| {
                let k = drive.ks[slot];
                evolve_single(drive, slot, control, times).map_err(|e| e.at_mode(k))
            })
            .collect();
        let per_mode = per_mode.into_iter().collect::<Result<Vec<_>>>()?;
        Ok((0..times.len())
            .map(|i| per_mode.iter().map(|m| m[i]).collect())
            .collect())
    }
}

fn evolve_single(drive: &ModeDrive, slot: usize, control: StepControl, times: &[f64]) -> Result<Vec<ModeState>> {
    let k = drive.ks[slot];
    let psi0 = mode_ground_state(k, drive.protocol.g_i)?;
    let idx = [drive.indices[slot]];
    let mut weighted = vec![0.0; drive.eval.config().cutoff];
    let mut kernel = Vec::new();
    let mut f = [0.0];
    let rhs = move |t: f64, y: &[Complex64; 2], dy: &mut [Complex64; 2]| {
        let g = drive.protocol.field_at(t);
        if drive.uses_kernel() {
            drive.eval.weighted_coefficients_into(g, &mut kernel, &mut weighted);
            drive.eval.kernel_on_grid(&weighted, &idx, &mut f);
        }
        *dy = drive.bloch(slot, g, f[0]).schrodinger(y);
    };
    let mut stepper = Dop853::new(rhs, drive.protocol.t_initial(), psi0.to_array(), control);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        stepper.advance_to(t)?;
        let s = ModeState::from_array(*stepper.state());
        check_norm(&s, control.rtol * LOCAL_TOL_DIVISOR)?;
        out.push(s);
    }
    Ok(out)
}

fn grid_index(k: f64, n_sites: usize) -> Result<usize> {
    check_sites(n_sites)?;
    let j = (k * n_sites as f64 / std::f64::consts::PI - 1.0) / 2.0;
    let jr = j.round();
    if jr < 0.0 || jr >= (n_sites / 2) as f64 || (j - jr).abs() > 1e-9 {
        return Err(Error::invalid(format!("k = {k} is not on the grid of N = {n_sites}")));
    }
    Ok(jr as usize)
}

/// Final state of mode k after the ramp, starting from the ground state of
/// the bare mode block at g_i.
pub fn evolve_mode(
    k: f64,
    protocol: &QuenchProtocol,
    driver: &DriverConfig,
    n_sites: usize,
    tol: f64,
) -> Result<ModeState> {
    let mut states = evolve_mode_sampled(k, protocol, driver, n_sites, tol, &[protocol.t_final()])?;
    Ok(states.pop().expect("one sample"))
}

/// States of mode k at the ascending protocol times `times`.
pub fn evolve_mode_sampled(
    k: f64,
    protocol: &QuenchProtocol,
    driver: &DriverConfig,
    n_sites: usize,
    tol: f64,
    times: &[f64],
) -> Result<Vec<ModeState>> {
    check_tol(tol)?;
    check_samples(protocol, times)?;
    let j = grid_index(k, n_sites)?;
    let drive = ModeDrive::new(*protocol, *driver, n_sites, vec![j])?;
    let out = evolve_modes(&drive, tol, times)?;
    Ok(out.into_iter().map(|mut v| v.remove(0)).collect())
}

/// States of every grid mode at the ascending protocol times `times`:
/// `out[sample][mode]`.
pub fn evolve_spectrum_sampled(
    protocol: &QuenchProtocol,
    driver: &DriverConfig,
    n_sites: usize,
    opts: RunOptions,
    times: &[f64],
) -> Result<Vec<Vec<ModeState>>> {
    check_tol(opts.tol)?;
    check_samples(protocol, times)?;
    check_sites(n_sites)?;
    let drive = ModeDrive::new(*protocol, *driver, n_sites, (0..n_sites / 2).collect())?;
    in_pool(opts.workers, || evolve_modes(&drive, opts.tol, times))?
}

/// `|⟨excited(k, g_f)|ψ⟩|²` in the bare H₀ eigenbasis.
pub fn excitation_probability(state: &ModeState, k: f64, g_f: f64) -> Result<f64> {
    let e = mode_excited_state(k, g_f)?;
    Ok(state.overlap(&e).norm_sqr())
}

/// `(2/N) Σ_{k>0} p_k` in ascending-k order, compensated.
pub fn excitation_density(p_k: &[f64]) -> f64 {
    if p_k.is_empty() {
        return 0.0;
    }
    neumaier_sum(p_k.iter().copied()) / p_k.len() as f64
}

pub fn run_spectrum(
    protocol: &QuenchProtocol,
    driver: &DriverConfig,
    n_sites: usize,
    opts: RunOptions,
) -> Result<SpectrumResult> {
    let k_grid = crate::momentum::momentum_grid(n_sites)?;
    let mut finals = evolve_spectrum_sampled(protocol, driver, n_sites, opts, &[protocol.t_final()])?;
    let finals = finals.pop().expect("one sample");
    let p_k = k_grid
        .iter()
        .zip(&finals)
        .map(|(&k, s)| excitation_probability(s, k, protocol.g_f).map_err(|e| e.at_mode(k)))
        .collect::<Result<Vec<_>>>()?;
    let n_ex = excitation_density(&p_k);
    Ok(SpectrumResult {
        k_grid,
        p_k,
        n_ex,
        protocol: *protocol,
        driver: *driver,
        n_sites,
        tol: opts.tol,
    })
}

/// n_ex for every (rate, cutoff) pair, rates outermost. A failing cell is
/// recorded and the sweep moves on.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    g_i: f64,
    g_f: f64,
    rates: &[f64],
    cutoffs: &[usize],
    filter: crate::coefficients::Filter,
    coeff_mode: CoeffMode,
    n_sites: usize,
    opts: RunOptions,
) -> Vec<SweepCell> {
    let mut cells = Vec::with_capacity(rates.len() * cutoffs.len());
    for &rate in rates {
        for &cutoff in cutoffs {
            let cd = CdConfig::new(cutoff, filter, coeff_mode);
            let driver = if cutoff == 0 {
                DriverConfig::bare()
            } else {
                DriverConfig::assisted(cd)
            };
            let n_ex = QuenchProtocol::new(g_i, g_f, rate)
                .and_then(|p| run_spectrum(&p, &driver, n_sites, opts))
                .map(|r| r.n_ex);
            cells.push(SweepCell {
                rate,
                cutoff,
                filter,
                n_ex,
            });
        }
    }
    cells
}

/// `dθ_k/dg = −sin k / (g² + 1 − 2g cos k)` for the mixing angle of mode k.
pub fn mixing_angle_derivative(k: f64, g: f64) -> f64 {
    -k.sin() / (g * g + 1.0 - 2.0 * g * k.cos())
}

/// `χ_F(g) = Σ_{k>0} ¼ (dθ_k/dg)²`
pub fn fidelity_susceptibility(g: f64, n_sites: usize) -> Result<f64> {
    let ks = crate::momentum::momentum_grid(n_sites)?;
    Ok(neumaier_sum(
        ks.iter().map(|&k| 0.25 * mixing_angle_derivative(k, g).powi(2)),
    ))
}

/// `⟨0|H₁²|0⟩` for the untruncated auxiliary term of a ramp at rate υ,
/// evaluated from σʸ matrix elements between the mode eigenvectors with
/// the kernel rebuilt from its real-space coefficients.
pub fn cd_variance(g: f64, rate: f64, n_sites: usize) -> Result<f64> {
    let eval = KernelEvaluator::new(n_sites, CdConfig::full(n_sites))?;
    let weighted = eval.weighted_coefficients(g);
    let all: Vec<usize> = (0..eval.grid().len()).collect();
    let mut f = vec![0.0; all.len()];
    eval.kernel_on_grid(&weighted, &all, &mut f);
    let sy = pauli::sigma_y();
    let mut second = NeumaierSum::default();
    let mut mean = NeumaierSum::default();
    for (&k, &fk) in eval.grid().iter().zip(&f) {
        let ground = mode_ground_state(k, g)?;
        let excited = mode_excited_state(k, g)?;
        let c = Complex64::from(4.0 * rate * fk);
        let apply = |s: &ModeState| {
            let v = sy * nalgebra::Vector2::new(s.u, s.v) * c;
            ModeState::new(v[0], v[1])
        };
        let h_g = apply(&ground);
        let diag = h_g.overlap(&ground);
        let off = h_g.overlap(&excited);
        // ⟨h²⟩ − ⟨h⟩² over the two-dimensional mode space
        second.add(off.norm_sqr());
        mean.add(diag.re);
    }
    Ok(second.total() + mean.total().powi(2))
}
