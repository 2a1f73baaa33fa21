//! Real-space coefficients of the counterdiabatic Hamiltonian and the
//! range-truncated momentum kernel they resum to.
//!
//! The auxiliary Hamiltonian is expanded in string operators `H₁^[m]` of
//! range m with coefficients `h_m(g)`. Truncating at range M and weighting
//! by a Fourier filter `s_m` gives, per momentum mode, a σʸ coefficient
//! `4υ F_M(k)` with `F_M(k) = Σ_{m≤M} s_m h_m(g) sin(mk)` (last term halved
//! when M = N/2).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::momentum::{check_sites, momentum_grid};
use crate::numeric::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Filter {
    /// s_m = 1
    Dirichlet,
    /// s_m = ½(1 + cos(mπ/M))
    RaisedCosine,
}

impl Filter {
    pub fn as_str(&self) -> &'static str {
        match self {
            Filter::Dirichlet => "dirichlet",
            Filter::RaisedCosine => "raised-cosine",
        }
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(Filter::Dirichlet),
            "raised-cosine" | "raised_cosine" => Ok(Filter::RaisedCosine),
            other => Err(Error::invalid(format!("unknown filter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoeffMode {
    /// Finite-N Fourier sums over the momentum grid.
    Exact,
    /// Large-N closed form.
    Analytic,
}

impl CoeffMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CoeffMode::Exact => "exact",
            CoeffMode::Analytic => "analytic",
        }
    }
}

impl fmt::Display for CoeffMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoeffMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(CoeffMode::Exact),
            "analytic" => Ok(CoeffMode::Analytic),
            other => Err(Error::invalid(format!("unknown coefficient mode {other:?}"))),
        }
    }
}

/// Truncated counterdiabatic driving: range cutoff, filter and coefficient
/// source. `cutoff = 0` means no auxiliary driving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdConfig {
    pub cutoff: usize,
    pub filter: Filter,
    pub coeff_mode: CoeffMode,
}

impl CdConfig {
    pub fn new(cutoff: usize, filter: Filter, coeff_mode: CoeffMode) -> Self {
        CdConfig {
            cutoff,
            filter,
            coeff_mode,
        }
    }

    pub fn none() -> Self {
        CdConfig::new(0, Filter::Dirichlet, CoeffMode::Exact)
    }

    /// Untruncated driving: M = N/2, exact coefficients, no filter.
    pub fn full(n_sites: usize) -> Self {
        CdConfig::new(n_sites / 2, Filter::Dirichlet, CoeffMode::Exact)
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        check_sites(n_sites)?;
        if self.cutoff > n_sites / 2 {
            return Err(Error::invalid(format!(
                "cutoff M = {} exceeds N/2 = {}",
                self.cutoff,
                n_sites / 2
            )));
        }
        Ok(())
    }

    /// The range-N/2 string appears once per pair instead of twice, so its
    /// coefficient is halved.
    pub fn half_weight_last(&self, n_sites: usize) -> bool {
        self.cutoff > 0 && self.cutoff == n_sites / 2
    }

    /// Weights `s_m` for m = 1..=M, including the halved last term.
    pub fn weights(&self, n_sites: usize) -> Result<Vec<f64>> {
        self.validate(n_sites)?;
        let mut w = (1..=self.cutoff)
            .map(|m| filter_weight(self.filter, m, self.cutoff))
            .collect::<Result<Vec<_>>>()?;
        if self.half_weight_last(n_sites) {
            if let Some(last) = w.last_mut() {
                *last *= 0.5;
            }
        }
        Ok(w)
    }
}

#[inline]
pub(crate) fn kernel_value(sin_k: f64, cos_k: f64, g: f64) -> f64 {
    0.25 * sin_k / (g * g + 1.0 - 2.0 * g * cos_k)
}

fn check_range(m: usize, n_sites: usize) -> Result<()> {
    check_sites(n_sites)?;
    if m == 0 || m > n_sites / 2 {
        return Err(Error::invalid(format!("range m = {m} outside 1..={}", n_sites / 2)));
    }
    Ok(())
}

/// `h_m(g) = (1/N) Σ_k f(k) sin(mk)` over the full anti-periodic grid,
/// evaluated as `(2/N) Σ_{k>0}` with compensated summation.
pub fn h_m_exact(m: usize, g: f64, n_sites: usize) -> Result<f64> {
    check_range(m, n_sites)?;
    let grid = momentum_grid(n_sites)?;
    let mf = m as f64;
    let mut acc = NeumaierSum::default();
    for &k in &grid {
        acc.add(kernel_value(k.sin(), k.cos(), g) * (mf * k).sin());
    }
    Ok(acc.total() * (2.0 / n_sites as f64))
}

/// Large-N limit: `g^{m−1}/8` for |g| < 1, `g^{−m−1}/8` for |g| > 1 and the
/// common value `sign(g)^{m−1}/8` at |g| = 1.
pub fn h_m_analytic(m: usize, g: f64) -> f64 {
    let m = m as i32;
    if g.abs() < 1.0 {
        g.powi(m - 1) / 8.0
    } else if g.abs() > 1.0 {
        g.powi(-m - 1) / 8.0
    } else {
        g.signum().powi(m - 1) / 8.0
    }
}

/// Correlation length `ξ(g) = 1/|ln|g||`.
pub fn correlation_length(g: f64) -> f64 {
    1.0 / g.abs().ln().abs()
}

pub fn filter_weight(kind: Filter, m: usize, cutoff: usize) -> Result<f64> {
    if m == 0 || m > cutoff {
        return Err(Error::invalid(format!("filter index m = {m} outside 1..={cutoff}")));
    }
    Ok(match kind {
        Filter::Dirichlet => 1.0,
        Filter::RaisedCosine => 0.5 * (1.0 + (m as f64 * std::f64::consts::PI / cutoff as f64).cos()),
    })
}

/// `F_M(k)` for arbitrary k.
pub fn truncated_kernel(k: f64, g: f64, cfg: &CdConfig, n_sites: usize) -> Result<f64> {
    let eval = KernelEvaluator::new(n_sites, *cfg)?;
    let coeffs = eval.weighted_coefficients(g);
    Ok(eval.kernel_at(k, &coeffs))
}

/// Precomputed tables for evaluating `F_M` on the momentum grid many times
/// at varying g. Results are bit-identical to [`h_m_exact`] /
/// [`truncated_kernel`].
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    n_sites: usize,
    cfg: CdConfig,
    grid: Vec<f64>,
    sin_k: Vec<f64>,
    cos_k: Vec<f64>,
    /// sin(m k_j), m-major: index (m − 1)·len + j
    sin_mk: Vec<f64>,
    weights: Vec<f64>,
}

impl KernelEvaluator {
    pub fn new(n_sites: usize, cfg: CdConfig) -> Result<Self> {
        let weights = cfg.weights(n_sites)?;
        let grid = momentum_grid(n_sites)?;
        let sin_k = grid.iter().map(|k| k.sin()).collect();
        let cos_k = grid.iter().map(|k| k.cos()).collect();
        let mut sin_mk = Vec::with_capacity(cfg.cutoff * grid.len());
        for m in 1..=cfg.cutoff {
            let mf = m as f64;
            sin_mk.extend(grid.iter().map(|&k| (mf * k).sin()));
        }
        Ok(KernelEvaluator {
            n_sites,
            cfg,
            grid,
            sin_k,
            cos_k,
            sin_mk,
            weights,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn config(&self) -> &CdConfig {
        &self.cfg
    }

    /// `h_m(g)` for m = 1..=M in the configured mode.
    pub fn coefficients(&self, g: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.cfg.cutoff];
        let mut scratch = Vec::new();
        self.coefficients_into(g, &mut scratch, &mut out);
        out
    }

    fn coefficients_into(&self, g: f64, kernel: &mut Vec<f64>, out: &mut [f64]) {
        match self.cfg.coeff_mode {
            CoeffMode::Analytic => {
                for (m, h) in out.iter_mut().enumerate() {
                    *h = h_m_analytic(m + 1, g);
                }
            }
            CoeffMode::Exact => {
                kernel.clear();
                kernel.extend(self.sin_k.iter().zip(&self.cos_k).map(|(&s, &c)| kernel_value(s, c, g)));
                let len = self.grid.len();
                let norm = 2.0 / self.n_sites as f64;
                for (m, h) in out.iter_mut().enumerate() {
                    let row = &self.sin_mk[m * len..(m + 1) * len];
                    let mut acc = NeumaierSum::default();
                    for (f, s) in kernel.iter().zip(row) {
                        acc.add(f * s);
                    }
                    *h = acc.total() * norm;
                }
            }
        }
    }

    /// `s_m h_m(g)` (with the halved last term).
    pub fn weighted_coefficients(&self, g: f64) -> Vec<f64> {
        let mut c = self.coefficients(g);
        for (c, w) in c.iter_mut().zip(&self.weights) {
            *c *= w;
        }
        c
    }

    pub(crate) fn weighted_coefficients_into(&self, g: f64, kernel: &mut Vec<f64>, out: &mut [f64]) {
        self.coefficients_into(g, kernel, out);
        for (c, w) in out.iter_mut().zip(&self.weights) {
            *c *= w;
        }
    }

    /// `Σ_m c_m sin(mk)` for arbitrary k, ascending m.
    pub fn kernel_at(&self, k: f64, weighted: &[f64]) -> f64 {
        let mut f = 0.0;
        for (m, c) in weighted.iter().enumerate() {
            f += c * ((m + 1) as f64 * k).sin();
        }
        f
    }

    /// `Σ_m c_m sin(m k_j)` for the grid modes `indices`, same summation
    /// order as [`kernel_at`](Self::kernel_at).
    pub(crate) fn kernel_on_grid(&self, weighted: &[f64], indices: &[usize], out: &mut [f64]) {
        out.iter_mut().for_each(|f| *f = 0.0);
        let len = self.grid.len();
        for (m, c) in weighted.iter().enumerate() {
            let row = &self.sin_mk[m * len..(m + 1) * len];
            for (f, &j) in out.iter_mut().zip(indices) {
                *f += c * row[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::momentum::cd_kernel_exact;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn exact_coefficients_examples() {
        assert_abs_diff_eq!(h_m_exact(1, 0.0, 1600).unwrap(), 0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(h_m_exact(3, 0.0, 1600).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h_m_exact(5, 2.0, 1600).unwrap(), 0.001953125, epsilon = 1e-9);
        assert!(h_m_exact(0, 0.5, 10).is_err());
        assert!(h_m_exact(6, 0.5, 10).is_err());
        assert!(h_m_exact(5, 0.5, 10).is_ok());
        assert!(h_m_exact(1, 0.5, 9).is_err());
        // finite at the critical point since k = 0 is not on the grid
        assert!(h_m_exact(1, 1.0, 100).unwrap().is_finite());
    }

    #[test]
    fn analytic_coefficients_examples() {
        for m in 1..30 {
            assert_eq!(h_m_analytic(m, 1.0), 0.125);
        }
        assert_eq!(h_m_analytic(4, 0.5), 0.015625);
        let g = (-1.0f64).exp();
        assert_eq!(correlation_length(g), 1.0);
        assert_abs_diff_eq!(h_m_analytic(3, g), (-2.0f64).exp() / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h_m_analytic(3, g), 0.016917, epsilon = 1e-6);
        // continuity through |g| = 1 from both sides
        for m in [1, 2, 5] {
            assert_abs_diff_eq!(h_m_analytic(m, 1.0 - 1e-9), h_m_analytic(m, 1.0), epsilon = 1e-7);
            assert_abs_diff_eq!(h_m_analytic(m, 1.0 + 1e-9), h_m_analytic(m, 1.0), epsilon = 1e-7);
            assert_abs_diff_eq!(h_m_analytic(m, -1.0 + 1e-9), h_m_analytic(m, -1.0), epsilon = 1e-7);
        }
    }

    #[test]
    fn filter_examples() {
        assert_eq!(filter_weight(Filter::Dirichlet, 3, 7).unwrap(), 1.0);
        assert_abs_diff_eq!(
            filter_weight(Filter::RaisedCosine, 16, 16).unwrap(),
            0.0,
            epsilon = 1e-16
        );
        assert_abs_diff_eq!(
            filter_weight(Filter::RaisedCosine, 8, 16).unwrap(),
            0.5,
            epsilon = 1e-16
        );
        assert!(filter_weight(Filter::Dirichlet, 5, 4).is_err());
        assert!(filter_weight(Filter::Dirichlet, 0, 4).is_err());
        assert_eq!("raised-cosine".parse::<Filter>().unwrap(), Filter::RaisedCosine);
        assert!("lanczos".parse::<Filter>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(CdConfig::new(51, Filter::Dirichlet, CoeffMode::Exact)
            .validate(100)
            .is_err());
        let full = CdConfig::full(100);
        assert!(full.half_weight_last(100));
        assert!(!CdConfig::new(49, Filter::Dirichlet, CoeffMode::Exact).half_weight_last(100));
        assert!(!CdConfig::none().half_weight_last(100));
        assert_eq!(full.weights(100).unwrap().last(), Some(&0.5));
    }

    #[test]
    fn truncated_kernel_examples() {
        let n = 200;
        for k in momentum_grid(n).unwrap() {
            assert_eq!(truncated_kernel(k, 0.7, &CdConfig::none(), n).unwrap(), 0.0);
        }
        let full = CdConfig::full(n);
        for &g in &[0.3, 1.0, 1.8] {
            for k in momentum_grid(n).unwrap() {
                let f = cd_kernel_exact(k, g).unwrap();
                let fm = truncated_kernel(k, g, &full, n).unwrap();
                assert!(
                    (fm - f / 2.0).abs() <= 1e-10 * f.abs().max(1.0),
                    "g={g} k={k}: {fm} vs {}",
                    f / 2.0
                );
            }
        }
        let cfg = CdConfig::new(4, Filter::Dirichlet, CoeffMode::Analytic);
        assert_abs_diff_eq!(
            truncated_kernel(PI / 2.0, 1.0, &cfg, 1600).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn evaluator_is_bit_transparent() {
        let n = 64;
        let cfg = CdConfig::new(20, Filter::RaisedCosine, CoeffMode::Exact);
        let eval = KernelEvaluator::new(n, cfg).unwrap();
        for &g in &[0.2, 0.999, 1.0, 3.5] {
            let h = eval.coefficients(g);
            for (i, hm) in h.iter().enumerate() {
                assert_eq!(hm.to_bits(), h_m_exact(i + 1, g, n).unwrap().to_bits());
            }
            let w = eval.weighted_coefficients(g);
            let idx: Vec<usize> = (0..eval.grid().len()).collect();
            let mut on_grid = vec![0.0; idx.len()];
            eval.kernel_on_grid(&w, &idx, &mut on_grid);
            for (j, &k) in eval.grid().iter().enumerate() {
                assert_eq!(on_grid[j].to_bits(), truncated_kernel(k, g, &cfg, n).unwrap().to_bits());
            }
        }
    }
}
