//! Declarative experiment configuration: a TOML file overlaid by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use cdquench::coefficients::{CdConfig, CoeffMode, Filter};
use cdquench::momentum::momentum_grid;
use cdquench::quench::{Composition, DriverConfig, QuenchProtocol, DEFAULT_TOL};

pub const OUT_DIR_ENV: &str = "CDQUENCH_OUT_DIR";
pub const DESK_SITES: usize = 400;
pub const PAPER_SITES: usize = 1600;
pub const FIG1_CUTOFFS: [usize; 5] = [4, 8, 16, 32, 64];
pub const FIG2_CUTOFFS: [usize; 8] = [0, 1, 2, 4, 8, 16, 32, 64];

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Subcommand the file is meant for; checked when present.
    pub experiment: Option<String>,
    pub n_sites: Option<usize>,
    pub paper_scale: Option<bool>,
    pub tol: Option<f64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub driver: DriverSection,
    pub rates: Option<Vec<f64>>,
    #[serde(default)]
    pub lz: LzSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub g_i: Option<f64>,
    pub g_f: Option<f64>,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSection {
    pub composition: Option<Composition>,
    pub filter: Option<Filter>,
    pub coeff_mode: Option<CoeffMode>,
    pub cutoffs: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LzSection {
    pub delta: Option<f64>,
    pub rate: Option<f64>,
    pub span: Option<f64>,
    pub points: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Settings that apply to every engine run, already merged.
#[derive(Debug, Clone)]
pub struct Common {
    pub n_sites: usize,
    pub tol: f64,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

impl Common {
    pub fn resolve(
        file: &FileConfig,
        n_sites: Option<usize>,
        paper_scale: bool,
        tol: Option<f64>,
        workers: Option<usize>,
        out: Option<PathBuf>,
    ) -> anyhow::Result<Self> {
        let scale = paper_scale || file.paper_scale.unwrap_or(false);
        let default_sites = if scale { PAPER_SITES } else { DESK_SITES };
        let n_sites = n_sites.or(file.n_sites).unwrap_or(default_sites);
        momentum_grid(n_sites)?;
        let tol = tol.or(file.tol).unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol < 1.0) {
            bail!("tolerance must lie in (0, 1), got {tol}");
        }
        let workers = workers.or(file.workers);
        if workers == Some(0) {
            bail!("worker count must be at least 1");
        }
        Ok(Common {
            n_sites,
            tol,
            workers,
            out: resolve_out(file, out)?,
        })
    }
}

/// Output directory: flag, then config file, then `CDQUENCH_OUT_DIR`, then
/// the working directory. Created if missing.
pub fn resolve_out(file: &FileConfig, flag: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    let out = flag
        .or_else(|| file.out.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).with_context(|| format!("creating output directory {}", out.display()))?;
    Ok(out)
}

/// Field ramp g_i → g_f.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Ramp {
    pub g_i: f64,
    pub g_f: f64,
}

impl Ramp {
    pub fn resolve(file: &FileConfig, g_i: Option<f64>, g_f: Option<f64>) -> anyhow::Result<Self> {
        let ramp = Ramp {
            g_i: g_i.or(file.protocol.g_i).unwrap_or(10.0),
            g_f: g_f.or(file.protocol.g_f).unwrap_or(0.0),
        };
        QuenchProtocol::new(ramp.g_i, ramp.g_f, 1.0)?;
        Ok(ramp)
    }
}

pub fn check_rates(rates: &[f64]) -> anyhow::Result<()> {
    if rates.is_empty() {
        bail!("rate list is empty");
    }
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        bail!("quench rates must be positive and finite, got {r}");
    }
    Ok(())
}

pub fn check_cutoffs(cutoffs: &[usize], n_sites: usize) -> anyhow::Result<()> {
    if cutoffs.is_empty() {
        bail!("cutoff list is empty");
    }
    for &m in cutoffs {
        CdConfig::new(m, Filter::Dirichlet, CoeffMode::Exact).validate(n_sites)?;
    }
    Ok(())
}

/// `per_decade` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).round() as usize;
    (0..=steps)
        .map(|i| lo * 10f64.powf(decades * i as f64 / steps as f64))
        .collect()
}

/// Resolved settings of a spectrum command, written into output headers.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSettings {
    pub experiment: String,
    pub n_sites: usize,
    pub tol: f64,
    pub g_i: f64,
    pub g_f: f64,
    pub rate: f64,
    pub composition: Composition,
    pub coeff_mode: CoeffMode,
    pub filters: Vec<Filter>,
    pub cutoffs: Vec<usize>,
}

impl SpectrumSettings {
    pub fn driver(&self, cutoff: usize, filter: Filter) -> DriverConfig {
        DriverConfig::new(self.composition, CdConfig::new(cutoff, filter, self.coeff_mode))
    }
}

/// Resolved settings of a rate × cutoff sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSettings {
    pub experiment: String,
    pub n_sites: usize,
    pub tol: f64,
    pub g_i: f64,
    pub g_f: f64,
    pub filter: Filter,
    pub coeff_mode: CoeffMode,
    pub cutoffs: Vec<usize>,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LzSettings {
    pub experiment: String,
    pub delta: f64,
    pub rate: f64,
    pub span: f64,
    pub points: usize,
    pub tol: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 1e2, 4);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 1e-3);
        assert!((g[20] / 1e2 - 1.0).abs() < 1e-12);
        assert!((g[4] / 1e-2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parses_nested_file() {
        let text = r#"
            experiment = "fig2"
            n_sites = 40
            rates = [0.1, 1.0]
            [protocol]
            g_i = 5.0
            [driver]
            filter = "raised-cosine"
            coeff_mode = "analytic"
            composition = "h1_only"
            cutoffs = [2, 4]
        "#;
        let cfg: FileConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.n_sites, Some(40));
        assert_eq!(cfg.driver.filter, Some(Filter::RaisedCosine));
        assert_eq!(cfg.driver.coeff_mode, Some(CoeffMode::Analytic));
        assert_eq!(cfg.driver.composition, Some(Composition::H1Only));
        assert_eq!(cfg.protocol.g_i, Some(5.0));
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }

    #[test]
    fn cutoff_and_rate_checks() {
        assert!(check_cutoffs(&[0, 4, 200], 400).is_ok());
        assert!(check_cutoffs(&[201], 400).is_err());
        assert!(check_cutoffs(&[], 400).is_err());
        assert!(check_rates(&[0.1, 0.0]).is_err());
        assert!(check_rates(&[f64::INFINITY]).is_err());
    }
}
