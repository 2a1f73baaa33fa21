use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::Serialize;

use cdquench::coefficients::{CdConfig, CoeffMode, Filter};
use cdquench::quench::{run_spectrum, sweep, Composition, DriverConfig, QuenchProtocol, RunOptions};
use cdquench::scaling::{fit_power_law, FitResult};
use cdquench::spin::{
    build_spin_h0, build_spin_h1m, cd_matrix_element_check, even_spectrum_deviation, evolve_full,
    excited_state_tracking, verify_h0_momentum_form, verify_h1m_momentum_form, EVOLUTION_CAP, OPERATOR_CAP,
};
use cdquench::two_level::{
    evolve_two_level_sampled, instantaneous_eigenbasis, lz_ground, lz_hamiltonian, Driver, LzParams,
};

use crate::config::{
    check_cutoffs, check_rates, log_grid, resolve_out, Common, FileConfig, LzSettings, Ramp, SpectrumSettings,
    SweepSettings, FIG1_CUTOFFS, FIG2_CUTOFFS,
};
use crate::output::{header, num, write_json, CsvOut};

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Engine(anyhow::Error),
    Oracle(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Engine(_) => 3,
            Failure::Oracle(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration: {e:#}"),
            Failure::Engine(e) => write!(f, "engine: {e:#}"),
            Failure::Oracle(s) => write!(f, "oracle check failed: {s}"),
        }
    }
}

/// Engine errors caused by bad input count as configuration errors.
impl From<cdquench::Error> for Failure {
    fn from(e: cdquench::Error) -> Self {
        match e {
            cdquench::Error::InvalidInput(_) | cdquench::Error::TooLarge { .. } => Failure::Config(e.into()),
            other => Failure::Engine(other.into()),
        }
    }
}

trait OrConfig<T> {
    fn config(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrConfig<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
}

/// Output writing failures happen after the inputs were accepted.
trait OrEngine<T> {
    fn engine(self) -> Result<T, Failure>;
}

impl<T> OrEngine<T> for anyhow::Result<T> {
    fn engine(self) -> Result<T, Failure> {
        self.map_err(Failure::Engine)
    }
}

pub type Outcome = Result<(), Failure>;

/// Flags shared by the engine-backed commands.
#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub n_sites: Option<usize>,
    pub paper_scale: bool,
    pub tol: Option<f64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub g_i: Option<f64>,
    pub g_f: Option<f64>,
    pub coeff_mode: Option<CoeffMode>,
}

impl RunFlags {
    fn resolve(&self, file: &FileConfig) -> Result<(Common, Ramp, CoeffMode), Failure> {
        let common = Common::resolve(
            file,
            self.n_sites,
            self.paper_scale,
            self.tol,
            self.workers,
            self.out.clone(),
        )
        .config()?;
        let ramp = Ramp::resolve(file, self.g_i, self.g_f).config()?;
        let mode = self.coeff_mode.or(file.driver.coeff_mode).unwrap_or(CoeffMode::Exact);
        Ok((common, ramp, mode))
    }
}

fn options(common: &Common) -> RunOptions {
    RunOptions {
        tol: common.tol,
        workers: common.workers,
    }
}

fn cell_failures(failed: usize, path: &Path) -> Outcome {
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Engine(anyhow!(
            "{failed} cell(s) failed; see trailing comments in {}",
            path.display()
        )))
    }
}

/// p_k spectra for each cutoff, one file per filter.
pub fn fig1(
    flags: &RunFlags,
    rate: Option<f64>,
    cutoffs: Option<Vec<usize>>,
    composition: Option<Composition>,
    file: &FileConfig,
) -> Outcome {
    let (common, ramp, coeff_mode) = flags.resolve(file)?;
    let rate = rate.or(file.protocol.rate).unwrap_or(50.0);
    let protocol = QuenchProtocol::new(ramp.g_i, ramp.g_f, rate)?;
    let cutoffs = cutoffs.or(file.driver.cutoffs.clone()).unwrap_or(FIG1_CUTOFFS.to_vec());
    check_cutoffs(&cutoffs, common.n_sites).config()?;
    let composition = composition.or(file.driver.composition).unwrap_or(Composition::H0PlusH1);
    let mut failed = 0;
    let mut last = PathBuf::new();
    for filter in [Filter::Dirichlet, Filter::RaisedCosine] {
        let settings = SpectrumSettings {
            experiment: "fig1".into(),
            n_sites: common.n_sites,
            tol: common.tol,
            g_i: ramp.g_i,
            g_f: ramp.g_f,
            rate,
            composition,
            coeff_mode,
            filters: vec![filter],
            cutoffs: cutoffs.clone(),
        };
        let path = common
            .out
            .join(format!("fig1_{}.csv", filter.as_str().replace('-', "_")));
        let head = header("fig1", &settings).engine()?;
        let mut csv = CsvOut::create(&path, &head, &["k", "M", "filter", "p_k", "kM"]).engine()?;
        for &m in &cutoffs {
            match run_spectrum(&protocol, &settings.driver(m, filter), common.n_sites, options(&common)) {
                Ok(r) => {
                    for (&k, &p) in r.k_grid.iter().zip(&r.p_k) {
                        csv.row([num(k), m.to_string(), filter.to_string(), num(p), num(k * m as f64)])
                            .engine()?;
                    }
                }
                Err(e) => {
                    failed += 1;
                    csv.failure(&format!("M={m}"), &e);
                }
            }
        }
        last = csv.finish().engine()?;
        println!("{}", last.display());
    }
    cell_failures(failed, &last)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Fig2,
    Sweep,
}

/// n_ex over a rate × cutoff grid.
pub fn rate_sweep(
    kind: SweepKind,
    flags: &RunFlags,
    rates: Option<Vec<f64>>,
    cutoffs: Option<Vec<usize>>,
    filter: Option<Filter>,
    file: &FileConfig,
) -> Outcome {
    let (common, ramp, coeff_mode) = flags.resolve(file)?;
    let (name, rates, cutoffs) = match kind {
        SweepKind::Fig2 => (
            "fig2",
            rates.or(file.rates.clone()).unwrap_or_else(|| log_grid(1e-2, 1e2, 4)),
            cutoffs.or(file.driver.cutoffs.clone()).unwrap_or(FIG2_CUTOFFS.to_vec()),
        ),
        SweepKind::Sweep => (
            "sweep",
            rates
                .or(file.rates.clone())
                .context("sweep needs --rates or `rates` in the config file")
                .config()?,
            cutoffs
                .or(file.driver.cutoffs.clone())
                .context("sweep needs --cutoffs or `driver.cutoffs` in the config file")
                .config()?,
        ),
    };
    check_rates(&rates).config()?;
    check_cutoffs(&cutoffs, common.n_sites).config()?;
    let filter = filter.or(file.driver.filter).unwrap_or(Filter::Dirichlet);
    let settings = SweepSettings {
        experiment: name.into(),
        n_sites: common.n_sites,
        tol: common.tol,
        g_i: ramp.g_i,
        g_f: ramp.g_f,
        filter,
        coeff_mode,
        cutoffs,
        rates,
    };
    let columns: &[&str] = match kind {
        SweepKind::Fig2 => &["rate", "M", "n_ex"],
        SweepKind::Sweep => &["rate", "M", "filter", "coeff_mode", "n_ex"],
    };
    let path = common.out.join(format!("{name}.csv"));
    let mut csv = CsvOut::create(&path, &header(name, &settings).engine()?, columns).engine()?;
    let cells = sweep(
        ramp.g_i,
        ramp.g_f,
        &settings.rates,
        &settings.cutoffs,
        filter,
        coeff_mode,
        common.n_sites,
        options(&common),
    );
    let mut failed = 0;
    for cell in cells {
        match cell.n_ex {
            Ok(n_ex) => {
                let mut row = vec![num(cell.rate), cell.cutoff.to_string()];
                if kind == SweepKind::Sweep {
                    row.push(filter.to_string());
                    row.push(coeff_mode.to_string());
                }
                row.push(num(n_ex));
                csv.row(row).engine()?;
            }
            Err(e) => {
                failed += 1;
                csv.failure(&format!("rate={} M={}", num(cell.rate), cell.cutoff), &e);
            }
        }
    }
    let path = csv.finish().engine()?;
    println!("{}", path.display());
    cell_failures(failed, &path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitAgainst {
    Rate,
    Cutoff,
}

#[derive(Debug, Serialize)]
struct FitReport {
    input: String,
    against: FitAgainst,
    #[serde(skip_serializing_if = "Option::is_none")]
    cutoff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(flatten)]
    fit: FitResult,
}

fn same_rate(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Reads (rate, M, n_ex) rows from a fig2 or sweep file.
fn read_sweep_rows(path: &Path) -> anyhow::Result<Vec<(f64, usize, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no `{name}` column", path.display()))
    };
    let (ir, im, in_) = (col("rate")?, col("M")?, col("n_ex")?);
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let parse = || -> anyhow::Result<(f64, usize, f64)> {
            Ok((field(ir).parse()?, field(im).parse()?, field(in_).parse()?))
        };
        rows.push(parse().with_context(|| format!("data row {} of {}", line + 1, path.display()))?);
    }
    Ok(rows)
}

/// Log-log least squares of n_ex against the rate (at fixed M) or against
/// M (at fixed rate).
pub fn fit_scaling(
    input: &Path,
    against: FitAgainst,
    cutoff: Option<usize>,
    rate: Option<f64>,
    window: Option<Vec<f64>>,
    out: Option<PathBuf>,
    file: &FileConfig,
) -> Outcome {
    let window = match window.as_deref() {
        None => None,
        Some(&[lo, hi]) if lo <= hi => Some((lo, hi)),
        Some(w) => {
            return Err(Failure::Config(anyhow!(
                "--window needs two ascending values, got {w:?}"
            )))
        }
    };
    let out = resolve_out(file, out).config()?;
    let rows = read_sweep_rows(input).config()?;
    let (x, y): (Vec<f64>, Vec<f64>) = match against {
        FitAgainst::Rate => {
            let m = cutoff.unwrap_or(0);
            rows.iter().filter(|r| r.1 == m).map(|r| (r.0, r.2)).unzip()
        }
        FitAgainst::Cutoff => {
            let Some(v) = rate else {
                return Err(Failure::Config(anyhow!("fitting against M needs --rate")));
            };
            rows.iter()
                .filter(|r| same_rate(r.0, v))
                .map(|r| (r.1 as f64, r.2))
                .unzip()
        }
    };
    let fit = fit_power_law(&x, &y, window).map_err(|e| Failure::Config(e.into()))?;
    let report = FitReport {
        input: input.display().to_string(),
        against,
        cutoff: (against == FitAgainst::Rate).then(|| cutoff.unwrap_or(0)),
        rate: (against == FitAgainst::Cutoff).then_some(rate).flatten(),
        fit,
    };
    let text = write_json(&out.join("fit_scaling.json"), &report).engine()?;
    print!("{text}");
    Ok(())
}

/// Ground-state fidelity along a Landau-Zener sweep, bare and assisted.
pub fn lz_demo(
    delta: Option<f64>,
    rate: Option<f64>,
    span: Option<f64>,
    points: Option<usize>,
    tol: Option<f64>,
    out: Option<PathBuf>,
    file: &FileConfig,
) -> Outcome {
    let settings = LzSettings {
        experiment: "lz-demo".into(),
        delta: delta.or(file.lz.delta).unwrap_or(1.0),
        rate: rate.or(file.lz.rate).unwrap_or(100.0),
        span: span.or(file.lz.span).unwrap_or(20.0),
        points: points.or(file.lz.points).unwrap_or(401),
        tol: tol.or(file.tol).unwrap_or(1e-10),
    };
    if settings.points < 2 {
        return Err(Failure::Config(anyhow!("need at least 2 sample points")));
    }
    if !(settings.rate > 0.0) || !(settings.span > 0.0) {
        return Err(Failure::Config(anyhow!("rate and span must be positive")));
    }
    let out = resolve_out(file, out).config()?;
    let params = LzParams::ramp(settings.delta, -settings.span, settings.span, settings.rate)?;
    let start = lz_ground(-settings.span, settings.delta)?;
    let last = (settings.points - 1) as f64;
    let times: Vec<f64> = (0..settings.points)
        .map(|j| params.duration() * j as f64 / last)
        .collect();
    let bare = evolve_two_level_sampled(&params, Driver::Bare, &start, settings.tol, &times)?;
    let assisted = evolve_two_level_sampled(&params, Driver::Assisted, &start, settings.tol, &times)?;
    let path = out.join("lz_demo.csv");
    let head = header("lz-demo", &settings).engine()?;
    let mut csv = CsvOut::create(&path, &head, &["t", "lambda", "fidelity_bare", "fidelity_cd"]).engine()?;
    for (j, &t) in times.iter().enumerate() {
        let lambda = params.lambda_at(t);
        // degenerate levels (Δ = 0 at λ = 0) have no ground state
        let (fb, fa) = match instantaneous_eigenbasis(&lz_hamiltonian(lambda, settings.delta)) {
            Ok(basis) => (bare[j].fidelity(&basis.ground), assisted[j].fidelity(&basis.ground)),
            Err(_) => (f64::NAN, f64::NAN),
        };
        csv.row([num(t), num(lambda), num(fb), num(fa)]).engine()?;
    }
    println!("{}", csv.finish().engine()?.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct Check {
    n_sites: usize,
    name: &'static str,
    deviation: f64,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct OracleReport {
    threshold: f64,
    tol: f64,
    pass: bool,
    checks: Vec<Check>,
}

fn oracle_checks(n: usize, tol: f64, workers: Option<usize>) -> cdquench::Result<Vec<(&'static str, f64)>> {
    let mut out = Vec::new();
    let mut sym = 0.0f64;
    let h0 = build_spin_h0(n, 0.8)?;
    sym = sym.max(h0.hermiticity_error()).max(h0.parity_commutator_norm());
    let mut form = 0.0f64;
    for m in 1..=n / 2 {
        let h1 = build_spin_h1m(n, m)?;
        sym = sym.max(h1.hermiticity_error()).max(h1.parity_commutator_norm());
        form = form.max(verify_h1m_momentum_form(n, m)?);
    }
    out.push(("operator_symmetry", sym));
    out.push(("h1m_momentum_form", form));
    let fields = [0.5, 1.0, 2.0];
    let mut h0_form = 0.0f64;
    let mut spectrum = 0.0f64;
    for g in fields {
        h0_form = h0_form.max(verify_h0_momentum_form(n, g)?);
        spectrum = spectrum.max(even_spectrum_deviation(n, g)?);
    }
    out.push(("h0_momentum_form", h0_form));
    out.push(("even_spectrum", spectrum));
    let mut elements = 0.0f64;
    for g in [0.5, 2.0] {
        elements = elements.max(cd_matrix_element_check(n, g)?);
    }
    out.push(("cd_matrix_elements", elements));
    if n <= EVOLUTION_CAP {
        let protocol = QuenchProtocol::new(10.0, 0.0, 5.0)?;
        let drivers = [
            DriverConfig::bare(),
            DriverConfig::assisted(CdConfig::new(1, Filter::Dirichlet, CoeffMode::Exact)),
            DriverConfig::assisted(CdConfig::full(n)),
        ];
        let opts = RunOptions { tol, workers };
        let mut dn = 0.0f64;
        for driver in &drivers {
            let full = evolve_full(n, &protocol, driver, tol)?;
            let engine = run_spectrum(&protocol, driver, n, opts)?;
            dn = dn.max((full.n_ex - engine.n_ex).abs());
        }
        out.push(("full_evolution", dn));
        let mode = usize::from(n >= 4);
        let occ = excited_state_tracking(n, &protocol, mode, tol)?;
        let dev = occ
            .iter()
            .enumerate()
            .map(|(j, q)| (q - if j == mode { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        out.push(("excited_state_tracking", dev));
    }
    Ok(out)
}

/// Exact spin-chain verifications for each chain length.
pub fn oracle_check(
    sizes: &[usize],
    tol: Option<f64>,
    threshold: f64,
    workers: Option<usize>,
    out: Option<PathBuf>,
    file: &FileConfig,
) -> Outcome {
    for &n in sizes {
        if n > OPERATOR_CAP {
            return Err(Failure::Config(anyhow!(
                "N = {n} exceeds the spin-oracle cap {OPERATOR_CAP}"
            )));
        }
        if n < 2 || n % 2 != 0 {
            return Err(Failure::Config(anyhow!("chain length must be even and >= 2, got {n}")));
        }
    }
    if !(threshold > 0.0) {
        return Err(Failure::Config(anyhow!("threshold must be positive, got {threshold}")));
    }
    let tol = tol.unwrap_or(1e-12);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Failure::Config(anyhow!("tolerance must lie in (0, 1), got {tol}")));
    }
    let out = resolve_out(file, out).config()?;
    let mut checks = Vec::new();
    for &n in sizes {
        for (name, deviation) in oracle_checks(n, tol, workers)? {
            checks.push(Check {
                n_sites: n,
                name,
                deviation,
                pass: deviation <= threshold,
            });
        }
    }
    let report = OracleReport {
        threshold,
        tol,
        pass: checks.iter().all(|c| c.pass),
        checks,
    };
    let text = write_json(&out.join("oracle_check.json"), &report).engine()?;
    print!("{text}");
    let failing: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("N={} {} deviation {:e}", c.n_sites, c.name, c.deviation))
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(Failure::Oracle(failing.join("; ")))
    }
}

pub fn parse_composition(s: &str) -> anyhow::Result<Composition> {
    match s.replace('-', "_").as_str() {
        "h0_only" => Ok(Composition::H0Only),
        "h1_only" => Ok(Composition::H1Only),
        "h0_plus_h1" => Ok(Composition::H0PlusH1),
        _ => bail!("unknown composition {s:?} (h0_only, h1_only, h0_plus_h1)"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            Failure::Config(anyhow!("x")).exit_code(),
            Failure::Engine(anyhow!("x")).exit_code(),
            Failure::Oracle("x".into()).exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4]);
    }

    #[test]
    fn invalid_engine_input_is_a_config_error() {
        let f: Failure = cdquench::Error::InvalidInput("bad".into()).into();
        assert_eq!(f.exit_code(), 2);
        let f: Failure = cdquench::Error::NormDrift { drift: 1.0, limit: 0.1 }.into();
        assert_eq!(f.exit_code(), 3);
    }

    #[test]
    fn compositions() {
        assert_eq!(parse_composition("h1-only").unwrap(), Composition::H1Only);
        assert_eq!(parse_composition("h0_plus_h1").unwrap(), Composition::H0PlusH1);
        assert!(parse_composition("both").is_err());
    }
}
