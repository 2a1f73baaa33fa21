//! `cdquench`: figure data, sweeps, scaling fits and exact-oracle checks for
//! counterdiabatic Ising quenches.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cdquench::coefficients::{CoeffMode, Filter};
use cdquench::quench::Composition;

use commands::{Failure, FitAgainst, RunFlags, SweepKind};
use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "cdquench", version, about)]
struct Cli {
    /// TOML experiment file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Chain length N (even). Default 400, or 1600 with --paper-scale.
    #[arg(long)]
    n_sites: Option<usize>,
    /// Use N = 1600 unless --n-sites is given.
    #[arg(long)]
    paper_scale: bool,
    /// Integration tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads for the mode integrations [default: available parallelism].
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory [default: $CDQUENCH_OUT_DIR or .].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Initial transverse field.
    #[arg(long = "gi")]
    g_i: Option<f64>,
    /// Final transverse field.
    #[arg(long = "gf")]
    g_f: Option<f64>,
    /// Source of the coefficients h_m: exact | analytic.
    #[arg(long)]
    coeff_mode: Option<CoeffMode>,
}

impl RunArgs {
    fn flags(self) -> RunFlags {
        RunFlags {
            n_sites: self.n_sites,
            paper_scale: self.paper_scale,
            tol: self.tol,
            workers: self.workers,
            out: self.out,
            g_i: self.g_i,
            g_f: self.g_f,
            coeff_mode: self.coeff_mode,
        }
    }
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Comma-separated quench rates.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// Comma-separated range cutoffs M (0 = bare quench).
    #[arg(long, value_delimiter = ',')]
    cutoffs: Option<Vec<usize>>,
    /// dirichlet | raised-cosine
    #[arg(long)]
    filter: Option<Filter>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Against {
    Rate,
    Cutoff,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Excitation spectra p_k for several cutoffs, one CSV per filter.
    Fig1 {
        #[command(flatten)]
        run: RunArgs,
        /// Quench rate.
        #[arg(long)]
        rate: Option<f64>,
        /// Comma-separated range cutoffs M.
        #[arg(long, value_delimiter = ',')]
        cutoffs: Option<Vec<usize>>,
        /// h0_only | h1_only | h0_plus_h1
        #[arg(long, value_parser = commands::parse_composition)]
        composition: Option<Composition>,
    },
    /// Defect density against quench rate for M = 0, 1, 2, …, 64.
    Fig2 {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Defect density over an arbitrary rate × cutoff grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Power-law fit of n_ex from a fig2 or sweep CSV.
    FitScaling {
        /// CSV with rate, M and n_ex columns.
        input: PathBuf,
        /// Independent variable.
        #[arg(long, value_enum, default_value = "rate")]
        against: Against,
        /// Rows with this M when fitting against the rate.
        #[arg(long)]
        cutoff: Option<usize>,
        /// Rows with this rate when fitting against M.
        #[arg(long)]
        rate: Option<f64>,
        /// Inclusive fit window LO,HI on the independent variable.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        window: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-level sweep: ground-state fidelity with and without the assisting term.
    LzDemo {
        /// Gap parameter Δ.
        #[arg(long)]
        delta: Option<f64>,
        /// Sweep rate of λ.
        #[arg(long)]
        rate: Option<f64>,
        /// λ runs from −SPAN to SPAN.
        #[arg(long)]
        span: Option<f64>,
        /// Number of samples.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact spin-chain checks of the momentum-space reduction.
    OracleCheck {
        /// Chain lengths; none is a no-op.
        sizes: Vec<usize>,
        #[arg(long)]
        tol: Option<f64>,
        /// Largest acceptable deviation.
        #[arg(long, default_value_t = 1e-8)]
        threshold: f64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fig1 { .. } => "fig1",
            Command::Fig2 { .. } => "fig2",
            Command::Sweep { .. } => "sweep",
            Command::FitScaling { .. } => "fit-scaling",
            Command::LzDemo { .. } => "lz-demo",
            Command::OracleCheck { .. } => "oracle-check",
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = FileConfig::load(cli.config.as_deref()).map_err(Failure::Config)?;
    if let Some(id) = &file.experiment {
        if id != cli.command.name() {
            return Err(Failure::Config(anyhow::anyhow!(
                "config file is for `{id}`, not `{}`",
                cli.command.name()
            )));
        }
    }
    match cli.command {
        Command::Fig1 {
            run,
            rate,
            cutoffs,
            composition,
        } => commands::fig1(&run.flags(), rate, cutoffs, composition, &file),
        Command::Fig2 { run, grid } => commands::rate_sweep(
            SweepKind::Fig2,
            &run.flags(),
            grid.rates,
            grid.cutoffs,
            grid.filter,
            &file,
        ),
        Command::Sweep { run, grid } => commands::rate_sweep(
            SweepKind::Sweep,
            &run.flags(),
            grid.rates,
            grid.cutoffs,
            grid.filter,
            &file,
        ),
        Command::FitScaling {
            input,
            against,
            cutoff,
            rate,
            window,
            out,
        } => {
            let against = match against {
                Against::Rate => FitAgainst::Rate,
                Against::Cutoff => FitAgainst::Cutoff,
            };
            commands::fit_scaling(&input, against, cutoff, rate, window, out, &file)
        }
        Command::LzDemo {
            delta,
            rate,
            span,
            points,
            tol,
            out,
        } => commands::lz_demo(delta, rate, span, points, tol, out, &file),
        Command::OracleCheck {
            sizes,
            tol,
            threshold,
            workers,
            out,
        } => commands::oracle_check(&sizes, tol, threshold, workers, out, &file),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
