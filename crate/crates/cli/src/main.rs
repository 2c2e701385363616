use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mgsim::dynamics::Method;
use mgsim::report::{balance_report, read_csv, table_report, write_csv, write_metadata, TABLE_NAMES};
use mgsim::scenario::{load_scenario, run, steady_state, sweep, Scenario, SimError, SteadyMethod};

/// Phasor-domain microgrid simulator.
#[derive(Parser)]
#[command(name = "mgsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file (or bundled fixture name) and write CSV.
    Run {
        /// Path to a `.scn` file, or a bundled fixture name such as `fig3_1`.
        scenario: String,
        /// Output CSV; a `.meta` sidecar is written next to it. Stdout if omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Step size (s); initial step for rk23.
        #[arg(long)]
        dt: Option<f64>,
        /// End time (s).
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        method: Option<MethodArg>,
    },
    /// Print the steady operating point of a scenario.
    Steady {
        scenario: String,
        #[arg(long, value_enum, default_value = "auto")]
        solver: SolverArg,
    },
    /// Steady state over a range of one parameter, as CSV.
    Sweep {
        scenario: String,
        /// Parameter path, e.g. `load.load.r` or `machine.sg1.m_droop`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_enum, default_value = "auto")]
        solver: SolverArg,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Regenerate a reference table and check its trends.
    Report {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(TABLE_NAMES))]
        table: String,
        scenario: String,
    },
    /// Check active and reactive power balance in a result CSV.
    Balance {
        csv: PathBuf,
        /// Ignore samples at or before this time (s).
        #[arg(long, default_value_t = 3.0)]
        after: f64,
        /// Largest acceptable relative residual.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rk4,
    Rk23,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Auto,
    Equilibrium,
    Dynamic,
}

impl From<SolverArg> for SteadyMethod {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Auto => SteadyMethod::Auto,
            SolverArg::Equilibrium => SteadyMethod::Equilibrium,
            SolverArg::Dynamic => SteadyMethod::Dynamic,
        }
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// A check ran and did not hold.
    Check(String),
    /// Bad input: unreadable file, invalid scenario, bad parameter.
    Input(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

fn scenario(arg: &str) -> Result<Scenario> {
    load_scenario(arg).map_err(|e| anyhow::anyhow!("{arg}:\n{e}"))
}

fn sim_err(e: SimError) -> anyhow::Error {
    anyhow::anyhow!("{e}")
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { scenario: arg, out, dt, t_end, method } => {
            let mut sc = scenario(&arg)?;
            if let Some(dt) = dt {
                sc.sim.integrator.dt = dt;
            }
            if let Some(t) = t_end {
                sc.sim.t_end = t;
            }
            if let Some(m) = method {
                sc.sim.integrator.method = match m {
                    MethodArg::Rk4 => Method::Rk4,
                    MethodArg::Rk23 => Method::Rk23,
                };
            }
            let ts = run(&sc).map_err(sim_err)?;
            let mut w = output(&out)?;
            write_csv(&ts, &mut w).context("writing CSV")?;
            w.flush().context("writing CSV")?;
            if let Some(p) = out {
                let meta = p.with_extension("meta");
                let f = File::create(&meta).with_context(|| format!("creating {}", meta.display()))?;
                write_metadata(&ts, BufWriter::new(f)).context("writing metadata")?;
            }
        }
        Command::Steady { scenario: arg, solver } => {
            let sc = scenario(&arg)?;
            let s = steady_state(&sc, solver.into()).map_err(sim_err)?;
            println!("solver = {}", s.method);
            for (c, v) in s.columns.iter().zip(&s.values).skip(1) {
                println!("{c} = {v:.6}");
            }
        }
        Command::Sweep { scenario: arg, param, values, solver, out } => {
            let sc = scenario(&arg)?;
            let table = sweep(&sc, &param, &values, solver.into()).map_err(sim_err)?;
            let mut w = output(&out)?;
            table.write_csv(&mut w).context("writing CSV")?;
            w.flush().context("writing CSV")?;
        }
        Command::Report { table, scenario: arg } => {
            let sc = scenario(&arg)?;
            let report = table_report(&table, &sc).map_err(|e| anyhow::anyhow!("{e}"))?;
            print!("{report}");
            if !report.passed() {
                return Err(Failure::Check(format!("{table}: trend check failed")));
            }
        }
        Command::Balance { csv, after, tol } => {
            let f = File::open(&csv).with_context(|| format!("opening {}", csv.display()))?;
            let ts = read_csv(io::BufReader::new(f)).with_context(|| format!("reading {}", csv.display()))?;
            let b = balance_report(&ts, after);
            println!("samples after t = {after} s: {}", b.rows.len());
            println!("max P residual: {:.3e}", b.max_p_residual);
            println!("max Q residual: {:.3e}", b.max_q_residual);
            if b.rows.is_empty() {
                return Err(Failure::Input(anyhow::anyhow!("no samples after t = {after} s")));
            }
            if b.max_p_residual > tol || b.max_q_residual > tol {
                return Err(Failure::Check(format!("power balance residual exceeds {tol:e}")));
            }
            println!("balance OK (tol {tol:e})");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
