//! Command-line front end: `solve`, `sweep-alpha`, `pohozaev` and
//! `kernel-check`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! non-convergence, 3 failed oracle check.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{parse_config, Parsed, RunConfig};
use crate::diagnostics::{
    classify_nonexistence, gamma_sweep, gamma_sweep_csv, kernel_check, nonexistence_threshold, pohozaev_csv,
    pohozaev_residual,
};
use crate::error::Error;
use crate::io::write_atomic;
use crate::riesz::cached_kernel;
use crate::solution::{SolutionFile, Tolerances};
use crate::solver::{minimize_constrained, multiplier_residual, pde_residual, RieszConstraint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "choquard", version, about = "Radial ground states of Choquard equations on annuli and exterior domains")]
pub struct Cli {
    /// Configuration file (sectioned key = value).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `[solver] seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for kernel assembly and Monte Carlo.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory; falls back to `[output] dir`, then $CHOQUARD_OUT_DIR.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Per-key override, e.g. `--set problem.alpha=0.5`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize the energy and write the solution file.
    Solve,
    /// Solve along the `[sweep] alphas` ladder and compare with the local limit.
    SweepAlpha,
    /// Audit the Pohozaev identity on a Dirichlet solution file.
    Pohozaev {
        /// Solution JSON written by `solve`.
        solution: PathBuf,
    },
    /// Compare the assembled kernel against independent oracles.
    KernelCheck,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotConverged | Error::StepUnderflow { .. } | Error::SweepFailed { .. } => EXIT_NOT_CONVERGED,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn load_config(cli: &Cli, err: &mut dyn Write) -> Result<Parsed, Failure> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("solver.seed={seed}"));
    }
    let parsed = parse_config(&text, &overrides).map_err(|e| usage(e.to_string()))?;
    for w in &parsed.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    Ok(parsed)
}

fn out_dir(cli: &Cli, config: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.and_then(|c| c.output.dir.clone()))
        .or_else(|| std::env::var_os("CHOQUARD_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    write_atomic(path, text.as_bytes()).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_solve(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = load_config(cli, err)?.config;
    let problem = cfg.build_problem()?;
    let grid = cfg.build_grid()?;
    let kernel = cached_kernel(cfg.output.kernel_cache.as_deref(), grid, problem.alpha)?;
    let result = minimize_constrained(&problem, &kernel, &cfg.solver)?;
    let residual = match &result.v {
        Some(v) => pde_residual(v, &problem, &kernel)?,
        None => multiplier_residual(&problem, &RieszConstraint { kernel: &kernel, p: problem.p }, &result.u, result.mu)?,
    };
    let file = SolutionFile::new(
        &problem,
        &result,
        Tolerances {
            tol_grad: cfg.solver.tol_grad,
            tol_constraint: cfg.solver.tol_constraint,
            max_iters: cfg.solver.max_iters,
        },
    );
    let path = out_dir(cli, Some(&cfg)).join(&cfg.output.solution);
    write_file(&path, &file.to_json())?;
    let _ = writeln!(
        out,
        "J = {:?}  mu = {:?}  iterations = {}  grad_norm = {:.3e}  residual = {:.3e}  converged = {}",
        result.j, result.mu, result.iterations, result.grad_norm, residual, result.converged
    );
    if result.v.is_none() {
        let _ = writeln!(out, "p = 1: reporting -Δu + Vu = mu (I_alpha * u) sign(u) without rescaling");
    }
    let _ = writeln!(out, "wrote {}", path.display());
    if result.converged {
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(err, "error: solver did not converge within {} iterations", cfg.solver.max_iters);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_sweep(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = load_config(cli, err)?.config;
    let problem = cfg.build_problem()?;
    let grid = cfg.build_grid()?;
    let sweep = gamma_sweep(&problem, &grid, &cfg.alphas, &cfg.solver, cfg.output.kernel_cache.as_deref())?;
    let csv = gamma_sweep_csv(&sweep.rows);
    let path = out_dir(cli, Some(&cfg)).join("gamma_sweep.csv");
    write_file(&path, &csv)?;
    let _ = out.write_all(csv.as_bytes());
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_pohozaev(cli: &Cli, solution: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = match cli.config {
        Some(_) => Some(load_config(cli, err)?.config),
        None => None,
    };
    let file = SolutionFile::read(solution)?;
    let problem = file.problem()?;
    let v = file.v_field()?.ok_or(Error::NoRescaling)?;
    let report = pohozaev_residual(&v, &problem)?;
    let csv = pohozaev_csv(&report);
    let path = out_dir(cli, cfg.as_ref()).join("pohozaev.csv");
    write_file(&path, &csv)?;
    let _ = out.write_all(csv.as_bytes());
    match classify_nonexistence(&problem) {
        Ok(regime) => {
            let t = nonexistence_threshold(problem.domain.dim, problem.alpha)?;
            let _ = writeln!(out, "regime: {regime} (p = {}, (N+alpha)/(N-2) = {t})", problem.p);
            let _ = writeln!(out, "note: {}", regime.note());
        }
        Err(e) => {
            let _ = writeln!(out, "regime: undefined ({e})");
        }
    }
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_kernel_check(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = load_config(cli, err)?.config;
    let grid = cfg.build_grid()?;
    let kernel = cached_kernel(cfg.output.kernel_cache.as_deref(), grid, cfg.problem.alpha)?;
    let checks = kernel_check(&kernel, cfg.mc_samples, cfg.solver.seed)?;
    let mut ok = true;
    for c in &checks {
        ok &= c.passed;
        let _ = writeln!(
            out,
            "{:<15} {}  deviation = {:.3e}  tolerance = {:.3e}  {}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.deviation,
            c.tolerance,
            c.detail
        );
    }
    Ok(if ok { EXIT_OK } else { EXIT_ORACLE })
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            let _ = writeln!(err, "error: --jobs must be at least 1");
            return EXIT_USAGE;
        }
        // fails harmlessly if a pool already exists in this process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let result = match &cli.command {
        Command::Solve => cmd_solve(&cli, out, err),
        Command::SweepAlpha => cmd_sweep(&cli, out, err),
        Command::Pohozaev { solution } => cmd_pohozaev(&cli, solution, out, err),
        Command::KernelCheck => cmd_kernel_check(&cli, out, err),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
