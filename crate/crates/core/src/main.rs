//! Command-line front end: run one solver on one problem.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use opins::harness::{run_case, ProblemSource, ProblemSpec, RunConfig, SolverKind};
use opins::opins::GKind;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum YesNo {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GChoice {
    Identity,
    Jacobi,
    Ilu0,
}

#[derive(Debug, Parser)]
#[command(name = "opins", version, about = "Solve saddle-point systems with OPINS and baselines")]
struct Cli {
    /// Registered problem: trivial, random, random-s, scaled, sherman5, can_61.
    #[arg(long, conflicts_with_all = ["matrix_a", "matrix_b"])]
    problem: Option<String>,
    #[arg(long, requires = "matrix_b")]
    matrix_a: Option<PathBuf>,
    #[arg(long, requires = "matrix_a")]
    matrix_b: Option<PathBuf>,
    #[arg(long, requires = "rhs_g")]
    rhs_f: Option<PathBuf>,
    #[arg(long, requires = "rhs_f")]
    rhs_g: Option<PathBuf>,
    /// opins, opins-j, opins-p, opins-ilu, nullspace-oracle, tsvd,
    /// pminres-ir(k), pcg, pgmres.
    #[arg(long, default_value = "opins")]
    solver: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    qrcp_tol: f64,
    #[arg(long, default_value_t = 2000)]
    maxit: usize,
    #[arg(long, default_value_t = 50)]
    restart: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Declare the null-space equation singular (overrides the problem's own flag).
    #[arg(long, value_enum)]
    singular: Option<YesNo>,
    /// Scale factor for the `scaled` problem.
    #[arg(long)]
    sigma: Option<f64>,
    /// Base problem for `scaled` (default random-s).
    #[arg(long)]
    base: Option<String>,
    /// G used by the preconditioned OPINS variants.
    #[arg(long, value_enum)]
    g: Option<GChoice>,
    /// Directory holding sherman5.mtx / can_61.mtx.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Exit codes: 0 converged, 1 not converged, 2 invalid input or solver error.
fn run(cli: Cli) -> opins::Result<ExitCode> {
    let mut spec = match (&cli.problem, &cli.matrix_a, &cli.matrix_b) {
        (Some(name), _, _) => ProblemSpec::named(
            name,
            cli.seed,
            cli.sigma,
            cli.base.as_deref(),
            cli.data_dir.as_deref(),
        )?,
        (None, Some(a), Some(b)) => ProblemSpec {
            name: a.display().to_string(),
            source: ProblemSource::Files {
                a: a.clone(),
                b: b.clone(),
                f: cli.rhs_f.clone(),
                g: cli.rhs_g.clone(),
            },
            declared_singular: false,
            a_symmetric: None,
        },
        _ => {
            return Err(opins::OpinsError::InvalidOption(
                "give --problem or both --matrix-a and --matrix-b".into(),
            ))
        }
    };
    if let Some(s) = cli.singular {
        spec.declared_singular = matches!(s, YesNo::Yes);
    }
    let config = RunConfig {
        solver: cli.solver.parse::<SolverKind>()?,
        tol: cli.tol,
        qrcp_tol: cli.qrcp_tol,
        maxit: cli.maxit,
        restart: cli.restart,
        g_kind: cli.g.map(|g| match g {
            GChoice::Identity => GKind::Identity,
            GChoice::Jacobi => GKind::Jacobi,
            GChoice::Ilu0 => GKind::Ilu0,
        }),
        history: cli.history,
        report: cli.report,
        ..Default::default()
    };
    let out = run_case(&spec, &config)?;
    let m = &out.metrics;
    println!(
        "{} {} status={} iterations={} relres_x={:e} relres_full={:e} |g-Bx|={:e} |x|={:e} |y|={:e}",
        out.problem,
        out.solver,
        out.status.label(),
        m.iterations,
        m.relres_x,
        m.relres_full,
        m.constraint_residual,
        m.norm_x,
        m.norm_y,
    );
    if let opins::harness::RunStatus::Error(e) = &out.status {
        eprintln!("solver error: {e}");
        return Ok(ExitCode::from(2));
    }
    Ok(if out.status.is_converged() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
