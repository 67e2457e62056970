//! One solver on one problem, with CSV history and JSON report output.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use super::generators::ProblemSpec;
use super::metrics::{relres_full, relres_x, MetricsRecord};
use crate::error::{OpinsError, Result};
use crate::krylov::SolveStatus;
use crate::matrix::vector::{norm2, sub};
use crate::matrix::DenseMatrix;
use crate::opins::{opins_solve, GKind, OpinsOptions, Preconditioning, SaddleSystem};
use crate::oracles::{constraint_preconditioned_solve, explicit_nullspace_solve, tsvd_solve, FullSystemMethod};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 4] = ["iter", "relres_x", "relres_full", "norm_Bxn"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Opins,
    OpinsJ,
    OpinsP,
    OpinsIlu,
    NullspaceOracle,
    Tsvd,
    PminresIr(usize),
    Pcg,
    Pgmres,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Opins => f.write_str("opins"),
            SolverKind::OpinsJ => f.write_str("opins-j"),
            SolverKind::OpinsP => f.write_str("opins-p"),
            SolverKind::OpinsIlu => f.write_str("opins-ilu"),
            SolverKind::NullspaceOracle => f.write_str("nullspace-oracle"),
            SolverKind::Tsvd => f.write_str("tsvd"),
            SolverKind::PminresIr(k) => write!(f, "pminres-ir({k})"),
            SolverKind::Pcg => f.write_str("pcg"),
            SolverKind::Pgmres => f.write_str("pgmres"),
        }
    }
}

impl FromStr for SolverKind {
    type Err = OpinsError;

    /// `pminres-ir(k)` also accepts `pminres-irk` and `pminres-ir:k`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "opins" => SolverKind::Opins,
            "opins-j" => SolverKind::OpinsJ,
            "opins-p" => SolverKind::OpinsP,
            "opins-ilu" => SolverKind::OpinsIlu,
            "nullspace-oracle" => SolverKind::NullspaceOracle,
            "tsvd" => SolverKind::Tsvd,
            "pcg" => SolverKind::Pcg,
            "pgmres" => SolverKind::Pgmres,
            other => {
                let k = other
                    .strip_prefix("pminres-ir")
                    .map(|r| r.trim_start_matches([':', '(']).trim_end_matches(')'))
                    .and_then(|r| r.parse().ok())
                    .ok_or_else(|| OpinsError::InvalidOption(format!("unknown solver '{other}'")))?;
                SolverKind::PminresIr(k)
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub solver: SolverKind,
    pub tol: f64,
    pub qrcp_tol: f64,
    /// Singular values at or below this fraction of the largest are dropped.
    pub tsvd_tol: f64,
    pub maxit: usize,
    pub restart: usize,
    /// Overrides the default `G` of the preconditioned OPINS variants.
    pub g_kind: Option<GKind>,
    pub history: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Opins,
            tol: 1e-10,
            qrcp_tol: 1e-12,
            tsvd_tol: 1e-12,
            maxit: 2000,
            restart: 50,
            g_kind: None,
            history: None,
            report: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub relres_x: f64,
    pub relres_full: f64,
    #[serde(rename = "norm_Bxn")]
    pub norm_bxn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum RunStatus {
    Solver(SolveStatus),
    Error(String),
}

impl RunStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, RunStatus::Solver(SolveStatus::Converged))
    }

    pub fn label(&self) -> &str {
        match self {
            RunStatus::Solver(s) => s.as_str(),
            RunStatus::Error(_) => "error",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub problem: String,
    pub solver: SolverKind,
    pub status: RunStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rank_b: usize,
    pub metrics: MetricsRecord,
    pub history: Vec<HistoryRow>,
}

#[derive(Serialize)]
struct Report<'a> {
    schema_version: u32,
    problem: &'a str,
    solver: String,
    status: &'a str,
    converged: bool,
    error: Option<&'a str>,
    rank_b: usize,
    n: usize,
    m: usize,
    tol: f64,
    qrcp_tol: f64,
    maxit: usize,
    restart: usize,
    metrics: &'a MetricsRecord,
}

/// `G` of the constraint-preconditioned baselines: `|diag(A)|` with zeros
/// replaced by one, or the identity.
fn baseline_g(sys: &SaddleSystem, kind: Option<&GKind>) -> Result<DenseMatrix> {
    match kind {
        None | Some(GKind::Jacobi) => Ok(jacobi_dense(sys)),
        Some(GKind::Identity) => Ok(DenseMatrix::identity(sys.n())),
        Some(other) => Err(OpinsError::InvalidOption(format!(
            "constraint-preconditioned baselines take an identity or Jacobi G, not {other:?}"
        ))),
    }
}

fn jacobi_dense(sys: &SaddleSystem) -> DenseMatrix {
    let d = sys.a.diagonal();
    DenseMatrix::from_fn(sys.n(), sys.n(), |i, j| {
        if i != j {
            0.0
        } else if d[i] == 0.0 {
            1.0
        } else {
            d[i].abs()
        }
    })
}

struct Solved {
    status: SolveStatus,
    x: Vec<f64>,
    y: Vec<f64>,
    x_p: Vec<f64>,
    rank_b: usize,
    iterations: usize,
    history: Vec<HistoryRow>,
}

fn solve(sys: &SaddleSystem, declared_singular: bool, cfg: &RunConfig) -> Result<Solved> {
    let needs_symmetric = matches!(cfg.solver, SolverKind::PminresIr(_) | SolverKind::Pcg);
    if needs_symmetric && !sys.a_symmetric {
        return Err(OpinsError::InvalidOption(format!("{} needs a symmetric A", cfg.solver)));
    }
    let rank_b = sys.factor_constraints(cfg.qrcp_tol)?.rank();
    let direct = |x: Vec<f64>, y: Vec<f64>, x_p: Vec<f64>| Solved {
        status: SolveStatus::Converged,
        x,
        y,
        x_p,
        rank_b,
        iterations: 0,
        history: Vec::new(),
    };

    let opins_precond = match cfg.solver {
        SolverKind::Opins => Some(Preconditioning::None),
        SolverKind::OpinsJ => Some(Preconditioning::Simple(cfg.g_kind.clone().unwrap_or(GKind::Jacobi))),
        SolverKind::OpinsIlu => Some(Preconditioning::Simple(cfg.g_kind.clone().unwrap_or(GKind::Ilu0))),
        SolverKind::OpinsP => {
            let default = if sys.a_symmetric { GKind::Jacobi } else { GKind::Ilu0 };
            Some(Preconditioning::Projected(cfg.g_kind.clone().unwrap_or(default)))
        }
        _ => None,
    };
    if let Some(precond) = opins_precond {
        let opts = OpinsOptions {
            rank_tol: cfg.qrcp_tol,
            solve_tol: cfg.tol,
            maxit: cfg.maxit,
            restart: cfg.restart,
            precond,
            declared_singular,
            ..Default::default()
        };
        let rep = opins_solve(sys, &opts)?;
        let history = rep
            .inner
            .history
            .iter()
            .map(|r| HistoryRow {
                iter: r.iter,
                relres_x: r.true_relres,
                relres_full: r.aux("relres_full").unwrap_or(f64::NAN),
                norm_bxn: r.aux("norm_Bxn").unwrap_or(f64::NAN),
            })
            .collect();
        return Ok(Solved {
            status: rep.inner.status,
            iterations: rep.inner.iterations,
            y: rep.y.clone().unwrap_or_default(),
            x: rep.x,
            x_p: rep.x_p,
            rank_b: rep.rank_b,
            history,
        });
    }

    match cfg.solver {
        SolverKind::NullspaceOracle => {
            let (x, y) = explicit_nullspace_solve(sys, cfg.qrcp_tol)?;
            let x_p = crate::projection::Projector::new(&sys.factor_constraints(cfg.qrcp_tol)?).particular_solution(&sys.g)?;
            Ok(direct(x, y, x_p))
        }
        SolverKind::Tsvd => {
            let sol = tsvd_solve(&sys.kkt_dense(), &sys.rhs(), cfg.tsvd_tol)?;
            let (x, y) = sol.split_at(sys.n());
            // null-space split of the TSVD x for the relres_x metric
            let fact = sys.factor_constraints(cfg.qrcp_tol)?;
            let x_n = crate::projection::Projector::new(&fact).complement(x);
            Ok(direct(x.to_vec(), y.to_vec(), sub(x, &x_n)))
        }
        SolverKind::PminresIr(_) | SolverKind::Pcg | SolverKind::Pgmres => {
            let (ir, method) = match cfg.solver {
                SolverKind::PminresIr(k) => (k, FullSystemMethod::Minres),
                SolverKind::Pcg => (0, FullSystemMethod::Cg),
                _ => (0, FullSystemMethod::Gmres { restart: cfg.restart }),
            };
            let run = constraint_preconditioned_solve(
                sys,
                &baseline_g(sys, cfg.g_kind.as_ref())?,
                ir,
                method,
                cfg.tol,
                cfg.maxit,
                cfg.qrcp_tol,
            )?;
            let history = run
                .outcome
                .history
                .iter()
                .map(|r| HistoryRow {
                    iter: r.iter,
                    relres_x: r.true_relres,
                    relres_full: r.aux("relres_full").unwrap_or(f64::NAN),
                    norm_bxn: r.aux("norm_Bxn").unwrap_or(f64::NAN),
                })
                .collect();
            Ok(Solved {
                status: run.outcome.status,
                x: run.x(),
                y: run.y,
                iterations: run.outcome.iterations,
                x_p: run.x_p,
                rank_b,
                history,
            })
        }
        _ => unreachable!("OPINS variants handled above"),
    }
}

/// Run one case; solver failures become [`RunStatus::Error`], problem-loading
/// and output failures are returned as errors.
pub fn run_case(problem: &ProblemSpec, config: &RunConfig) -> Result<RunOutcome> {
    let sys = problem.load()?;
    let start = Instant::now();
    let solved = solve(&sys, problem.declared_singular, config);
    let wall_time = start.elapsed().as_secs_f64();

    let outcome = match solved {
        Ok(s) => {
            let fact = sys.factor_constraints(config.qrcp_tol)?;
            let x_n = sub(&s.x, &s.x_p);
            let full = relres_full(&sys, &s.x, &s.y)?;
            let metrics = MetricsRecord {
                relres_x: relres_x(&sys, &fact, &s.x_p, &x_n)?,
                relres_full: full.value,
                relres_full_normalized: full.normalized,
                constraint_residual: norm2(&sub(&sys.g, &sys.b.apply_vec_rect(&s.x))),
                norm_x: norm2(&s.x),
                norm_y: norm2(&s.y),
                iterations: s.iterations,
                wall_time,
            };
            let mut history = s.history;
            if history.is_empty() {
                history.push(HistoryRow {
                    iter: 0,
                    relres_x: metrics.relres_x,
                    relres_full: metrics.relres_full,
                    norm_bxn: norm2(&sys.b.apply_vec_rect(&x_n)),
                });
            }
            RunOutcome {
                problem: problem.name.clone(),
                solver: config.solver,
                status: RunStatus::Solver(s.status),
                x: s.x,
                y: s.y,
                rank_b: s.rank_b,
                metrics,
                history,
            }
        }
        Err(e) => RunOutcome {
            problem: problem.name.clone(),
            solver: config.solver,
            status: RunStatus::Error(e.to_string()),
            x: Vec::new(),
            y: Vec::new(),
            rank_b: 0,
            metrics: MetricsRecord {
                relres_x: f64::NAN,
                relres_full: f64::NAN,
                relres_full_normalized: false,
                constraint_residual: f64::NAN,
                norm_x: f64::NAN,
                norm_y: f64::NAN,
                iterations: 0,
                wall_time,
            },
            history: Vec::new(),
        },
    };

    if let Some(path) = &config.history {
        write_history(path, &outcome.history)?;
    }
    if let Some(path) = &config.report {
        let error = match &outcome.status {
            RunStatus::Error(e) => Some(e.as_str()),
            _ => None,
        };
        let report = Report {
            schema_version: SCHEMA_VERSION,
            problem: &outcome.problem,
            solver: outcome.solver.to_string(),
            status: outcome.status.label(),
            converged: outcome.status.is_converged(),
            error,
            rank_b: outcome.rank_b,
            n: sys.n(),
            m: sys.m(),
            tol: config.tol,
            qrcp_tol: config.qrcp_tol,
            maxit: config.maxit,
            restart: config.restart,
            metrics: &outcome.metrics,
        };
        let mut file = File::create(path)?;
        serde_json::to_writer_pretty(&mut file, &report).map_err(|e| OpinsError::Io(e.into()))?;
        writeln!(file)?;
    }
    Ok(outcome)
}

/// CSV with the fixed header; floats in `{:e}` form so output is
/// byte-identical across runs.
pub fn write_history(path: &std::path::Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            format!("{:e}", r.relres_x),
            format!("{:e}", r.relres_full),
            format!("{:e}", r.norm_bxn),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> OpinsError {
    OpinsError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_names_roundtrip() {
        for name in ["opins", "opins-j", "opins-p", "opins-ilu", "nullspace-oracle", "tsvd", "pcg", "pgmres", "pminres-ir(1)"] {
            assert_eq!(name.parse::<SolverKind>().unwrap().to_string(), name);
        }
        assert_eq!("pminres-ir0".parse::<SolverKind>().unwrap(), SolverKind::PminresIr(0));
        assert!("minres".parse::<SolverKind>().is_err());
    }

    #[test]
    fn trivial_case_converges_without_iterations() {
        let spec = ProblemSpec::named("trivial", 0, None, None, None).unwrap();
        let out = run_case(&spec, &RunConfig::default()).unwrap();
        assert!(out.status.is_converged());
        assert_eq!(out.metrics.iterations, 0);
        assert!(out.metrics.relres_full <= 1e-13);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn incompatible_solver_is_reported_not_raised() {
        let spec = ProblemSpec::named("random-s", 0, None, None, None).unwrap();
        let cfg = RunConfig {
            solver: SolverKind::OpinsJ,
            ..Default::default()
        };
        let out = run_case(&spec, &cfg).unwrap();
        assert!(matches!(out.status, RunStatus::Error(_)));
    }
}
