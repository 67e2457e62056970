//! Experiment layer: Matrix Market input, problem generators, metrics and
//! solver-comparison runs.

pub mod metrics;
pub mod generators;
pub mod mm;
pub mod run;

pub use generators::{generate_problem, GeneratorKind, GeneratorParams, ProblemSource, ProblemSpec};
pub use metrics::{relres_full, relres_x, FullResidual, MetricsRecord};
pub use mm::{load_matrix_market, load_vector, parse_matrix_market, write_matrix_market, write_vector};
pub use run::{run_case, RunConfig, RunOutcome, RunStatus, SolverKind};
