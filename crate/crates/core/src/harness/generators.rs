//! Seeded test problems and the registry of named problems.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mm::{load_matrix_market, load_vector};
use crate::error::{OpinsError, Result};
use crate::matrix::{DenseMatrix, SparseMatrix};
use crate::opins::SaddleSystem;

/// Environment variable naming the directory that holds Matrix Market files.
pub const DATA_DIR_ENV: &str = "OPINS_DATA_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    /// `A = I₃`, `B = [1 0 0]`, `f = (5, 0, 0)`, `g = (2)`.
    Trivial,
    /// Symmetrized Gaussian `A` (indefinite, nonsingular), Gaussian `B`.
    Random,
    /// `A = CCᵀ` of rank `params.rank_a`, Gaussian `B`, compatible rhs.
    RandomS,
    /// `(σA, σf)` of a base system.
    Scaled { sigma: f64, base: Box<GeneratorKind> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorParams {
    pub n: usize,
    pub m: usize,
    /// Rank of `A` for [`GeneratorKind::RandomS`].
    pub rank_a: usize,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self { n: 100, m: 20, rank_a: 50 }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

fn gaussian_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| gaussian(rng)).collect()
}

/// Build `[f; g] = K·[x0; y0]` for random `x0`, `y0`.
fn consistent_rhs(a: &SparseMatrix, b: &SparseMatrix, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let x0 = gaussian_vec(a.nrows(), rng);
    let y0 = gaussian_vec(b.nrows(), rng);
    let ax = a.apply_vec_rect(&x0);
    let bty = b.transpose().apply_vec_rect(&y0);
    let f = ax.iter().zip(&bty).map(|(p, q)| p + q).collect();
    (f, b.apply_vec_rect(&x0))
}

pub fn generate_problem(kind: &GeneratorKind, seed: u64, params: GeneratorParams) -> Result<SaddleSystem> {
    let GeneratorParams { n, m, rank_a } = params;
    let invalid = |msg: &str| Err(OpinsError::InvalidOption(msg.to_string()));
    match kind {
        GeneratorKind::Trivial => SaddleSystem::new(
            SparseMatrix::identity(3),
            SparseMatrix::from_triplets(1, 3, &[(0, 0, 1.0)])?,
            vec![5.0, 0.0, 0.0],
            vec![2.0],
        ),
        GeneratorKind::Random => {
            if n == 0 || m > n {
                return invalid("random needs 0 < n and m ≤ n");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mraw = gaussian_matrix(n, n, &mut rng);
            let a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (mraw[(i, j)] + mraw[(j, i)]));
            let a = SparseMatrix::from_dense(&a);
            let b = SparseMatrix::from_dense(&gaussian_matrix(m, n, &mut rng));
            let (f, g) = consistent_rhs(&a, &b, &mut rng);
            SaddleSystem::new(a, b, f, g)
        }
        GeneratorKind::RandomS => {
            if n == 0 || m > n || rank_a > n {
                return invalid("random-s needs 0 < n, m ≤ n and rank_a ≤ n");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = gaussian_matrix(n, rank_a, &mut rng);
            let a = SparseMatrix::from_dense(&c.matmul(&c.transpose())?);
            let b = SparseMatrix::from_dense(&gaussian_matrix(m, n, &mut rng));
            let (f, g) = consistent_rhs(&a, &b, &mut rng);
            let mut sys = SaddleSystem::new(a, b, f, g)?;
            sys.a_symmetric = true;
            Ok(sys)
        }
        GeneratorKind::Scaled { sigma, base } => {
            if !(sigma.is_finite() && *sigma > 0.0) {
                return invalid("scale factor must be positive and finite");
            }
            Ok(generate_problem(base, seed, params)?.scaled(*sigma))
        }
    }
}

/// Where a problem comes from.
#[derive(Debug, Clone)]
pub enum ProblemSource {
    Files {
        a: PathBuf,
        b: PathBuf,
        f: Option<PathBuf>,
        g: Option<PathBuf>,
    },
    Generator {
        kind: GeneratorKind,
        seed: u64,
        params: GeneratorParams,
    },
    /// Matrix Market `A` with a seeded Gaussian `m × n` block `B`.
    MatrixMarketWithRandomB { a: PathBuf, m: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub source: ProblemSource,
    pub declared_singular: bool,
    /// `None` detects symmetry from `A`.
    pub a_symmetric: Option<bool>,
}

/// Names accepted by [`ProblemSpec::named`].
pub const REGISTERED: &[&str] = &["trivial", "random", "random-s", "scaled", "sherman5", "can_61"];

/// Directory used for registered Matrix Market problems.
pub fn data_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

impl ProblemSpec {
    /// Registered problem by name. `scaled` uses `sigma` over `base`
    /// (`random-s` unless given).
    pub fn named(
        name: &str,
        seed: u64,
        sigma: Option<f64>,
        base: Option<&str>,
        data: Option<&Path>,
    ) -> Result<Self> {
        let generator = |kind: GeneratorKind, singular: bool| ProblemSpec {
            name: name.to_string(),
            source: ProblemSource::Generator {
                kind,
                seed,
                params: GeneratorParams::default(),
            },
            declared_singular: singular,
            a_symmetric: None,
        };
        let mm = |file: &str| ProblemSpec {
            name: name.to_string(),
            source: ProblemSource::MatrixMarketWithRandomB {
                a: data_dir(data).join(file),
                m: 20,
                seed,
            },
            declared_singular: false,
            a_symmetric: None,
        };
        Ok(match name {
            "trivial" => generator(GeneratorKind::Trivial, false),
            "random" => generator(GeneratorKind::Random, false),
            "random-s" => generator(GeneratorKind::RandomS, true),
            "scaled" => {
                let base_name = base.unwrap_or("random-s");
                let inner = ProblemSpec::named(base_name, seed, None, None, data)?;
                let ProblemSource::Generator { kind, .. } = inner.source else {
                    return Err(OpinsError::InvalidOption(format!("cannot scale '{base_name}'")));
                };
                let sigma = sigma.ok_or_else(|| OpinsError::InvalidOption("scaled needs a sigma".into()))?;
                generator(
                    GeneratorKind::Scaled {
                        sigma,
                        base: Box::new(kind),
                    },
                    inner.declared_singular,
                )
            }
            "sherman5" => mm("sherman5.mtx"),
            "can_61" => mm("can_61.mtx"),
            other => {
                return Err(OpinsError::InvalidOption(format!(
                    "unknown problem '{other}'; registered: {}",
                    REGISTERED.join(", ")
                )))
            }
        })
    }

    pub fn load(&self) -> Result<SaddleSystem> {
        let mut sys = match &self.source {
            ProblemSource::Generator { kind, seed, params } => generate_problem(kind, *seed, *params)?,
            ProblemSource::Files { a, b, f, g } => {
                let a = load_matrix_market(a)?;
                let b = load_matrix_market(b)?;
                let (f, g) = match (f, g) {
                    (Some(f), Some(g)) => (load_vector(f)?, load_vector(g)?),
                    (None, None) => consistent_rhs(&a, &b, &mut ChaCha8Rng::seed_from_u64(0)),
                    _ => {
                        return Err(OpinsError::InvalidOption(
                            "give both rhs vectors or neither".into(),
                        ))
                    }
                };
                SaddleSystem::new(a, b, f, g)?
            }
            ProblemSource::MatrixMarketWithRandomB { a, m, seed } => {
                let a = load_matrix_market(a)?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let b = SparseMatrix::from_dense(&gaussian_matrix(*m, a.ncols(), &mut rng));
                let (f, g) = consistent_rhs(&a, &b, &mut rng);
                SaddleSystem::new(a, b, f, g)?
            }
        };
        if let Some(sym) = self.a_symmetric {
            sys.a_symmetric = sym;
        }
        Ok(sys)
    }
}
