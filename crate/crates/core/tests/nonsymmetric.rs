//! Nonsymmetric sparse surrogate for the Matrix Market runs: upwind
//! convection-diffusion on a 2D grid with a dense random constraint block.

use opins::opins::{opins_solve, GKind, OpinsOptions, PrecondSide, Preconditioning};
use opins::{SaddleSystem, SparseMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `-Δu + β·∇u` on an `nx×ny` grid, first-order upwind, unit spacing.
fn convection_diffusion(nx: usize, ny: usize, beta: (f64, f64)) -> SparseMatrix {
    let idx = |i: usize, j: usize| i * ny + j;
    let mut trip = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let k = idx(i, j);
            trip.push((k, k, 4.0 + beta.0 + beta.1));
            if i > 0 {
                trip.push((k, idx(i - 1, j), -1.0 - beta.0));
            }
            if i + 1 < nx {
                trip.push((k, idx(i + 1, j), -1.0));
            }
            if j > 0 {
                trip.push((k, idx(i, j - 1), -1.0 - beta.1));
            }
            if j + 1 < ny {
                trip.push((k, idx(i, j + 1), -1.0));
            }
        }
    }
    SparseMatrix::from_triplets(nx * ny, nx * ny, &trip).unwrap()
}

fn system(seed: u64) -> SaddleSystem {
    let a = convection_diffusion(58, 57, (3.0, 1.5));
    let n = a.nrows();
    let m = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trip = Vec::with_capacity(n * m);
    for i in 0..m {
        for j in 0..n {
            trip.push((i, j, StandardNormal.sample(&mut rng)));
        }
    }
    let b = SparseMatrix::from_triplets(m, n, &trip).unwrap();
    let f = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let g = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    SaddleSystem::new(a, b, f, g).unwrap()
}

#[test]
fn projected_ilu_gmres_converges_and_beats_the_alternatives() {
    let sys = system(11);
    assert!(!sys.a_symmetric);
    let solve = |precond| {
        let opts = OpinsOptions { precond, side: PrecondSide::Left, maxit: 2000, restart: 50, ..Default::default() };
        opins_solve(&sys, &opts).unwrap()
    };
    let proj = solve(Preconditioning::Projected(GKind::Ilu0));
    let simple = solve(Preconditioning::Simple(GKind::Ilu0));
    let plain = solve(Preconditioning::None);
    eprintln!(
        "opins-p {} {:e} | opins-ilu {} {:e} {:?} | opins {} {:e} {:?}",
        proj.inner.iterations,
        proj.metrics.relres_x,
        simple.inner.iterations,
        simple.metrics.relres_x,
        simple.inner.status,
        plain.inner.iterations,
        plain.metrics.relres_x,
        plain.inner.status
    );
    assert!(proj.converged());
    assert!(proj.metrics.relres_x <= 1e-10);
    assert!(proj.inner.iterations <= 500);
    assert!(proj.metrics.constraint_residual <= 1e-10 * sys.b.frobenius_norm() * opins::matrix::vector::norm2(&proj.x));
    assert!(proj.inner.iterations <= simple.inner.iterations);
    assert!(simple.inner.iterations < plain.inner.iterations || !plain.converged());
}
