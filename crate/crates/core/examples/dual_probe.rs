use dpbm::problem::Regularizer;
use dpbm::subproblem::*;
use dpbm::{Matrix, Vector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let d = 54;
    let t = 11;
    // near-duplicate columns mimic cuts at nearby iterates
    let base = Vector::from_fn(d, |_, _| rng.gen_range(-0.5..0.5));
    let g = Matrix::from_fn(d, t, |i, j| base[i] + 0.02 * (j as f64) * rng.gen_range(-1.0..1.0));
    let inst = SubproblemInstance::new(
        g,
        Vector::from_fn(t, |j, _| 0.69 - 0.01 * j as f64),
        Vector::from_fn(d, |_, _| rng.gen_range(-0.2..0.2)),
        0.15,
        Regularizer::L1 { weight: 0.001 },
    )
    .unwrap();
    for tol in [1e-8, 1e-10, 1e-12] {
        let t0 = std::time::Instant::now();
        let sol = solve_dual(&inst, tol, 200_000, DualMethod::Fista, None).unwrap();
        println!(
            "tol {:e}: iters {} converged {} elapsed {:?}",
            tol, sol.iterations, sol.converged, t0.elapsed()
        );
    }
}
