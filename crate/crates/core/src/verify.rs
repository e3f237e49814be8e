//! Seeded verification suites behind the CLI `verify` subcommand: dual
//! solver against the primal oracle, minorant sandwich for all model
//! policies, the single-cut reduction to the proximal DGD recursion, and
//! schedule invariant checking.

use crate::algorithms::{prox_dgd_step, AlgoConfig, Method, StepSizePolicy};
use crate::bundle::{BundleModel, ModelPolicy};
use crate::graph::{build_topology, metropolis_weights, Topology};
use crate::problem::{Dataset, NodeProblem, ProblemSpec, Regularizer};
use crate::sim::{
    run_simulation, schedule_partial, schedule_total, verify_schedule, AsyncSchedule, Growth,
    ScheduleViolation,
};
use crate::subproblem::{brute_force_primal, dual_objective, recover_primal, solve_dual, DualMethod};
use crate::synthetic::{covertype_like, quadratic_spec, random_subproblem, RegKind};
use crate::{Result, Vector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Subproblem,
    Minorant,
    Reduction,
    Schedule,
}

impl Suite {
    pub fn parse(name: &str) -> Option<Suite> {
        match name {
            "subproblem" => Some(Suite::Subproblem),
            "minorant" => Some(Suite::Minorant),
            "reduction" => Some(Suite::Reduction),
            "schedule" => Some(Suite::Schedule),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Subproblem => "subproblem",
            Suite::Minorant => "minorant",
            Suite::Reduction => "reduction",
            Suite::Schedule => "schedule",
        }
    }

    pub const ALL: [Suite; 4] =
        [Suite::Subproblem, Suite::Minorant, Suite::Reduction, Suite::Schedule];
}

/// Machine-readable suite outcome; `failures` holds serialized first
/// counterexamples.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: Vec<String>,
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    match suite {
        Suite::Subproblem => subproblem_suite(),
        Suite::Minorant => minorant_suite(),
        Suite::Reduction => reduction_suite(),
        Suite::Schedule => schedule_suite(),
    }
}

/// 100 random instances across piece counts, dimensions, and regularizers:
/// the dual route must agree with the independent primal oracle to 1e-6 in
/// the sup norm and close the duality gap to 1e-6.
pub fn subproblem_suite() -> Result<SuiteReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5EED_0001);
    let pieces = [2usize, 5, 15];
    let dims = [2usize, 10];
    let regs = [RegKind::Zero, RegKind::L1, RegKind::Box];
    let mut failures = Vec::new();
    let cases = 100;
    for case in 0..cases {
        let t = pieces[case % pieces.len()];
        let d = dims[(case / pieces.len()) % dims.len()];
        let reg = regs[(case / (pieces.len() * dims.len())) % regs.len()];
        let inst = random_subproblem(&mut rng, t, d, reg);
        let sol = solve_dual(&inst, 1e-11, 20_000, DualMethod::Fista, None)?;
        let x = recover_primal(&sol.v, &inst)?;
        let oracle = brute_force_primal(&inst, 1e-12)?;
        let deviation = (&x - &oracle).amax();
        let (q, _) = dual_objective(&sol.v, &inst)?;
        let gap = inst.primal_objective(&x) - q;
        if deviation > 1e-6 || gap > 1e-6 || !sol.converged {
            failures.push(format!(
                "case {case} (T={t}, d={d}, reg={reg:?}): deviation {deviation:.3e}, \
                 gap {gap:.3e}, converged {}",
                sol.converged
            ));
        }
    }
    Ok(SuiteReport {
        suite: "subproblem".into(),
        passed: failures.is_empty(),
        cases,
        failures,
    })
}

fn minorant_probe_problems(rng: &mut ChaCha20Rng) -> Result<Vec<NodeProblem>> {
    let quad = quadratic_spec(1, 3, 1.0, 0.0, Regularizer::Zero, 0x51)?.nodes.remove(0);
    let data = Dataset::new(
        (0..8).map(|_| Vector::from_fn(3, |_, _| rng.gen_range(-1.5..1.5))).collect(),
        (0..8).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect(),
    )?;
    let logi = NodeProblem::logistic(data, Regularizer::Zero, 0.0)?;
    Ok(vec![quad, logi])
}

/// Drives every model policy with true value/gradient pairs on a quadratic
/// and a logistic loss and probes the two-sided sandwich
/// `m <= f <= m + (L/2) ||x - anchor||^2` at random points (>= 10^4 probes).
pub fn minorant_suite() -> Result<SuiteReport> {
    const SLACK: f64 = 1e-10;
    let mut rng = ChaCha20Rng::seed_from_u64(0x5EED_0002);
    let problems = minorant_probe_problems(&mut rng)?;
    let policies = [
        ModelPolicy::Polyak,
        ModelPolicy::CuttingPlane { capacity: 5 },
        ModelPolicy::PolyakCuttingPlane { capacity: 5 },
        ModelPolicy::TwoCut,
    ];
    let mut failures = Vec::new();
    let mut probes = 0usize;
    for problem in &problems {
        let lips = problem.smoothness;
        let floor = problem.floor;
        for policy in policies {
            let x0 = Vector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let mut model = BundleModel::initial(
                policy,
                problem.value(&x0)?,
                problem.grad(&x0)?,
                &x0,
                floor,
            )?;
            let mut anchor = x0;
            for event in 0..=15u64 {
                if event > 0 {
                    let x = Vector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
                    model.update(problem.value(&x)?, problem.grad(&x)?, &x, event)?;
                    anchor = x;
                }
                for _ in 0..85 {
                    let p = Vector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0));
                    let m = model.value(&p)?;
                    let f = problem.value(&p)?;
                    let upper = m + 0.5 * lips * (&p - &anchor).norm_squared();
                    probes += 1;
                    if m > f + SLACK || f > upper + SLACK {
                        failures.push(format!(
                            "policy {policy:?}: m={m:.12e} f={f:.12e} upper={upper:.12e}"
                        ));
                        if failures.len() > 5 {
                            break;
                        }
                    }
                }
            }
        }
    }
    Ok(SuiteReport {
        suite: "minorant".into(),
        passed: failures.is_empty(),
        cases: probes,
        failures,
    })
}

/// The bundle step with a single-cut model and `gamma = alpha` reproduces
/// the matrix-form proximal DGD recursion on a 6-node ring quadratic.
pub fn reduction_suite() -> Result<SuiteReport> {
    let n = 6;
    let dim = 4;
    let alpha = 1.0;
    let iterations = 100;
    let spec = quadratic_spec(n, dim, 0.3, 0.0, Regularizer::L1 { weight: 0.05 }, 0x5EED_0003)?;
    let graph = build_topology(Topology::Ring, n)?;
    let weights = metropolis_weights(&graph);
    let mut rng = ChaCha20Rng::seed_from_u64(0x5EED_0004);
    let x0: Vec<Vector> =
        (0..n).map(|_| Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0))).collect();

    let mut cfg = AlgoConfig::dpbm(
        ModelPolicy::CuttingPlane { capacity: 1 },
        StepSizePolicy::Constant { gamma: alpha },
        alpha,
    );
    cfg.dual_tol = 1e-13;
    let schedule = AsyncSchedule::synchronous(&graph, iterations);
    let trace =
        run_simulation(&spec, &graph, &weights, &cfg, &schedule, iterations, &x0, 1, 1)?;

    let mut xs = x0;
    let mut max_dev = 0.0f64;
    for (_, state) in trace.snapshots.iter().skip(1) {
        xs = prox_dgd_step(&xs, &weights, alpha, &spec.nodes)?;
        for i in 0..n {
            max_dev = max_dev.max((&state[i] - &xs[i]).amax());
        }
    }
    let passed = max_dev <= 1e-8;
    Ok(SuiteReport {
        suite: "reduction".into(),
        passed,
        cases: iterations,
        failures: if passed {
            vec![]
        } else {
            vec![format!("max deviation {max_dev:.3e} exceeds 1e-8")]
        },
    })
}

/// Generated schedules verify clean; crafted window and delay violations
/// are detected and located.
pub fn schedule_suite() -> Result<SuiteReport> {
    let graph = build_topology(Topology::Ring, 5)?;
    let mut failures = Vec::new();
    let mut cases = 0;

    for seed in 0..10 {
        cases += 1;
        let s = schedule_partial(&graph, 300, 3, 5, seed);
        let report = verify_schedule(&s, &graph);
        if !report.ok() {
            failures.push(format!("valid partial schedule flagged: {:?}", report.violation));
        }
        cases += 1;
        let s = schedule_total(&graph, 300, seed, Growth::Sqrt);
        let report = verify_schedule(&s, &graph);
        if !report.ok() {
            failures.push(format!("valid total schedule flagged: {:?}", report.violation));
        }
    }

    // craft a node silent for b + 2 ticks
    cases += 1;
    let mut s = schedule_partial(&graph, 40, 2, 1, 99);
    for k in 10..=14 {
        s.deactivate(2, k);
    }
    match verify_schedule(&s, &graph).violation {
        Some(ScheduleViolation::WindowMiss { node: 2, .. }) => {}
        other => failures.push(format!("window violation missed: {other:?}")),
    }

    // craft a read d + 1 ticks stale
    cases += 1;
    let mut s = schedule_partial(&graph, 40, 0, 2, 99);
    s.force_read(3, 20, 1, 17);
    match verify_schedule(&s, &graph).violation {
        Some(ScheduleViolation::DelayExceeded { node: 3, tick: 20, .. })
        | Some(ScheduleViolation::NonMonotoneRead { node: 3, tick: 20, .. }) => {}
        other => failures.push(format!("delay violation missed: {other:?}")),
    }

    Ok(SuiteReport {
        suite: "schedule".into(),
        passed: failures.is_empty(),
        cases,
        failures,
    })
}

/// Shared fixture: the strongly convex ring problem used by the linear-rate
/// and asynchrony checks (quadratic add-on `theta = 1`, l1 regularizer).
pub fn rate_test_problem() -> Result<(ProblemSpec, crate::graph::Graph)> {
    let spec =
        quadratic_spec(6, 5, 0.8, 1.0, Regularizer::L1 { weight: 0.1 }, 0x5EED_0010)?;
    let graph = build_topology(Topology::Ring, 6)?;
    Ok((spec, graph))
}

/// Shared fixture: desk-scale covertype-shaped classification split over a
/// ring, mirroring the paper-shaped experiment layout.
pub fn classification_test_problem(
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<(ProblemSpec, crate::graph::Graph)> {
    let data = covertype_like(samples, seed)?;
    let spec = crate::synthetic::logistic_spec_from_dataset(
        &data,
        n,
        Regularizer::L1 { weight: 1e-3 },
        0.0,
        seed,
    )?;
    let graph = build_topology(Topology::Ring, n)?;
    Ok((spec, graph))
}

/// Runs a DPBM simulation and reports the final training error
/// `sum_i phi_i(mean x) - f_star`; shared by the ordering and robustness
/// experiments.
#[allow(clippy::too_many_arguments)]
pub fn final_training_error(
    spec: &ProblemSpec,
    graph: &crate::graph::Graph,
    cfg: &AlgoConfig,
    schedule: &AsyncSchedule,
    iterations: usize,
    seed: u64,
    f_star: f64,
) -> Result<f64> {
    let weights = metropolis_weights(graph);
    let x0 = vec![Vector::zeros(spec.dim); spec.n()];
    let trace = run_simulation(
        spec,
        graph,
        &weights,
        cfg,
        schedule,
        iterations,
        &x0,
        seed,
        iterations.max(1),
    )?;
    let avg = crate::metrics::average_state(trace.final_state());
    Ok(crate::metrics::global_objective(spec, &avg)? - f_star)
}

/// Largest constant step on a geometric grid for which the run stays finite
/// and does not blow up past `divergence_factor` times the initial error.
pub fn largest_stable_gamma(
    spec: &ProblemSpec,
    graph: &crate::graph::Graph,
    policy: ModelPolicy,
    alpha: f64,
    iterations: usize,
    f_star: f64,
    grid_base: f64,
    grid_len: usize,
    seed: u64,
) -> Result<Option<f64>> {
    let initial_error = {
        let x0 = Vector::zeros(spec.dim);
        crate::metrics::global_objective(spec, &x0)? - f_star
    };
    let schedule = AsyncSchedule::synchronous(graph, iterations);
    let mut best = None;
    for j in 0..grid_len {
        let gamma = grid_base * 2f64.powi(j as i32);
        let mut cfg =
            AlgoConfig::dpbm(policy, StepSizePolicy::Constant { gamma }, alpha);
        cfg.method = Method::Dpbm;
        match final_training_error(spec, graph, &cfg, &schedule, iterations, seed, f_star) {
            Ok(err) if err.is_finite() && err <= 10.0 * initial_error.max(1e-12) => {
                best = Some(gamma);
            }
            // non-finite iterates or solver failure count as divergence
            _ => break,
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for suite in Suite::ALL {
            let report = run_suite(suite).unwrap();
            assert!(
                report.passed,
                "suite {} failed: {:?}",
                report.suite, report.failures
            );
            assert!(report.cases > 0);
        }
    }

    #[test]
    fn suite_names_roundtrip() {
        for suite in Suite::ALL {
            assert_eq!(Suite::parse(suite.name()), Some(suite));
        }
        assert_eq!(Suite::parse("nope"), None);
    }
}
