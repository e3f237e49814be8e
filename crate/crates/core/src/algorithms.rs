//! Node-level update rules: the bundle step (fixed, constant, or
//! back-tracked step-size), its stochastic batch-evaluated variant, and the
//! proximal decentralized gradient baseline.

use crate::bundle::{BundleModel, ModelPolicy};
use crate::graph::AveragingMatrix;
use crate::problem::{prox_h, sample_batch, Batch, NodeProblem};
use crate::subproblem::{
    assemble_subproblem, recover_primal, solve_dual, DualMethod, SubproblemInstance,
};
use crate::{Error, Result, Vector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Step-size policy. Fixed mode derives the step from the smoothness
/// constant; the back-tracking mode probes it at run time; constant mode
/// takes a raw step (used for robustness sweeps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSizePolicy {
    Fixed { eta: f64 },
    Backtracking { eta: f64, c: f64, gamma_init: f64 },
    Constant { gamma: f64 },
}

impl StepSizePolicy {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        match *self {
            StepSizePolicy::Fixed { eta } => {
                if !in_unit(eta) {
                    return Err(Error::InvalidStepConfig(format!("eta {eta} outside (0, 1)")));
                }
            }
            StepSizePolicy::Backtracking { eta, c, gamma_init } => {
                if !in_unit(eta) {
                    return Err(Error::InvalidStepConfig(format!("eta {eta} outside (0, 1)")));
                }
                if !in_unit(c) {
                    return Err(Error::InvalidStepConfig(format!("c {c} outside (0, 1)")));
                }
                if gamma_init <= 0.0 || !gamma_init.is_finite() {
                    return Err(Error::InvalidStepConfig(format!(
                        "gamma_init {gamma_init} must be positive"
                    )));
                }
            }
            StepSizePolicy::Constant { gamma } => {
                if gamma <= 0.0 || !gamma.is_finite() {
                    return Err(Error::InvalidStepConfig(format!(
                        "gamma {gamma} must be positive"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which update rule runs at each activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dpbm,
    ProxDgd,
}

/// Everything a node update needs beyond its own state.
#[derive(Debug, Clone)]
pub struct AlgoConfig {
    pub method: Method,
    pub policy: ModelPolicy,
    pub step: StepSizePolicy,
    pub alpha: f64,
    /// 0 disables batching (deterministic evaluation).
    pub batch_size: usize,
    pub dual_tol: f64,
    pub dual_max_iter: usize,
    pub dual_method: DualMethod,
    pub warm_start_dual: bool,
}

impl AlgoConfig {
    pub fn dpbm(policy: ModelPolicy, step: StepSizePolicy, alpha: f64) -> Self {
        AlgoConfig {
            method: Method::Dpbm,
            policy,
            step,
            alpha,
            batch_size: 0,
            dual_tol: 1e-12,
            dual_max_iter: 5000,
            dual_method: DualMethod::Fista,
            warm_start_dual: true,
        }
    }

    pub fn prox_dgd(alpha: f64) -> Self {
        AlgoConfig {
            method: Method::ProxDgd,
            policy: ModelPolicy::CuttingPlane { capacity: 1 },
            step: StepSizePolicy::Constant { gamma: alpha },
            alpha,
            batch_size: 0,
            dual_tol: 1e-12,
            dual_max_iter: 5000,
            dual_method: DualMethod::Fista,
            warm_start_dual: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || !self.alpha.is_finite() {
            return Err(Error::InvalidStepConfig(format!(
                "alpha {} must be positive",
                self.alpha
            )));
        }
        self.step.validate()
    }

    pub fn stochastic(&self) -> bool {
        self.batch_size > 0
    }
}

/// Fixed step `gamma = eta / (beta + (1 - w_ii) / alpha)`, strictly inside
/// the convergent interval for any `eta` in `(0, 1)`.
pub fn fixed_step(beta: f64, w_ii: f64, alpha: f64, eta: f64) -> Result<f64> {
    if w_ii <= 0.0 || w_ii > 1.0 {
        return Err(Error::InvalidStepConfig(format!("w_ii {w_ii} outside (0, 1]")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidStepConfig(format!("eta {eta} outside (0, 1)")));
    }
    if beta < 0.0 || alpha <= 0.0 {
        return Err(Error::InvalidStepConfig(format!("beta {beta}, alpha {alpha}")));
    }
    let denom = beta + (1.0 - w_ii) / alpha;
    if denom <= 0.0 {
        return Err(Error::InvalidStepConfig(
            "flat objective with no consensus penalty: step unbounded".into(),
        ));
    }
    Ok(eta / denom)
}

/// Smoothness constant used in the step rule: the batch-evaluated model
/// satisfies the sandwich bound with twice the per-sample constant.
pub fn effective_smoothness(l: f64, stochastic: bool) -> f64 {
    if stochastic {
        2.0 * l
    } else {
        l
    }
}

/// Curvature estimate `beta^k` solving
/// `f(x_new) = m(x_new) + beta^k ||x_new - x_old||^2 / 2`.
/// A degenerate step returns 0 (any value satisfies the relation); a model
/// above the function value is an error except in stochastic mode, where it
/// clamps to 0.
pub fn compute_beta_k(
    f_new: f64,
    m_new: f64,
    dx_sqnorm: f64,
    clamp_violation: bool,
) -> Result<f64> {
    if dx_sqnorm <= 1e-16 {
        return Ok(0.0);
    }
    let gap = f_new - m_new;
    if gap < -1e-12 * (1.0 + f_new.abs()) {
        if clamp_violation {
            return Ok(0.0);
        }
        return Err(Error::MinorantViolation { model: m_new, value: f_new });
    }
    Ok(2.0 * gap.max(0.0) / dx_sqnorm)
}

/// A neighbor iterate copy and the version tag it was produced at.
#[derive(Debug, Clone)]
pub struct NeighborCopy {
    pub x: Vector,
    pub version: u64,
}

/// One node's complete local state.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: usize,
    pub x: Vector,
    pub neighbor_ids: Vec<usize>,
    pub copies: Vec<NeighborCopy>,
    pub model: BundleModel,
    pub problem: NodeProblem,
    /// Back-tracking carry, meaningful only under that policy.
    pub gamma_carry: f64,
    /// Own update events so far; also used as cut origin tags.
    pub update_count: u64,
    rng: ChaCha20Rng,
    dual_warm: Option<Vector>,
}

/// Per-update log entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub gamma_used: f64,
    pub attempts: u32,
    pub dual_iterations: usize,
    pub beta_k: f64,
}

impl NodeState {
    /// Builds the node with its initial model anchored at `x0`. In
    /// stochastic mode the initial cut is already batch-evaluated.
    pub fn new(
        id: usize,
        x0: Vector,
        neighbor_ids: Vec<usize>,
        problem: NodeProblem,
        cfg: &AlgoConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut rng =
            ChaCha20Rng::seed_from_u64(seed ^ (id as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let batch = draw_batch(&problem, cfg.batch_size, &mut rng)?;
        let value = problem.value_on(&x0, batch.as_ref())?;
        let grad = problem.grad_on(&x0, batch.as_ref())?;
        let model = BundleModel::initial(cfg.policy, value, grad, &x0, problem.floor)?;
        let gamma_carry = match cfg.step {
            StepSizePolicy::Backtracking { gamma_init, .. } => gamma_init,
            _ => 0.0,
        };
        let copies = neighbor_ids
            .iter()
            .map(|_| NeighborCopy { x: x0.clone(), version: 0 })
            .collect();
        Ok(NodeState {
            id,
            x: x0,
            neighbor_ids,
            copies,
            model,
            problem,
            gamma_carry,
            update_count: 0,
            rng,
            dual_warm: None,
        })
    }

    /// Latest-wins write of a neighbor copy; stale versions are dropped so
    /// read tags never decrease.
    pub fn set_copy(&mut self, position: usize, x: Vector, version: u64) {
        let copy = &mut self.copies[position];
        if version >= copy.version {
            copy.x = x;
            copy.version = version;
        }
    }

    /// `sum_j w_ij (x_i - x_ij)` over the stored neighbor copies.
    pub fn weighted_disagreement(&self, neighbor_weights: &[f64]) -> Vector {
        let mut acc = Vector::zeros(self.x.len());
        for (w, copy) in neighbor_weights.iter().zip(&self.copies) {
            acc += *w * (&self.x - &copy.x);
        }
        acc
    }

    fn draw_event_batch(&mut self, cfg: &AlgoConfig) -> Result<Option<Batch>> {
        draw_batch(&self.problem, cfg.batch_size, &mut self.rng)
    }

    fn solve_step(
        &mut self,
        gamma: f64,
        neighbor_weights: &[f64],
        cfg: &AlgoConfig,
    ) -> Result<(Vector, SubproblemInstance, usize)> {
        let disagreement = self.weighted_disagreement(neighbor_weights);
        let inst = assemble_subproblem(
            &self.model,
            &self.x,
            &disagreement,
            gamma,
            cfg.alpha,
            &self.problem.reg,
        )?;
        let warm = if cfg.warm_start_dual { self.dual_warm.as_ref() } else { None };
        let sol = solve_dual(&inst, cfg.dual_tol, cfg.dual_max_iter, cfg.dual_method, warm)?;
        let x_new = recover_primal(&sol.v, &inst)?;
        self.dual_warm = Some(sol.v);
        Ok((x_new, inst, sol.iterations))
    }

    /// One bundle update at the node: solve the subproblem at the policy's
    /// step, then refresh the model with the value/gradient observed at the
    /// new iterate.
    pub fn dpbm_update(
        &mut self,
        w_ii: f64,
        neighbor_weights: &[f64],
        cfg: &AlgoConfig,
    ) -> Result<UpdateOutcome> {
        let batch = self.draw_event_batch(cfg)?;
        match cfg.step {
            StepSizePolicy::Fixed { eta } => {
                let beta = effective_smoothness(self.problem.smoothness, cfg.stochastic());
                let gamma = fixed_step(beta, w_ii, cfg.alpha, eta)?;
                self.plain_step(gamma, neighbor_weights, cfg, batch.as_ref())
            }
            StepSizePolicy::Constant { gamma } => {
                self.plain_step(gamma, neighbor_weights, cfg, batch.as_ref())
            }
            StepSizePolicy::Backtracking { eta, c, .. } => {
                self.backtracking_step(eta, c, w_ii, neighbor_weights, cfg, batch.as_ref())
            }
        }
    }

    fn plain_step(
        &mut self,
        gamma: f64,
        neighbor_weights: &[f64],
        cfg: &AlgoConfig,
        batch: Option<&Batch>,
    ) -> Result<UpdateOutcome> {
        let (x_new, _, dual_iterations) = self.solve_step(gamma, neighbor_weights, cfg)?;
        let f_new = self.problem.value_on(&x_new, batch)?;
        if !cfg.stochastic() {
            let m_new = self.model.value(&x_new)?;
            if m_new > f_new + 1e-9 * (1.0 + f_new.abs()) {
                return Err(Error::MinorantViolation { model: m_new, value: f_new });
            }
        }
        let g_new = self.problem.grad_on(&x_new, batch)?;
        self.finish_update(x_new, f_new, g_new)?;
        Ok(UpdateOutcome { gamma_used: gamma, attempts: 1, dual_iterations, beta_k: 0.0 })
    }

    /// Try the carried step, measure the realized curvature, shrink until
    /// the acceptance inequality holds. The carry is refreshed from the last
    /// measured curvature whether or not the attempt was accepted.
    fn backtracking_step(
        &mut self,
        eta: f64,
        c: f64,
        w_ii: f64,
        neighbor_weights: &[f64],
        cfg: &AlgoConfig,
        batch: Option<&Batch>,
    ) -> Result<UpdateOutcome> {
        const ATTEMPT_CAP: usize = 1000;
        let penalty_term = (1.0 - w_ii) / cfg.alpha;
        let mut attempts = 0u32;
        let mut total_dual_iterations = 0usize;
        loop {
            attempts += 1;
            if attempts as usize > ATTEMPT_CAP {
                return Err(Error::BacktrackingCap { node: self.id, cap: ATTEMPT_CAP });
            }
            let gamma = self.gamma_carry;
            let (x_new, _, dual_iterations) = self.solve_step(gamma, neighbor_weights, cfg)?;
            total_dual_iterations += dual_iterations;
            let f_new = self.problem.value_on(&x_new, batch)?;
            let m_new = self.model.value(&x_new)?;
            let dx_sq = (&x_new - &self.x).norm_squared();
            let beta_k = compute_beta_k(f_new, m_new, dx_sq, cfg.stochastic())?;
            self.gamma_carry = c * eta / (beta_k + penalty_term);
            if gamma <= eta / (beta_k + penalty_term) {
                let g_new = self.problem.grad_on(&x_new, batch)?;
                self.finish_update(x_new, f_new, g_new)?;
                return Ok(UpdateOutcome {
                    gamma_used: gamma,
                    attempts,
                    dual_iterations: total_dual_iterations,
                    beta_k,
                });
            }
        }
    }

    /// Proximal decentralized gradient step using the stored copies:
    /// `x <- prox_{alpha h}(w_ii x + sum_j w_ij x_ij - alpha grad f(x))`.
    pub fn prox_dgd_update(
        &mut self,
        w_ii: f64,
        neighbor_weights: &[f64],
        cfg: &AlgoConfig,
    ) -> Result<UpdateOutcome> {
        let batch = self.draw_event_batch(cfg)?;
        let grad = self.problem.grad_on(&self.x, batch.as_ref())?;
        let mut mixed = w_ii * &self.x;
        for (w, copy) in neighbor_weights.iter().zip(&self.copies) {
            mixed += *w * &copy.x;
        }
        let x_new = prox_h(&(mixed - cfg.alpha * grad), cfg.alpha, &self.problem.reg)?;
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prox-dgd iterate".into()));
        }
        self.x = x_new;
        self.update_count += 1;
        Ok(UpdateOutcome {
            gamma_used: cfg.alpha,
            attempts: 1,
            dual_iterations: 0,
            beta_k: 0.0,
        })
    }

    /// Dispatches on the configured method.
    pub fn update(
        &mut self,
        w_ii: f64,
        neighbor_weights: &[f64],
        cfg: &AlgoConfig,
    ) -> Result<UpdateOutcome> {
        match cfg.method {
            Method::Dpbm => self.dpbm_update(w_ii, neighbor_weights, cfg),
            Method::ProxDgd => self.prox_dgd_update(w_ii, neighbor_weights, cfg),
        }
    }

    fn finish_update(&mut self, x_new: Vector, f_new: f64, g_new: Vector) -> Result<()> {
        self.update_count += 1;
        self.model.update(f_new, g_new, &x_new, self.update_count)?;
        self.x = x_new;
        Ok(())
    }
}

fn draw_batch(
    problem: &NodeProblem,
    batch_size: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Option<Batch>> {
    if batch_size == 0 {
        return Ok(None);
    }
    let shard = problem.shard().ok_or_else(|| {
        Error::InvalidBatch("batch evaluation requires a data-driven loss".into())
    })?;
    Ok(Some(sample_batch(shard, batch_size.min(shard.len()), rng)?))
}

/// Synchronous matrix-form baseline:
/// `x_i <- prox_{alpha h_i}(sum_j w_ij x_j - alpha grad f_i(x_i))`.
pub fn prox_dgd_step(
    xs: &[Vector],
    w: &AveragingMatrix,
    alpha: f64,
    problems: &[NodeProblem],
) -> Result<Vec<Vector>> {
    let n = xs.len();
    if w.n() != n || problems.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w.n() });
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut mixed = Vector::zeros(xs[i].len());
        for (j, x) in xs.iter().enumerate() {
            let wij = w.entry(i, j);
            if wij != 0.0 {
                mixed += wij * x;
            }
        }
        let grad = problems[i].grad(&xs[i])?;
        out.push(prox_h(&(mixed - alpha * grad), alpha, &problems[i].reg)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_topology, metropolis_weights, Topology};
    use crate::problem::Regularizer;
    use crate::Matrix;
    use approx::assert_abs_diff_eq;

    fn quad_node(dim: usize, scale: f64, reg: Regularizer) -> NodeProblem {
        let q = Matrix::from_diagonal(&Vector::from_element(dim, scale));
        let c = Vector::from_fn(dim, |i, _| (i as f64 + 1.0) * 0.5);
        NodeProblem::quadratic(q, c, reg, 0.0).unwrap()
    }

    #[test]
    fn fixed_step_hand_values() {
        assert_abs_diff_eq!(fixed_step(1.0, 1.0, 7.3, 0.5).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            fixed_step(0.0, 1.0 / 3.0, 2.0, 0.9).unwrap(),
            2.7,
            epsilon = 1e-12
        );
    }

    #[test]
    fn fixed_step_stays_inside_open_interval() {
        let beta = 2.0;
        let w_ii = 0.4;
        let alpha = 5.0;
        let bound = 1.0 / (beta + (1.0 - w_ii) / alpha);
        for eta in [0.5, 0.9, 0.999, 0.999999] {
            let g = fixed_step(beta, w_ii, alpha, eta).unwrap();
            assert!(g < bound);
            assert_abs_diff_eq!(g, eta * bound, epsilon = 1e-15);
        }
    }

    #[test]
    fn fixed_step_rejects_bad_inputs() {
        assert!(fixed_step(1.0, 0.0, 1.0, 0.5).is_err());
        assert!(fixed_step(1.0, -0.1, 1.0, 0.5).is_err());
        assert!(fixed_step(1.0, 0.5, 1.0, 1.0).is_err());
        assert!(fixed_step(0.0, 1.0, 1.0, 0.5).is_err()); // unbounded step
    }

    #[test]
    fn fixed_step_keeps_hat_weights_positive() {
        // gamma < alpha / (1 - w_ii) regardless of beta
        for beta in [0.0, 0.5, 10.0] {
            for w_ii in [0.1, 0.5, 0.9] {
                for alpha in [0.5, 20.0] {
                    let g = fixed_step(beta, w_ii, alpha, 0.999).unwrap();
                    assert!(g < alpha / (1.0 - w_ii));
                }
            }
        }
    }

    #[test]
    fn beta_k_hand_values() {
        assert_eq!(compute_beta_k(1.0, 1.0, 4.0, false).unwrap(), 0.0);
        // f = x^2, tangent at 1 probed at 0: f=0, m=-1, dx^2=1
        assert_abs_diff_eq!(compute_beta_k(0.0, -1.0, 1.0, false).unwrap(), 2.0);
        assert_eq!(compute_beta_k(5.0, -1.0, 0.0, false).unwrap(), 0.0);
    }

    #[test]
    fn beta_k_violation_handling() {
        assert!(matches!(
            compute_beta_k(0.0, 1.0, 1.0, false),
            Err(Error::MinorantViolation { .. })
        ));
        assert_eq!(compute_beta_k(0.0, 1.0, 1.0, true).unwrap(), 0.0);
    }

    fn single_node_state(policy: ModelPolicy, step: StepSizePolicy) -> (NodeState, AlgoConfig) {
        // isolated node: w_ii = 1, no neighbors
        let problem = quad_node(1, 2.0, Regularizer::Zero);
        let mut cfg = AlgoConfig::dpbm(policy, step, 1.0);
        cfg.dual_tol = 1e-13;
        let x0 = Vector::from_vec(vec![1.0]);
        let node = NodeState::new(0, x0, vec![], problem, &cfg, 7).unwrap();
        (node, cfg)
    }

    #[test]
    fn single_node_reduces_to_centralized_bundle_step() {
        // quad_node(1, 2.0): f(x) = x^2 - 0.5 x, grad = 2x - 0.5
        // single cut at x0 = 1: slope 1.5; x1 = x0 - gamma * slope
        let (mut node, cfg) = single_node_state(
            ModelPolicy::CuttingPlane { capacity: 3 },
            StepSizePolicy::Constant { gamma: 0.25 },
        );
        node.dpbm_update(1.0, &[], &cfg).unwrap();
        assert_abs_diff_eq!(node.x[0], 1.0 - 0.25 * 1.5, epsilon = 1e-9);
    }

    #[test]
    fn backtracking_exact_quadratic_accepts_fast() {
        // beta_k of a quadratic is exact, so a huge carry is corrected once
        let (mut node, cfg) = single_node_state(
            ModelPolicy::CuttingPlane { capacity: 3 },
            StepSizePolicy::Backtracking { eta: 0.9, c: 0.5, gamma_init: 1000.0 },
        );
        let out = node.dpbm_update(1.0, &[], &cfg).unwrap();
        assert_eq!(out.attempts, 2);
        // acceptance predicate held at the used step
        assert!(out.gamma_used * out.beta_k <= 0.9 + 1e-12);

        // small carry accepts immediately
        let (mut node, cfg) = single_node_state(
            ModelPolicy::CuttingPlane { capacity: 3 },
            StepSizePolicy::Backtracking { eta: 0.9, c: 0.5, gamma_init: 1e-3 },
        );
        let out = node.dpbm_update(1.0, &[], &cfg).unwrap();
        assert_eq!(out.attempts, 1);
    }

    #[test]
    fn backtracking_attempts_bounded_by_log_formula() {
        let g = build_topology(Topology::Ring, 3).unwrap();
        let w = metropolis_weights(&g);
        let eta = 0.9;
        let c = 0.5;
        let gamma_init = 500.0;
        let alpha = 2.0;
        let data = crate::problem::Dataset::new(
            vec![
                Vector::from_vec(vec![1.0, 0.3]),
                Vector::from_vec(vec![-0.4, 0.8]),
                Vector::from_vec(vec![0.2, -1.0]),
            ],
            vec![1.0, -1.0, 1.0],
        )
        .unwrap();
        let problem =
            NodeProblem::logistic(data, Regularizer::L1 { weight: 0.01 }, 0.0).unwrap();
        let beta = problem.smoothness;
        let cfg = AlgoConfig::dpbm(
            ModelPolicy::CuttingPlane { capacity: 4 },
            StepSizePolicy::Backtracking { eta, c, gamma_init },
            alpha,
        );
        let mut node = NodeState::new(
            0,
            Vector::from_vec(vec![2.0, -1.0]),
            vec![1, 2],
            problem,
            &cfg,
            3,
        )
        .unwrap();
        let w_ii = w.diagonal(0);
        let weights = w.neighbor_weights(&g, 0);
        let denom = beta + (1.0 - w_ii) / alpha;
        let bound = ((gamma_init * denom / eta).ln() / (1.0 / c).ln()).ceil() as u32 + 1;
        for _ in 0..5 {
            let out = node.dpbm_update(w_ii, &weights, &cfg).unwrap();
            assert!(out.attempts <= bound, "attempts {} > bound {bound}", out.attempts);
            assert!(out.gamma_used * (out.beta_k + (1.0 - w_ii) / alpha) <= eta + 1e-12);
            // carry never falls below the scheme's lower bound
            assert!(node.gamma_carry >= (c * eta / denom).min(gamma_init) - 1e-12);
        }
    }

    #[test]
    fn zero_objective_update_is_pure_consensus() {
        // f = 0, h = 0: update must equal x - (gamma/alpha) sum w_ij (x - x_j)
        let q = Matrix::zeros(2, 2);
        let c = Vector::zeros(2);
        let problem = NodeProblem::quadratic(q, c, Regularizer::Zero, 0.0).unwrap();
        let gamma = 0.3;
        let alpha = 1.5;
        let cfg = AlgoConfig::dpbm(
            ModelPolicy::CuttingPlane { capacity: 1 },
            StepSizePolicy::Constant { gamma },
            alpha,
        );
        let x0 = Vector::from_vec(vec![1.0, -1.0]);
        let mut node = NodeState::new(0, x0.clone(), vec![1, 2], problem, &cfg, 5).unwrap();
        node.set_copy(0, Vector::from_vec(vec![0.0, 0.0]), 1);
        node.set_copy(1, Vector::from_vec(vec![2.0, 2.0]), 1);
        let weights = [0.25, 0.25];
        let expected = {
            let disagreement = 0.25 * (&x0 - Vector::from_vec(vec![0.0, 0.0]))
                + 0.25 * (&x0 - Vector::from_vec(vec![2.0, 2.0]));
            &x0 - (gamma / alpha) * disagreement
        };
        node.dpbm_update(0.5, &weights, &cfg).unwrap();
        assert!((node.x - expected).norm() < 1e-10);
    }

    #[test]
    fn prox_dgd_step_pure_averaging_when_flat() {
        let g = build_topology(Topology::Ring, 4).unwrap();
        let w = metropolis_weights(&g);
        let problems: Vec<NodeProblem> = (0..4)
            .map(|_| {
                NodeProblem::quadratic(
                    Matrix::zeros(2, 2),
                    Vector::zeros(2),
                    Regularizer::Zero,
                    0.0,
                )
                .unwrap()
            })
            .collect();
        let xs: Vec<Vector> =
            (0..4).map(|i| Vector::from_element(2, i as f64)).collect();
        let next = prox_dgd_step(&xs, &w, 0.7, &problems).unwrap();
        for i in 0..4 {
            let mut expect = Vector::zeros(2);
            for j in 0..4 {
                expect += w.entry(i, j) * &xs[j];
            }
            assert!((&next[i] - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn prox_dgd_identical_nodes_follow_proximal_gradient() {
        let g = build_topology(Topology::Path, 2).unwrap();
        let w = metropolis_weights(&g);
        // identical nodes starting equal stay equal: each step is the
        // centralized proximal gradient step with step alpha
        let problems: Vec<NodeProblem> =
            (0..2).map(|_| quad_node(1, 1.0, Regularizer::L1 { weight: 0.1 })).collect();
        let alpha = 0.5;
        let mut xs = vec![Vector::from_vec(vec![2.0]); 2];
        for _ in 0..80 {
            xs = prox_dgd_step(&xs, &w, alpha, &problems).unwrap();
            assert_abs_diff_eq!(xs[0][0], xs[1][0], epsilon = 1e-14);
        }
        // fixed point of prox gradient on x^2/2 - 0.5 x + 0.1 |x|: x = 0.4
        assert_abs_diff_eq!(xs[0][0], 0.4, epsilon = 1e-6);
    }

    #[test]
    fn node_prox_dgd_matches_matrix_form() {
        let g = build_topology(Topology::Ring, 3).unwrap();
        let w = metropolis_weights(&g);
        let problems: Vec<NodeProblem> =
            (0..3).map(|i| quad_node(2, 1.0 + i as f64 * 0.3, Regularizer::Zero)).collect();
        let cfg = AlgoConfig::prox_dgd(0.4);
        let xs: Vec<Vector> = (0..3)
            .map(|i| Vector::from_fn(2, |k, _| (i + k) as f64 * 0.5 - 0.5))
            .collect();
        let matrix_next = prox_dgd_step(&xs, &w, 0.4, &problems).unwrap();

        for i in 0..3 {
            let mut node = NodeState::new(
                i,
                xs[i].clone(),
                g.neighbors(i).to_vec(),
                problems[i].clone(),
                &cfg,
                11,
            )
            .unwrap();
            for (pos, &j) in g.neighbors(i).iter().enumerate() {
                node.set_copy(pos, xs[j].clone(), 1);
            }
            node.prox_dgd_update(w.diagonal(i), &w.neighbor_weights(&g, i), &cfg).unwrap();
            assert!((&node.x - &matrix_next[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn stale_copy_versions_never_decrease() {
        let problem = quad_node(1, 1.0, Regularizer::Zero);
        let cfg = AlgoConfig::dpbm(
            ModelPolicy::CuttingPlane { capacity: 1 },
            StepSizePolicy::Fixed { eta: 0.5 },
            1.0,
        );
        let mut node =
            NodeState::new(0, Vector::zeros(1), vec![1], problem, &cfg, 0).unwrap();
        node.set_copy(0, Vector::from_vec(vec![5.0]), 3);
        node.set_copy(0, Vector::from_vec(vec![9.0]), 2); // stale, dropped
        assert_eq!(node.copies[0].version, 3);
        assert_eq!(node.copies[0].x[0], 5.0);
    }
}
