//! Per-node bundle subproblem
//!
//! ```text
//! minimize  max_t (g_t^T x + b_t) + h(x) + ||x - center||^2 / (2 gamma)
//! ```
//!
//! solved through its dual over the probability simplex,
//!
//! ```text
//! maximize  q(v) = b^T v + M_{gamma h}(center - gamma G v)
//!                + (||center||^2 - ||center - gamma G v||^2) / (2 gamma)
//! ```
//!
//! where `G` stacks the cut slopes columnwise and `M_{gamma h}` is the Moreau
//! envelope of the regularizer. `q` is smooth and concave with gradient
//! `b + G^T prox_{gamma h}(center - gamma G v)`, so FISTA (or adaptive
//! projected gradient) over the simplex applies; the primal solution is
//! recovered as `prox_{gamma h}(center - gamma G v_opt)`. A saddle-point
//! iteration on the primal serves as an independent verification oracle.

use crate::bundle::BundleModel;
use crate::problem::{prox_h, Regularizer};
use crate::{Error, Matrix, Result, Vector};

/// One bundle subproblem: `T` affine pieces in dimension `d`.
#[derive(Debug, Clone)]
pub struct SubproblemInstance {
    /// `d x T`; column `t` is the slope of piece `t`.
    pub slopes: Matrix,
    /// Intercepts, length `T`.
    pub intercepts: Vector,
    /// Shifted proximal center.
    pub center: Vector,
    pub gamma: f64,
    pub reg: Regularizer,
}

impl SubproblemInstance {
    pub fn new(
        slopes: Matrix,
        intercepts: Vector,
        center: Vector,
        gamma: f64,
        reg: Regularizer,
    ) -> Result<Self> {
        if gamma <= 0.0 || !gamma.is_finite() {
            return Err(Error::NonPositiveStep(gamma));
        }
        if slopes.ncols() == 0 {
            return Err(Error::EmptyModel);
        }
        if intercepts.len() != slopes.ncols() {
            return Err(Error::DimensionMismatch {
                expected: slopes.ncols(),
                got: intercepts.len(),
            });
        }
        if center.len() != slopes.nrows() {
            return Err(Error::DimensionMismatch {
                expected: slopes.nrows(),
                got: center.len(),
            });
        }
        reg.validate(center.len())?;
        Ok(SubproblemInstance { slopes, intercepts, center, gamma, reg })
    }

    pub fn pieces(&self) -> usize {
        self.slopes.ncols()
    }

    pub fn dim(&self) -> usize {
        self.slopes.nrows()
    }

    /// Value of the primal objective at `x`.
    pub fn primal_objective(&self, x: &Vector) -> f64 {
        let affine = (self.slopes.transpose() * x + &self.intercepts)
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        affine + self.reg.value(x) + (x - &self.center).norm_squared() / (2.0 * self.gamma)
    }
}

/// Builds the instance a node solves: cuts become the stacked pieces (the
/// floor enters as a zero-slope piece) and the center is
/// `x_k - (gamma/alpha) * sum_j w_ij (x_k - x_j)`.
pub fn assemble_subproblem(
    model: &BundleModel,
    x_k: &Vector,
    weighted_disagreement: &Vector,
    gamma: f64,
    alpha: f64,
    reg: &Regularizer,
) -> Result<SubproblemInstance> {
    if model.cuts().is_empty() {
        return Err(Error::EmptyModel);
    }
    if alpha <= 0.0 {
        return Err(Error::NonPositiveStep(alpha));
    }
    if weighted_disagreement.len() != x_k.len() {
        return Err(Error::DimensionMismatch {
            expected: x_k.len(),
            got: weighted_disagreement.len(),
        });
    }
    let d = x_k.len();
    let t = model.piece_count();
    let mut slopes = Matrix::zeros(d, t);
    let mut intercepts = Vector::zeros(t);
    for (idx, cut) in model.cuts().iter().enumerate() {
        slopes.set_column(idx, &cut.slope);
        intercepts[idx] = cut.intercept;
    }
    if let Some(floor) = model.floor() {
        intercepts[t - 1] = floor; // zero slope column already in place
    }
    let center = x_k - (gamma / alpha) * weighted_disagreement;
    SubproblemInstance::new(slopes, intercepts, center, gamma, reg.clone())
}

/// Euclidean projection onto `{ v >= 0, sum v = 1 }` (sort and threshold).
pub fn project_simplex(u: &Vector) -> Vector {
    let t = u.len();
    debug_assert!(t >= 1);
    let mut sorted: Vec<f64> = u.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = sorted[0] - 1.0;
    for (j, &val) in sorted.iter().enumerate() {
        cum += val;
        let candidate = (cum - 1.0) / (j + 1) as f64;
        if val - candidate > 0.0 {
            theta = candidate;
        }
    }
    u.map(|x| (x - theta).max(0.0))
}

/// Moreau envelope of `h` at `z` with parameter `gamma`:
/// value `h(p) + ||p - z||^2 / (2 gamma)` and gradient `(z - p) / gamma`
/// where `p = prox_{gamma h}(z)`.
pub fn moreau_value_grad(reg: &Regularizer, gamma: f64, z: &Vector) -> Result<(f64, Vector)> {
    let p = prox_h(z, gamma, reg)?;
    let value = reg.value(&p) + (&p - z).norm_squared() / (2.0 * gamma);
    let grad = (z - &p) / gamma;
    Ok((value, grad))
}

/// Dual objective `q(v)` and its gradient. `q` is concave on the simplex.
pub fn dual_objective(v: &Vector, inst: &SubproblemInstance) -> Result<(f64, Vector)> {
    if v.len() != inst.pieces() {
        return Err(Error::DimensionMismatch { expected: inst.pieces(), got: v.len() });
    }
    let z = &inst.center - inst.gamma * (&inst.slopes * v);
    let p = prox_h(&z, inst.gamma, &inst.reg)?;
    let moreau = inst.reg.value(&p) + (&p - &z).norm_squared() / (2.0 * inst.gamma);
    let q = inst.intercepts.dot(v)
        + moreau
        + (inst.center.norm_squared() - z.norm_squared()) / (2.0 * inst.gamma);
    let grad = &inst.intercepts + inst.slopes.transpose() * p;
    Ok((q, grad))
}

/// `x = prox_{gamma h}(center - gamma G v)`.
pub fn recover_primal(v: &Vector, inst: &SubproblemInstance) -> Result<Vector> {
    if v.len() != inst.pieces() {
        return Err(Error::DimensionMismatch { expected: inst.pieces(), got: v.len() });
    }
    let z = &inst.center - inst.gamma * (&inst.slopes * v);
    prox_h(&z, inst.gamma, &inst.reg)
}

/// Largest squared singular value of `G` by power iteration on `G^T G`.
/// Falls back to the Frobenius bound if the iteration collapses (start
/// vector orthogonal to the top singular space).
pub fn spectral_norm_sq(g: &Matrix) -> f64 {
    let fro_sq: f64 = g.iter().map(|v| v * v).sum();
    if fro_sq == 0.0 {
        return 0.0;
    }
    let t = g.ncols();
    // unstructured deterministic start, avoids sign-pattern null spaces
    let mut u = Vector::from_fn(t, |i, _| ((i + 1) as f64).sin() + 1.1);
    u /= u.norm();
    let mut lambda = 0.0;
    for _ in 0..300 {
        let w = g.transpose() * (g * &u);
        let n = w.norm();
        if n < 1e-300 * fro_sq.max(1.0) {
            return fro_sq;
        }
        lambda = u.dot(&w);
        u = w / n;
    }
    lambda.clamp(0.0, fro_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualMethod {
    /// Accelerated projected gradient with gradient restart (default).
    Fista,
    /// Projected gradient with multiplicative step adaptation.
    AdaptiveProjectedGradient,
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub v: Vector,
    pub iterations: usize,
    /// False when the iteration cap was hit before the residual dropped
    /// below tolerance; the caller may still accept the result.
    pub converged: bool,
}

/// Natural-map residual `|| v - P(v + grad q(v)) ||` used as the
/// projected-gradient stopping criterion.
fn residual(v: &Vector, grad_q: &Vector) -> f64 {
    (v - project_simplex(&(v + grad_q))).norm()
}

fn warm_start(prev: Option<&Vector>, t: usize) -> Vector {
    match prev {
        None => Vector::from_element(t, 1.0 / t as f64),
        Some(p) => {
            let mut v = Vector::zeros(t);
            for i in 0..t.min(p.len()) {
                v[i] = p[i];
            }
            project_simplex(&v)
        }
    }
}

/// Maximizes `q` over the simplex to residual `tol`.
pub fn solve_dual(
    inst: &SubproblemInstance,
    tol: f64,
    max_iter: usize,
    method: DualMethod,
    warm: Option<&Vector>,
) -> Result<DualSolution> {
    if tol <= 0.0 {
        return Err(Error::NonPositiveStep(tol));
    }
    let t = inst.pieces();
    let v0 = warm_start(warm, t);
    match method {
        DualMethod::Fista => solve_fista(inst, v0, tol, max_iter),
        DualMethod::AdaptiveProjectedGradient => solve_adaptive_pg(inst, v0, tol, max_iter),
    }
}

fn solve_fista(
    inst: &SubproblemInstance,
    v0: Vector,
    tol: f64,
    max_iter: usize,
) -> Result<DualSolution> {
    let lips = inst.gamma * spectral_norm_sq(&inst.slopes) * 1.05;
    let step = 1.0 / lips.max(1e-12);
    let mut v = v0.clone();
    let mut v_prev = v0;
    let mut y = v.clone();
    let mut t_mom = 1.0f64;
    for iter in 1..=max_iter {
        let (_, grad_y) = dual_objective(&y, inst)?;
        let v_new = project_simplex(&(&y + step * &grad_y));

        let (_, grad_new) = dual_objective(&v_new, inst)?;
        if residual(&v_new, &grad_new) <= tol {
            return Ok(DualSolution { v: v_new, iterations: iter, converged: true });
        }

        // gradient restart: momentum points against ascent
        let momentum_dir = &v_new - &v_prev;
        if grad_y.dot(&momentum_dir) < 0.0 {
            t_mom = 1.0;
            y = v_new.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt());
            y = &v_new + ((t_mom - 1.0) / t_next) * (&v_new - &v);
            t_mom = t_next;
        }
        v_prev = v;
        v = v_new;
    }
    Ok(DualSolution { v, iterations: max_iter, converged: false })
}

fn solve_adaptive_pg(
    inst: &SubproblemInstance,
    v0: Vector,
    tol: f64,
    max_iter: usize,
) -> Result<DualSolution> {
    let lips = inst.gamma * spectral_norm_sq(&inst.slopes);
    let mut step = if lips > 1e-12 { 1.0 / lips } else { 1.0 };
    let mut v = v0;
    let (mut q, mut grad) = dual_objective(&v, inst)?;
    for iter in 1..=max_iter {
        if residual(&v, &grad) <= tol {
            return Ok(DualSolution { v, iterations: iter, converged: true });
        }
        let mut attempts = 0;
        loop {
            let cand = project_simplex(&(&v + step * &grad));
            let (q_cand, grad_cand) = dual_objective(&cand, inst)?;
            if q_cand >= q - 1e-15 * (1.0 + q.abs()) || attempts >= 60 {
                v = cand;
                q = q_cand;
                grad = grad_cand;
                step *= 1.25;
                break;
            }
            step *= 0.5;
            attempts += 1;
        }
    }
    Ok(DualSolution { v, iterations: max_iter, converged: false })
}

/// Independent primal oracle: a saddle-point (primal-dual hybrid gradient)
/// iteration on
///
/// ```text
/// min_x max_{lam in simplex}  lam^T (G^T x + b) + h(x) + ||x - center||^2 / (2 gamma)
/// ```
///
/// never touching the dual solver or the recovery formula. The primal is
/// `1/gamma`-strongly convex, so the solution is unique; iteration stops once
/// the primal-dual objective gap drops below `tol`.
pub fn brute_force_primal(inst: &SubproblemInstance, tol: f64) -> Result<Vector> {
    let norm = spectral_norm_sq(&inst.slopes).sqrt();
    if norm < 1e-150 {
        // all slopes zero: the affine term is a constant
        return prox_h(&inst.center, inst.gamma, &inst.reg);
    }
    let tau = 0.9 / norm;
    let sigma = 0.9 / norm;
    let gamma = inst.gamma;
    // prox of h(x) + ||x - center||^2/(2 gamma) with step tau reduces to a
    // rescaled prox of h
    let gamma_eff = gamma * tau / (gamma + tau);
    let t = inst.pieces();

    let mut x = inst.center.clone();
    let mut x_bar = x.clone();
    let mut lam = Vector::from_element(t, 1.0 / t as f64);

    // stop once the duality gap certifies tol AND the iterate has stalled;
    // the stall condition polishes well past what the gap alone certifies
    let mut last_check = x.clone();
    let max_iter = 500_000;
    for iter in 0..max_iter {
        lam = project_simplex(&(&lam + sigma * (inst.slopes.transpose() * &x_bar + &inst.intercepts)));
        let w = &x - tau * (&inst.slopes * &lam);
        let centered = gamma_eff * (&inst.center / gamma + &w / tau);
        let x_new = prox_h(&centered, gamma_eff, &inst.reg)?;
        x_bar = 2.0 * &x_new - &x;
        x = x_new;

        if iter % 25 == 24 {
            let gap = inst.primal_objective(&x) - lagrangian_dual_value(&lam, inst)?;
            let moved = (&x - &last_check).amax();
            if gap <= tol && moved <= 1e-13 * (1.0 + x.amax()) {
                break;
            }
            last_check = x.clone();
        }
    }
    Ok(x)
}

/// Lagrangian dual value `min_x L(x, lam)` used only as the oracle's
/// weak-duality certificate.
fn lagrangian_dual_value(lam: &Vector, inst: &SubproblemInstance) -> Result<f64> {
    let z = &inst.center - inst.gamma * (&inst.slopes * lam);
    let p = prox_h(&z, inst.gamma, &inst.reg)?;
    let moreau = inst.reg.value(&p) + (&p - &z).norm_squared() / (2.0 * inst.gamma);
    Ok(inst.intercepts.dot(lam)
        + moreau
        + (inst.center.norm_squared() - z.norm_squared()) / (2.0 * inst.gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn vecf(v: &[f64]) -> Vector {
        Vector::from_vec(v.to_vec())
    }

    fn simple_instance(
        slopes: &[&[f64]],
        intercepts: &[f64],
        center: &[f64],
        gamma: f64,
        reg: Regularizer,
    ) -> SubproblemInstance {
        let d = slopes[0].len();
        let t = slopes.len();
        let mut g = Matrix::zeros(d, t);
        for (j, s) in slopes.iter().enumerate() {
            g.set_column(j, &vecf(s));
        }
        SubproblemInstance::new(g, vecf(intercepts), vecf(center), gamma, reg).unwrap()
    }

    #[test]
    fn simplex_projection_examples() {
        let p = project_simplex(&vecf(&[0.5, 0.5]));
        assert_eq!(p, vecf(&[0.5, 0.5]));

        let p = project_simplex(&vecf(&[1.0, 1.0, 1.0]));
        for i in 0..3 {
            assert_abs_diff_eq!(p[i], 1.0 / 3.0, epsilon = 1e-15);
        }

        let p = project_simplex(&vecf(&[2.0, 0.0]));
        assert_eq!(p, vecf(&[1.0, 0.0]));
    }

    #[test]
    fn simplex_projection_idempotent_and_feasible() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t = rng.gen_range(1..8);
            let u = Vector::from_fn(t, |_, _| rng.gen_range(-3.0..3.0));
            let p = project_simplex(&u);
            assert!(p.iter().all(|&v| v >= 0.0));
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            let pp = project_simplex(&p);
            assert!((pp - &p).norm() < 1e-12);
        }
    }

    /// Active-set enumeration oracle for the projection QP, T <= 4.
    fn project_simplex_enumerated(u: &Vector) -> Vector {
        let t = u.len();
        let mut best: Option<(f64, Vector)> = None;
        for mask in 1u32..(1 << t) {
            let support: Vec<usize> = (0..t).filter(|i| mask & (1 << i) != 0).collect();
            let s: f64 = support.iter().map(|&i| u[i]).sum();
            let theta = (s - 1.0) / support.len() as f64;
            let mut v = Vector::zeros(t);
            let mut feasible = true;
            for &i in &support {
                v[i] = u[i] - theta;
                if v[i] < -1e-12 {
                    feasible = false;
                }
            }
            if !feasible {
                continue;
            }
            let dist = (&v - u).norm_squared();
            if best.as_ref().map_or(true, |(d, _)| dist < *d) {
                best = Some((dist, v));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn simplex_projection_matches_enumeration() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..500 {
            let t = rng.gen_range(1..=4);
            let u = Vector::from_fn(t, |_, _| rng.gen_range(-2.0..2.0));
            let fast = project_simplex(&u);
            let slow = project_simplex_enumerated(&u);
            assert!((fast - slow).norm() < 1e-10);
        }
    }

    #[test]
    fn moreau_zero_reg() {
        let z = vecf(&[1.0, -2.0]);
        let (v, g) = moreau_value_grad(&Regularizer::Zero, 0.5, &z).unwrap();
        assert_abs_diff_eq!(v, 0.0);
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn moreau_l1_hand_case() {
        let (v, g) =
            moreau_value_grad(&Regularizer::L1 { weight: 1.0 }, 1.0, &vecf(&[0.5])).unwrap();
        assert_abs_diff_eq!(v, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn moreau_gradient_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let regs = [
            Regularizer::Zero,
            Regularizer::L1 { weight: 0.7 },
            Regularizer::Box { lo: Vector::from_element(4, -0.5), hi: Vector::from_element(4, 0.5) },
        ];
        for reg in &regs {
            for _ in 0..50 {
                let gamma = rng.gen_range(0.2..2.0);
                let z = Vector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
                let (_, g) = moreau_value_grad(reg, gamma, &z).unwrap();
                let h = 1e-6;
                for i in 0..4 {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[i] += h;
                    zm[i] -= h;
                    let fp = moreau_value_grad(reg, gamma, &zp).unwrap().0;
                    let fm = moreau_value_grad(reg, gamma, &zm).unwrap().0;
                    let fd = (fp - fm) / (2.0 * h);
                    assert!((fd - g[i]).abs() / g[i].abs().max(1.0) < 1e-5);
                }
            }
        }
    }

    #[test]
    fn moreau_gradient_is_one_over_gamma_lipschitz() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let reg = Regularizer::L1 { weight: 0.5 };
        for _ in 0..200 {
            let gamma = rng.gen_range(0.1..3.0);
            let z1 = Vector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let z2 = Vector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let g1 = moreau_value_grad(&reg, gamma, &z1).unwrap().1;
            let g2 = moreau_value_grad(&reg, gamma, &z2).unwrap().1;
            let quotient = (g1 - g2).norm() / (&z1 - &z2).norm();
            assert!(quotient <= 1.0 / gamma + 1e-8);
        }
    }

    #[test]
    fn dual_single_zero_intercept_cut() {
        // reg zero, gamma 1, center 0, one cut with slope g: q(1) = -||g||^2/2
        let g = [1.5, -2.0];
        let inst = simple_instance(&[&g], &[0.0], &[0.0, 0.0], 1.0, Regularizer::Zero);
        let (q, _) = dual_objective(&vecf(&[1.0]), &inst).unwrap();
        assert_abs_diff_eq!(q, -(1.5f64 * 1.5 + 4.0) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn dual_single_cut_equals_primal_optimum() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for reg in [Regularizer::Zero, Regularizer::L1 { weight: 0.3 }] {
            for _ in 0..20 {
                let d = 3;
                let slope: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let center: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let gamma = rng.gen_range(0.2..3.0);
                let b = rng.gen_range(-1.0..1.0);
                let inst = simple_instance(&[&slope], &[b], &center, gamma, reg.clone());
                let one = vecf(&[1.0]);
                let (q, _) = dual_objective(&one, &inst).unwrap();
                let x = recover_primal(&one, &inst).unwrap();
                assert_abs_diff_eq!(q, inst.primal_objective(&x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dual_gradient_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for _ in 0..30 {
            let d = 4;
            let t = 3;
            let g = Matrix::from_fn(d, t, |_, _| rng.gen_range(-1.0..1.0));
            let inst = SubproblemInstance::new(
                g,
                Vector::from_fn(t, |_, _| rng.gen_range(-1.0..1.0)),
                Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
                rng.gen_range(0.3..2.0),
                Regularizer::L1 { weight: 0.4 },
            )
            .unwrap();
            let v = project_simplex(&Vector::from_fn(t, |_, _| rng.gen_range(0.0..1.0)));
            let (_, grad) = dual_objective(&v, &inst).unwrap();
            let h = 1e-6;
            for i in 0..t {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[i] += h;
                vm[i] -= h;
                let qp = dual_objective(&vp, &inst).unwrap().0;
                let qm = dual_objective(&vm, &inst).unwrap().0;
                let fd = (qp - qm) / (2.0 * h);
                assert!((fd - grad[i]).abs() / grad[i].abs().max(1.0) < 1e-5);
            }
        }
    }

    #[test]
    fn dual_is_concave_on_midpoints() {
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        for _ in 0..100 {
            let d = 5;
            let t = 4;
            let g = Matrix::from_fn(d, t, |_, _| rng.gen_range(-1.0..1.0));
            let inst = SubproblemInstance::new(
                g,
                Vector::from_fn(t, |_, _| rng.gen_range(-1.0..1.0)),
                Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
                rng.gen_range(0.3..2.0),
                Regularizer::L1 { weight: 0.2 },
            )
            .unwrap();
            let v1 = project_simplex(&Vector::from_fn(t, |_, _| rng.gen_range(-1.0..1.0)));
            let v2 = project_simplex(&Vector::from_fn(t, |_, _| rng.gen_range(-1.0..1.0)));
            let mid = 0.5 * (&v1 + &v2);
            let q1 = dual_objective(&v1, &inst).unwrap().0;
            let q2 = dual_objective(&v2, &inst).unwrap().0;
            let qm = dual_objective(&mid, &inst).unwrap().0;
            assert!(qm >= 0.5 * (q1 + q2) - 1e-12);
        }
    }

    #[test]
    fn solve_dual_singleton_in_one_iteration() {
        let inst =
            simple_instance(&[&[2.0, 1.0]], &[0.5], &[1.0, 1.0], 1.0, Regularizer::Zero);
        let sol = solve_dual(&inst, 1e-10, 100, DualMethod::Fista, None).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
        assert_abs_diff_eq!(sol.v[0], 1.0);
    }

    #[test]
    fn duplicate_cuts_recover_same_primal() {
        let g = [0.8, -0.4];
        let inst = simple_instance(
            &[&g, &g],
            &[0.3, 0.3],
            &[0.5, 0.5],
            1.5,
            Regularizer::L1 { weight: 0.2 },
        );
        let sol = solve_dual(&inst, 1e-10, 1000, DualMethod::Fista, None).unwrap();
        let x = recover_primal(&sol.v, &inst).unwrap();
        // any simplex point is dual-optimal; recovery must not depend on it
        for v in [vecf(&[1.0, 0.0]), vecf(&[0.0, 1.0]), vecf(&[0.5, 0.5])] {
            let x_alt = recover_primal(&v, &inst).unwrap();
            assert!((&x_alt - &x).norm() < 1e-10);
        }
    }

    #[test]
    fn oracle_single_cut_closed_form() {
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        for _ in 0..20 {
            let d = 4;
            let slope: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let center: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let gamma = rng.gen_range(0.3..2.0);
            let inst =
                simple_instance(&[&slope], &[0.7], &center, gamma, Regularizer::Zero);
            let x = brute_force_primal(&inst, 1e-13).unwrap();
            let expected = vecf(&center) - gamma * vecf(&slope);
            assert!((x - expected).norm() < 1e-10);
        }
    }

    #[test]
    fn oracle_two_cut_kink() {
        // max(x, -x) + (x - 0.3)^2 / 2: minimum at the kink x = 0
        let inst =
            simple_instance(&[&[1.0], &[-1.0]], &[0.0, 0.0], &[0.3], 1.0, Regularizer::Zero);
        let x = brute_force_primal(&inst, 1e-13).unwrap();
        assert!(x[0].abs() < 1e-8);
        // 1-D grid confirms the optimal value
        let mut best = f64::INFINITY;
        let mut t = -2.0;
        while t <= 2.0 {
            best = best.min(inst.primal_objective(&vecf(&[t])));
            t += 1e-4;
        }
        assert!((inst.primal_objective(&x) - best).abs() < 1e-7);
    }

    fn random_instance(
        rng: &mut ChaCha20Rng,
        t: usize,
        d: usize,
        reg: Regularizer,
    ) -> SubproblemInstance {
        let g = Matrix::from_fn(d, t, |_, _| rng.gen_range(-1.0..1.0));
        SubproblemInstance::new(
            g,
            Vector::from_fn(t, |_, _| rng.gen_range(-1.0..1.0)),
            Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
            rng.gen_range(0.2..5.0),
            reg,
        )
        .unwrap()
    }

    #[test]
    fn weak_duality_random_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        for _ in 0..100 {
            let inst = random_instance(&mut rng, 4, 3, Regularizer::L1 { weight: 0.3 });
            let v = project_simplex(&Vector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0)));
            let x = Vector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let (q, _) = dual_objective(&v, &inst).unwrap();
            assert!(q <= inst.primal_objective(&x) + 1e-9);
        }
    }

    #[test]
    fn strong_duality_and_oracle_agreement() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let box_reg = Regularizer::Box {
            lo: Vector::from_element(3, -0.6),
            hi: Vector::from_element(3, 0.6),
        };
        for reg in [Regularizer::Zero, Regularizer::L1 { weight: 0.4 }, box_reg] {
            for _ in 0..10 {
                let inst = random_instance(&mut rng, 5, 3, reg.clone());
                let sol = solve_dual(&inst, 1e-11, 5000, DualMethod::Fista, None).unwrap();
                assert!(sol.converged);
                let x = recover_primal(&sol.v, &inst).unwrap();
                let (q, _) = dual_objective(&sol.v, &inst).unwrap();
                assert!((inst.primal_objective(&x) - q).abs() < 1e-6);

                let oracle = brute_force_primal(&inst, 1e-12).unwrap();
                assert!(
                    (&oracle - &x).amax() < 1e-6,
                    "oracle mismatch: {:?} vs {:?}",
                    oracle,
                    x
                );
            }
        }
    }

    #[test]
    fn adaptive_pg_agrees_with_fista() {
        let mut rng = ChaCha20Rng::seed_from_u64(47);
        for _ in 0..10 {
            let inst = random_instance(&mut rng, 6, 4, Regularizer::L1 { weight: 0.25 });
            let a = solve_dual(&inst, 1e-10, 5000, DualMethod::Fista, None).unwrap();
            let b = solve_dual(
                &inst,
                1e-10,
                20000,
                DualMethod::AdaptiveProjectedGradient,
                None,
            )
            .unwrap();
            let xa = recover_primal(&a.v, &inst).unwrap();
            let xb = recover_primal(&b.v, &inst).unwrap();
            assert!((xa - xb).norm() < 1e-7);
        }
    }

    #[test]
    fn assemble_consensus_center() {
        let x = vecf(&[1.0, 2.0]);
        let model = BundleModel::initial(
            crate::bundle::ModelPolicy::CuttingPlane { capacity: 2 },
            1.0,
            vecf(&[0.5, 0.5]),
            &x,
            None,
        )
        .unwrap();
        let inst = assemble_subproblem(
            &model,
            &x,
            &Vector::zeros(2),
            0.7,
            2.0,
            &Regularizer::Zero,
        )
        .unwrap();
        assert_eq!(inst.center, x);
    }

    #[test]
    fn assemble_triangle_hand_case() {
        // x_k = 1, two neighbors at 0 with weight 1/3 each, gamma/alpha = 1
        let x = vecf(&[1.0]);
        let disagreement = vecf(&[2.0 / 3.0]);
        let model = BundleModel::initial(
            crate::bundle::ModelPolicy::Polyak,
            1.0,
            vecf(&[2.0]),
            &x,
            Some(0.0),
        )
        .unwrap();
        let inst =
            assemble_subproblem(&model, &x, &disagreement, 1.0, 1.0, &Regularizer::Zero)
                .unwrap();
        assert_abs_diff_eq!(inst.center[0], 1.0 / 3.0, epsilon = 1e-15);
        // floor becomes a zero-slope trailing piece
        assert_eq!(inst.pieces(), 2);
        assert_abs_diff_eq!(inst.slopes[(0, 1)], 0.0);
        assert_abs_diff_eq!(inst.intercepts[1], 0.0);
    }

    #[test]
    fn gamma_shrinks_center_toward_iterate() {
        let x = vecf(&[1.0]);
        let disagreement = vecf(&[0.5]);
        let model = BundleModel::initial(
            crate::bundle::ModelPolicy::CuttingPlane { capacity: 1 },
            0.0,
            vecf(&[0.0]),
            &x,
            None,
        )
        .unwrap();
        let mut last_dist = f64::INFINITY;
        for gamma in [1.0, 0.1, 0.01] {
            let inst =
                assemble_subproblem(&model, &x, &disagreement, gamma, 1.0, &Regularizer::Zero)
                    .unwrap();
            let dist = (inst.center - &x).norm();
            assert!(dist < last_dist);
            last_dist = dist;
        }
    }
}
