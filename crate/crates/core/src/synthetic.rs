//! Seeded generators for synthetic experiment inputs: random quadratic
//! multi-node problems, planted-model classification data (including a
//! forest-covertype-shaped layout: continuous block plus two one-hot
//! groups), and logistic problem assembly from a dataset.

use crate::problem::{partition_dataset, sigmoid, Dataset, NodeProblem, ProblemSpec, Regularizer};
use crate::subproblem::SubproblemInstance;
use crate::{Matrix, Result, Vector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Random rotated-diagonal PSD quadratic per node, eigenvalues in
/// `[0.2, 0.2 + spread]`, plus the strong-convexity add-on.
pub fn quadratic_spec(
    n: usize,
    dim: usize,
    spread: f64,
    theta: f64,
    reg: Regularizer,
    seed: u64,
) -> Result<ProblemSpec> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|_| {
            let raw = Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
            let qr = raw.qr();
            let rot = qr.q();
            let eigs =
                Matrix::from_diagonal(&Vector::from_fn(dim, |_, _| {
                    rng.gen_range(0.2..0.2 + spread)
                }));
            let q = &rot * eigs * rot.transpose();
            // symmetrize against round-off
            let q = 0.5 * (&q + q.transpose());
            let c = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            NodeProblem::quadratic(q, c, reg.clone(), theta)
        })
        .collect::<Result<Vec<_>>>()?;
    ProblemSpec::new(nodes)
}

/// Planted-model binary classification: features from `layout`, labels
/// `sign(w* . a + logistic noise)`. Roughly balanced classes.
pub fn classification_data(
    samples: usize,
    continuous: usize,
    onehot_groups: &[usize],
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let dim = continuous + onehot_groups.iter().sum::<usize>();
    let w_star = Vector::from_fn(dim, |_, _| rng.gen_range(-2.0..2.0));
    let mut features = Vec::with_capacity(samples);
    let mut scores = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut a = Vector::zeros(dim);
        for i in 0..continuous {
            a[i] = rng.gen_range(0.0..1.0);
        }
        let mut offset = continuous;
        for &group in onehot_groups {
            let hot = rng.gen_range(0..group);
            a[offset + hot] = 1.0;
            offset += group;
        }
        scores.push(w_star.dot(&a));
        features.push(a);
    }
    // center at the median so classes balance
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[samples / 2];
    let labels = scores
        .iter()
        .map(|&s| {
            let mut score = s - median;
            if noise > 0.0 && rng.gen_bool(sigmoid(-score.abs() / noise)) {
                score = -score;
            }
            if score >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Dataset::new(features, labels)
}

/// Covertype-shaped layout: 10 continuous features in `[0, 1]`, a one-hot
/// group of 4 and one of 40, 54 features total.
pub fn covertype_like(samples: usize, seed: u64) -> Result<Dataset> {
    classification_data(samples, 10, &[4, 40], 0.4, seed)
}

/// Partition a dataset into `n` shards and build one logistic node per
/// shard.
pub fn logistic_spec_from_dataset(
    data: &Dataset,
    n: usize,
    reg: Regularizer,
    theta: f64,
    seed: u64,
) -> Result<ProblemSpec> {
    let shards = partition_dataset(data, n, seed)?;
    let nodes = shards
        .into_iter()
        .map(|shard| NodeProblem::logistic(shard, reg.clone(), theta))
        .collect::<Result<Vec<_>>>()?;
    ProblemSpec::new(nodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegKind {
    Zero,
    L1,
    Box,
}

impl RegKind {
    pub fn build(&self, dim: usize, rng: &mut ChaCha20Rng) -> Regularizer {
        match self {
            RegKind::Zero => Regularizer::Zero,
            RegKind::L1 => Regularizer::L1 { weight: rng.gen_range(0.05..0.8) },
            RegKind::Box => {
                let half = rng.gen_range(0.2..1.5);
                Regularizer::Box {
                    lo: Vector::from_element(dim, -half),
                    hi: Vector::from_element(dim, half),
                }
            }
        }
    }
}

/// Random bundle subproblem instance used by the oracle-equivalence and
/// solver-sanity suites.
pub fn random_subproblem(
    rng: &mut ChaCha20Rng,
    pieces: usize,
    dim: usize,
    reg_kind: RegKind,
) -> SubproblemInstance {
    let slopes = Matrix::from_fn(dim, pieces, |_, _| rng.gen_range(-1.0..1.0));
    let intercepts = Vector::from_fn(pieces, |_, _| rng.gen_range(-1.0..1.0));
    let center = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
    let gamma = 10f64.powf(rng.gen_range(-1.0..1.0));
    let reg = reg_kind.build(dim, rng);
    SubproblemInstance::new(slopes, intercepts, center, gamma, reg)
        .expect("generated instance is well-formed")
}
