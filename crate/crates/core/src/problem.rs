//! Per-node composite objectives `phi_i = f_i + h_i`: smooth losses
//! (quadratic or logistic over a data shard), proximable regularizers,
//! dataset ingestion and batch sampling.

use crate::{Error, Result, Vector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// Numerically stable `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Numerically stable `1 / (1 + e^{-t})`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Proximable regularizer `h`.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    /// `h = 0`.
    Zero,
    /// `h(x) = weight * ||x||_1`.
    L1 { weight: f64 },
    /// Indicator of the box `[lo, hi]` componentwise.
    Box { lo: Vector, hi: Vector },
}

impl Regularizer {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Regularizer::Zero => Ok(()),
            Regularizer::L1 { weight } => {
                if *weight < 0.0 || !weight.is_finite() {
                    Err(Error::InvalidRegularizer(format!(
                        "l1 weight must be nonnegative, got {weight}"
                    )))
                } else {
                    Ok(())
                }
            }
            Regularizer::Box { lo, hi } => {
                if lo.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: lo.len() });
                }
                if hi.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: hi.len() });
                }
                for i in 0..dim {
                    if lo[i] > hi[i] {
                        return Err(Error::InvalidRegularizer(format!(
                            "box bounds inverted at component {i}: lo={} > hi={}",
                            lo[i], hi[i]
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// `h(x)`; the box indicator returns `+inf` outside its bounds
    /// (with a small slack for floating-point round-off).
    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::Box { lo, hi } => {
                let inside = (0..x.len())
                    .all(|i| x[i] >= lo[i] - 1e-12 && x[i] <= hi[i] + 1e-12);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// `prox_{t h}(z) = argmin_x h(x) + ||x - z||^2 / (2t)`.
pub fn prox_h(z: &Vector, t: f64, reg: &Regularizer) -> Result<Vector> {
    if t <= 0.0 || !t.is_finite() {
        return Err(Error::NonPositiveStep(t));
    }
    Ok(match reg {
        Regularizer::Zero => z.clone(),
        Regularizer::L1 { weight } => {
            let tau = t * weight;
            z.map(|v| v.signum() * (v.abs() - tau).max(0.0))
        }
        Regularizer::Box { lo, hi } => {
            Vector::from_fn(z.len(), |i, _| z[i].clamp(lo[i], hi[i]))
        }
    })
}

/// Labeled samples `(a_j, b_j)` with `b_j` in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vector>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<Vector>, labels: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = features[0].len();
        for (j, a) in features.iter().enumerate() {
            if a.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: a.len() });
            }
            let _ = j;
        }
        if labels.len() != features.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        for (j, b) in labels.iter().enumerate() {
            if *b != 1.0 && *b != -1.0 {
                return Err(Error::Parse {
                    line: j + 1,
                    msg: format!("label must be -1 or +1, got {b}"),
                });
            }
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn sample(&self, j: usize) -> (&Vector, f64) {
        (&self.features[j], self.labels[j])
    }

    /// Min-max scales every feature column to `[0, 1]`; constant columns map to 0.
    pub fn normalized(&self) -> Dataset {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for a in &self.features {
            for i in 0..d {
                lo[i] = lo[i].min(a[i]);
                hi[i] = hi[i].max(a[i]);
            }
        }
        let features = self
            .features
            .iter()
            .map(|a| {
                Vector::from_fn(d, |i, _| {
                    let span = hi[i] - lo[i];
                    if span > 0.0 {
                        (a[i] - lo[i]) / span
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Dataset { features, labels: self.labels.clone() }
    }

    /// Seeded shuffle followed by truncation to at most `max` samples.
    pub fn subsample(&self, max: usize, seed: u64) -> Result<Dataset> {
        if max == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        idx.truncate(max);
        let features = idx.iter().map(|&j| self.features[j].clone()).collect();
        let labels = idx.iter().map(|&j| self.labels[j]).collect();
        Ok(Dataset { features, labels })
    }
}

/// Index subset of a [`Dataset`]; indices are kept sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    indices: Vec<usize>,
}

impl Batch {
    pub fn new(mut indices: Vec<usize>, dataset_len: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidBatch("batch is empty".into()));
        }
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidBatch(format!("duplicate index {}", w[0])));
            }
        }
        if *indices.last().unwrap() >= dataset_len {
            return Err(Error::InvalidBatch(format!(
                "index {} out of range for dataset of {} samples",
                indices.last().unwrap(),
                dataset_len
            )));
        }
        Ok(Batch { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Uniform sample of `size` indices without replacement, returned sorted.
/// `size == |data|` yields the full shard.
pub fn sample_batch(data: &Dataset, size: usize, rng: &mut impl Rng) -> Result<Batch> {
    if size == 0 || size > data.len() {
        return Err(Error::InvalidBatch(format!(
            "batch size {size} out of range 1..={}",
            data.len()
        )));
    }
    let indices = rand::seq::index::sample(rng, data.len(), size).into_vec();
    Batch::new(indices, data.len())
}

fn selected_len(data: &Dataset, batch: Option<&Batch>) -> usize {
    batch.map_or(data.len(), Batch::len)
}

fn check_dims(x: &Vector, data: &Dataset) -> Result<()> {
    if x.len() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: x.len() });
    }
    Ok(())
}

fn for_each_selected<'a>(
    data: &'a Dataset,
    batch: Option<&Batch>,
    mut f: impl FnMut(&'a Vector, f64),
) {
    match batch {
        None => {
            for j in 0..data.len() {
                let (a, b) = data.sample(j);
                f(a, b);
            }
        }
        Some(batch) => {
            for &j in batch.indices() {
                let (a, b) = data.sample(j);
                f(a, b);
            }
        }
    }
}

/// `(1/m) sum_j ln(1 + exp(-b_j a_j^T x))` over the full dataset or a batch.
pub fn logistic_value(x: &Vector, data: &Dataset, batch: Option<&Batch>) -> Result<f64> {
    check_dims(x, data)?;
    let m = selected_len(data, batch);
    let mut acc = 0.0;
    for_each_selected(data, batch, |a, b| {
        acc += softplus(-b * a.dot(x));
    });
    Ok(acc / m as f64)
}

/// `(1/m) sum_j -b_j a_j sigmoid(-b_j a_j^T x)`.
pub fn logistic_grad(x: &Vector, data: &Dataset, batch: Option<&Batch>) -> Result<Vector> {
    check_dims(x, data)?;
    let m = selected_len(data, batch) as f64;
    let mut g = Vector::zeros(x.len());
    for_each_selected(data, batch, |a, b| {
        let w = -b * sigmoid(-b * a.dot(x)) / m;
        g.axpy(w, a, 1.0);
    });
    Ok(g)
}

/// Smooth loss `f_i` before the optional strong-convexity add-on.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothLoss {
    /// `f(x) = 0.5 x^T Q x - c^T x` with `Q` symmetric PSD.
    Quadratic { q: crate::Matrix, c: Vector },
    /// Mean logistic loss over the node's shard.
    Logistic { data: Dataset },
}

/// One node's composite objective `phi_i(x) = f_i(x) + h_i(x)` where
/// `f_i = loss + (theta/2) ||x||^2`.
#[derive(Debug, Clone)]
pub struct NodeProblem {
    pub loss: SmoothLoss,
    pub reg: Regularizer,
    /// Strong-convexity add-on coefficient (0 disables it).
    pub theta: f64,
    /// Smoothness constant of `f_i` (includes the add-on).
    pub smoothness: f64,
    /// Known lower bound `c^f` on `f_i`, when one is available.
    pub floor: Option<f64>,
}

impl NodeProblem {
    /// Logistic shard node. The smoothness constant `max_j ||a_j||^2 / 4`
    /// bounds the curvature of the shard mean and of every single-sample
    /// loss, so it is valid for both deterministic and batch evaluation.
    pub fn logistic(data: Dataset, reg: Regularizer, theta: f64) -> Result<Self> {
        reg.validate(data.dim())?;
        let max_sq = (0..data.len())
            .map(|j| data.sample(j).0.norm_squared())
            .fold(0.0, f64::max);
        Ok(NodeProblem {
            loss: SmoothLoss::Logistic { data },
            reg,
            theta,
            smoothness: max_sq / 4.0 + theta,
            floor: Some(0.0),
        })
    }

    /// Quadratic node; `q` must be symmetric PSD. The floor is the exact
    /// minimum of `f_i` when `q + theta I` is invertible.
    pub fn quadratic(q: crate::Matrix, c: Vector, reg: Regularizer, theta: f64) -> Result<Self> {
        let d = c.len();
        if q.nrows() != d || q.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: q.nrows() });
        }
        reg.validate(d)?;
        let mut q_eff = q.clone();
        for i in 0..d {
            q_eff[(i, i)] += theta;
        }
        let eig = q_eff.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v));
        let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let floor = if lmin > 1e-12 {
            // min of 0.5 x'(Q+theta I)x - c'x at x = (Q+theta I)^{-1} c
            q_eff
                .clone()
                .lu()
                .solve(&c)
                .map(|xmin| 0.5 * xmin.dot(&(&q_eff * &xmin)) - c.dot(&xmin))
        } else {
            None
        };
        Ok(NodeProblem {
            loss: SmoothLoss::Quadratic { q, c },
            reg,
            theta,
            smoothness: lmax,
            floor,
        })
    }

    pub fn dim(&self) -> usize {
        match &self.loss {
            SmoothLoss::Quadratic { c, .. } => c.len(),
            SmoothLoss::Logistic { data } => data.dim(),
        }
    }

    pub fn shard(&self) -> Option<&Dataset> {
        match &self.loss {
            SmoothLoss::Logistic { data } => Some(data),
            SmoothLoss::Quadratic { .. } => None,
        }
    }

    /// `f_i(x)`, optionally on a batch (logistic only).
    pub fn value_on(&self, x: &Vector, batch: Option<&Batch>) -> Result<f64> {
        let base = match &self.loss {
            SmoothLoss::Quadratic { q, c } => {
                if batch.is_some() {
                    return Err(Error::InvalidBatch(
                        "quadratic loss has no sample set".into(),
                    ));
                }
                0.5 * x.dot(&(q * x)) - c.dot(x)
            }
            SmoothLoss::Logistic { data } => logistic_value(x, data, batch)?,
        };
        Ok(base + 0.5 * self.theta * x.norm_squared())
    }

    /// `grad f_i(x)`, optionally on a batch (logistic only).
    pub fn grad_on(&self, x: &Vector, batch: Option<&Batch>) -> Result<Vector> {
        let mut g = match &self.loss {
            SmoothLoss::Quadratic { q, c } => {
                if batch.is_some() {
                    return Err(Error::InvalidBatch(
                        "quadratic loss has no sample set".into(),
                    ));
                }
                q * x - c
            }
            SmoothLoss::Logistic { data } => logistic_grad(x, data, batch)?,
        };
        g.axpy(self.theta, x, 1.0);
        Ok(g)
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.value_on(x, None)
    }

    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        self.grad_on(x, None)
    }

    /// `phi_i(x) = f_i(x) + h_i(x)`.
    pub fn composite_value(&self, x: &Vector) -> Result<f64> {
        Ok(self.value(x)? + self.reg.value(x))
    }
}

/// The full multi-node problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub dim: usize,
    pub nodes: Vec<NodeProblem>,
}

impl ProblemSpec {
    pub fn new(nodes: Vec<NodeProblem>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = nodes[0].dim();
        for node in &nodes {
            if node.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: node.dim() });
            }
            node.reg.validate(dim)?;
            if node.theta < 0.0 {
                return Err(Error::InvalidRegularizer(format!(
                    "strong-convexity add-on must be nonnegative, got {}",
                    node.theta
                )));
            }
        }
        Ok(ProblemSpec { dim, nodes })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }
}

/// How raw file labels map onto `{-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelPolicy {
    /// Labels must already be `-1` or `+1`.
    Signed,
    /// The given class maps to `+1`, every other label to `-1`.
    PositiveVsRest(f64),
}

impl LabelPolicy {
    fn apply(&self, raw: f64, line: usize) -> Result<f64> {
        match self {
            LabelPolicy::Signed => {
                if raw == 1.0 || raw == -1.0 {
                    Ok(raw)
                } else {
                    Err(Error::Parse {
                        line,
                        msg: format!("label must be -1 or +1 under signed policy, got {raw}"),
                    })
                }
            }
            LabelPolicy::PositiveVsRest(pos) => Ok(if raw == *pos { 1.0 } else { -1.0 }),
        }
    }
}

/// Parses `label idx:val ...` lines with 1-based indices. The dimension is
/// `dim` when given, otherwise the maximum index seen.
pub fn load_libsvm(
    path: impl AsRef<Path>,
    dim: Option<usize>,
    labels: LabelPolicy,
) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    parse_libsvm(BufReader::new(file), dim, labels)
}

pub fn parse_libsvm(
    reader: impl BufRead,
    dim: Option<usize>,
    labels: LabelPolicy,
) -> Result<Dataset> {
    let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let raw_label: f64 = tokens
            .next()
            .unwrap()
            .parse()
            .map_err(|e| Error::Parse { line: lineno, msg: format!("bad label: {e}") })?;
        let label = labels.apply(raw_label, lineno)?;
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx_str
                .parse()
                .map_err(|e| Error::Parse { line: lineno, msg: format!("bad index: {e}") })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "index 0 (libsvm indices are 1-based)".into(),
                });
            }
            let val: f64 = val_str
                .parse()
                .map_err(|e| Error::Parse { line: lineno, msg: format!("bad value: {e}") })?;
            if let Some(d) = dim {
                if idx > d {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("index {idx} exceeds dimension {d}"),
                    });
                }
            }
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push((label, entries));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = dim.unwrap_or(max_index);
    if d == 0 {
        return Err(Error::Parse { line: 1, msg: "no feature indices present".into() });
    }
    let mut features = Vec::with_capacity(rows.len());
    let mut labels_out = Vec::with_capacity(rows.len());
    for (label, entries) in rows {
        let mut a = Vector::zeros(d);
        for (i, v) in entries {
            a[i] = v;
        }
        features.push(a);
        labels_out.push(label);
    }
    Dataset::new(features, labels_out)
}

/// Parses CSV with header `label,f1,...,fd`.
pub fn load_csv(path: impl AsRef<Path>, labels: LabelPolicy) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    parse_csv(BufReader::new(file), labels)
}

pub fn parse_csv(reader: impl BufRead, labels: LabelPolicy) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(Error::EmptyDataset),
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
        }
    };
    let cols = header.split(',').count();
    if cols < 2 {
        return Err(Error::Parse { line: 1, msg: "header needs label plus features".into() });
    }
    let d = cols - 1;
    let mut features = Vec::new();
    let mut labels_out = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {cols} fields, got {}", fields.len()),
            });
        }
        let raw: f64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| Error::Parse { line: lineno, msg: format!("bad label: {e}") })?;
        let label = labels.apply(raw, lineno)?;
        let mut a = Vector::zeros(d);
        for (i, field) in fields[1..].iter().enumerate() {
            a[i] = field
                .trim()
                .parse()
                .map_err(|e| Error::Parse { line: lineno, msg: format!("bad value: {e}") })?;
        }
        features.push(a);
        labels_out.push(label);
    }
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(features, labels_out)
}

/// Seeded shuffle followed by a contiguous split into `n` shards whose sizes
/// differ by at most one. The union is the input and shards are disjoint.
pub fn partition_dataset(data: &Dataset, n: usize, seed: u64) -> Result<Vec<Dataset>> {
    if n == 0 {
        return Err(Error::InvalidBatch("cannot partition into 0 shards".into()));
    }
    if n > data.len() {
        return Err(Error::InvalidBatch(format!(
            "cannot partition {} samples into {} shards",
            data.len(),
            n
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);

    let base = data.len() / n;
    let extra = data.len() % n;
    let mut shards = Vec::with_capacity(n);
    let mut pos = 0;
    for i in 0..n {
        let size = base + usize::from(i < extra);
        let slice = &idx[pos..pos + size];
        pos += size;
        let features = slice.iter().map(|&j| data.sample(j).0.clone()).collect();
        let labels = slice.iter().map(|&j| data.sample(j).1).collect();
        shards.push(Dataset::new(features, labels)?);
    }
    Ok(shards)
}
