//! Deterministic simulation of asynchronous execution on a shared iteration
//! counter: activation sets, bounded or eventually-purged read delays, a
//! Jacobi tick loop over node states, and trace recording. A thread-per-node
//! runtime with latest-wins inboxes mirrors the same update rule with real
//! interleavings (demonstration only, nondeterministic).

use crate::algorithms::{AlgoConfig, NodeState};
use crate::graph::{AveragingMatrix, Graph};
use crate::problem::ProblemSpec;
use crate::{Error, Result, Vector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

/// Delay envelope for total asynchrony: reads at tick `k` may be at most
/// `g(k)` ticks stale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    /// `g(k) = 0`: synchronous.
    Zero,
    /// `g(k) = floor(sqrt(k))`: unbounded but sublinear.
    Sqrt,
}

impl Growth {
    pub fn envelope(&self, k: usize) -> usize {
        match self {
            Growth::Zero => 0,
            Growth::Sqrt => (k as f64).sqrt().floor() as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsyncMode {
    /// Every node updates in each window of `b + 1` ticks; reads at most
    /// `d` ticks stale.
    Partial { b: usize, d: usize },
    /// Gaps and delays may grow without bound under the envelope.
    Total { growth: Growth },
}

/// Activation sets and per-read version indices over a fixed horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsyncSchedule {
    pub n: usize,
    pub horizon: usize,
    pub mode: AsyncMode,
    /// `active[i][k]`
    active: Vec<Vec<bool>>,
    /// `reads[i][k]` = version per neighbor position when node `i` is
    /// active at tick `k`.
    reads: Vec<Vec<Option<Vec<usize>>>>,
}

impl AsyncSchedule {
    pub fn is_active(&self, node: usize, tick: usize) -> bool {
        self.active[node][tick]
    }

    pub fn read_versions(&self, node: usize, tick: usize) -> Option<&[usize]> {
        self.reads[node][tick].as_deref()
    }

    /// The synchronous schedule: everyone active, zero-delay reads.
    pub fn synchronous(graph: &Graph, horizon: usize) -> Self {
        schedule_partial(graph, horizon, 0, 0, 0)
    }

    /// Verification hook: silence a node at a tick (used to craft invalid
    /// schedules for negative checks).
    pub fn deactivate(&mut self, node: usize, tick: usize) {
        self.active[node][tick] = false;
        self.reads[node][tick] = None;
    }

    /// Verification hook: overwrite one read version.
    pub fn force_read(&mut self, node: usize, tick: usize, position: usize, version: usize) {
        self.reads[node][tick].as_mut().unwrap()[position] = version;
    }
}

/// Random schedule satisfying the bounded-asynchrony clauses: each node is
/// active at least once in every `b + 1` consecutive ticks, reads are at
/// most `d` stale, and read versions never decrease (latest-wins buffers).
/// `b = d = 0` degenerates to the synchronous schedule.
pub fn schedule_partial(
    graph: &Graph,
    horizon: usize,
    b: usize,
    d: usize,
    seed: u64,
) -> AsyncSchedule {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = graph.n();
    let mut active = vec![vec![false; horizon]; n];
    let mut reads = vec![vec![None; horizon]; n];
    for i in 0..n {
        let mut k = if b == 0 { 0 } else { rng.gen_range(0..=b) };
        let mut prev_read = vec![0usize; graph.degree(i)];
        while k < horizon {
            active[i][k] = true;
            let versions: Vec<usize> = prev_read
                .iter_mut()
                .map(|prev| {
                    let lo = k.saturating_sub(d).max(*prev);
                    let s = if lo >= k { k } else { rng.gen_range(lo..=k) };
                    *prev = s;
                    s
                })
                .collect();
            reads[i][k] = Some(versions);
            k += 1 + if b == 0 { 0 } else { rng.gen_range(0..=b) };
        }
    }
    AsyncSchedule { n, horizon, mode: AsyncMode::Partial { b, d }, active, reads }
}

/// Random schedule under the eventually-purged model: activation gaps and
/// read staleness grow with the envelope `g(k)` but old information is
/// always purged (`s >= k - g(k)`, versions nondecreasing).
pub fn schedule_total(graph: &Graph, horizon: usize, seed: u64, growth: Growth) -> AsyncSchedule {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = graph.n();
    let mut active = vec![vec![false; horizon]; n];
    let mut reads = vec![vec![None; horizon]; n];
    for i in 0..n {
        let mut k = 0usize;
        let mut prev_read = vec![0usize; graph.degree(i)];
        while k < horizon {
            active[i][k] = true;
            let g = growth.envelope(k);
            let versions: Vec<usize> = prev_read
                .iter_mut()
                .map(|prev| {
                    let lo = k.saturating_sub(g).max(*prev);
                    let s = if lo >= k { k } else { rng.gen_range(lo..=k) };
                    *prev = s;
                    s
                })
                .collect();
            reads[i][k] = Some(versions);
            let gap_env = growth.envelope(k.max(1));
            k += 1 + if gap_env == 0 { 0 } else { rng.gen_range(0..=gap_env) };
        }
    }
    AsyncSchedule { n, horizon, mode: AsyncMode::Total { growth }, active, reads }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleViolation {
    WindowMiss { node: usize, window_start: usize },
    DelayExceeded { node: usize, neighbor: usize, tick: usize, version: usize, bound: usize },
    FutureRead { node: usize, neighbor: usize, tick: usize, version: usize },
    NonMonotoneRead { node: usize, neighbor: usize, tick: usize },
    NoActivation { node: usize },
    MissingReads { node: usize, tick: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleReport {
    pub violation: Option<ScheduleViolation>,
}

impl ScheduleReport {
    pub fn ok(&self) -> bool {
        self.violation.is_none()
    }
}

/// Scans every invariant of the schedule; returns the first violation.
pub fn verify_schedule(schedule: &AsyncSchedule, graph: &Graph) -> ScheduleReport {
    let fail = |v| ScheduleReport { violation: Some(v) };
    for i in 0..schedule.n {
        if !schedule.active[i].iter().any(|&a| a) {
            return fail(ScheduleViolation::NoActivation { node: i });
        }
        let mut prev: Vec<Option<usize>> = vec![None; graph.degree(i)];
        for k in 0..schedule.horizon {
            if !schedule.is_active(i, k) {
                continue;
            }
            let Some(versions) = schedule.read_versions(i, k) else {
                return fail(ScheduleViolation::MissingReads { node: i, tick: k });
            };
            if versions.len() != graph.degree(i) {
                return fail(ScheduleViolation::MissingReads { node: i, tick: k });
            }
            for (p, &s) in versions.iter().enumerate() {
                if s > k {
                    return fail(ScheduleViolation::FutureRead {
                        node: i,
                        neighbor: graph.neighbors(i)[p],
                        tick: k,
                        version: s,
                    });
                }
                if let Some(ps) = prev[p] {
                    if s < ps {
                        return fail(ScheduleViolation::NonMonotoneRead {
                            node: i,
                            neighbor: graph.neighbors(i)[p],
                            tick: k,
                        });
                    }
                }
                prev[p] = Some(s);
                let bound = match schedule.mode {
                    AsyncMode::Partial { d, .. } => k.saturating_sub(d),
                    AsyncMode::Total { growth } => k.saturating_sub(growth.envelope(k)),
                };
                if s < bound {
                    return fail(ScheduleViolation::DelayExceeded {
                        node: i,
                        neighbor: graph.neighbors(i)[p],
                        tick: k,
                        version: s,
                        bound,
                    });
                }
            }
        }
        if let AsyncMode::Partial { b, .. } = schedule.mode {
            if schedule.horizon > b {
                for start in 0..=(schedule.horizon - b - 1) {
                    if !(start..=start + b).any(|k| schedule.is_active(i, k)) {
                        return fail(ScheduleViolation::WindowMiss {
                            node: i,
                            window_start: start,
                        });
                    }
                }
            }
        }
    }
    ScheduleReport { violation: None }
}

/// One committed node update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRecord {
    pub tick: u64,
    pub node: u32,
    pub gamma: f64,
    pub attempts: u32,
    pub dual_iterations: u64,
    pub beta_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DelayStats {
    pub max: u64,
    pub total: u64,
    pub count: u64,
}

impl DelayStats {
    fn observe(&mut self, delay: u64) {
        self.max = self.max.max(delay);
        self.total += delay;
        self.count += 1;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total as f64 / self.count as f64
        }
    }
}

/// Recorded run: strided state snapshots plus the update log.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n: usize,
    pub dim: usize,
    pub stride: usize,
    pub seed: u64,
    /// `(tick, state of all nodes at that tick)`, always including tick 0
    /// and the final tick.
    pub snapshots: Vec<(u64, Vec<Vector>)>,
    pub updates: Vec<UpdateRecord>,
    pub delays: DelayStats,
}

impl Trace {
    pub fn final_state(&self) -> &[Vector] {
        &self.snapshots.last().expect("trace has at least the initial snapshot").1
    }

    pub fn initial_state(&self) -> &[Vector] {
        &self.snapshots.first().expect("trace has at least the initial snapshot").1
    }

    /// Versioned little-endian binary encoding (resumable snapshot format).
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"DPBMTRC\x01")?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.stride as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.snapshots.len() as u64).to_le_bytes())?;
        w.write_all(&(self.updates.len() as u64).to_le_bytes())?;
        w.write_all(&self.delays.max.to_le_bytes())?;
        w.write_all(&self.delays.total.to_le_bytes())?;
        w.write_all(&self.delays.count.to_le_bytes())?;
        for (tick, state) in &self.snapshots {
            w.write_all(&tick.to_le_bytes())?;
            for x in state {
                for v in x.iter() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        for u in &self.updates {
            w.write_all(&u.tick.to_le_bytes())?;
            w.write_all(&u.node.to_le_bytes())?;
            w.write_all(&u.gamma.to_le_bytes())?;
            w.write_all(&u.attempts.to_le_bytes())?;
            w.write_all(&u.dual_iterations.to_le_bytes())?;
            w.write_all(&u.beta_k.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        fn u32_of(r: &mut impl Read) -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        fn u64_of(r: &mut impl Read) -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        }
        fn f64_of(r: &mut impl Read) -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        }
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"DPBMTRC\x01" {
            return Err(Error::TraceFormat("bad magic or version".into()));
        }
        let n = u32_of(r)? as usize;
        let dim = u32_of(r)? as usize;
        let stride = u32_of(r)? as usize;
        let seed = u64_of(r)?;
        let snap_count = u64_of(r)? as usize;
        let update_count = u64_of(r)? as usize;
        let delays =
            DelayStats { max: u64_of(r)?, total: u64_of(r)?, count: u64_of(r)? };
        let mut snapshots = Vec::with_capacity(snap_count);
        for _ in 0..snap_count {
            let tick = u64_of(r)?;
            let mut state = Vec::with_capacity(n);
            for _ in 0..n {
                let mut x = Vector::zeros(dim);
                for k in 0..dim {
                    x[k] = f64_of(r)?;
                }
                state.push(x);
            }
            snapshots.push((tick, state));
        }
        let mut updates = Vec::with_capacity(update_count);
        for _ in 0..update_count {
            updates.push(UpdateRecord {
                tick: u64_of(r)?,
                node: u32_of(r)?,
                gamma: f64_of(r)?,
                attempts: u32_of(r)?,
                dual_iterations: u64_of(r)?,
                beta_k: f64_of(r)?,
            });
        }
        if snapshots.is_empty() {
            return Err(Error::TraceFormat("trace has no snapshots".into()));
        }
        Ok(Trace { n, dim, stride, seed, snapshots, updates, delays })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write cannot fail");
        buf
    }
}

/// Shared-clock Jacobi simulation: at tick `k` every scheduled node reads
/// the recorded neighbor versions, updates against the pre-tick state, and
/// commits; inactive nodes carry their iterate forward. Bit-reproducible
/// from `(config, seed)`.
#[allow(clippy::too_many_arguments)]
pub fn run_simulation(
    problem: &ProblemSpec,
    graph: &Graph,
    weights: &AveragingMatrix,
    cfg: &AlgoConfig,
    schedule: &AsyncSchedule,
    iterations: usize,
    x0: &[Vector],
    seed: u64,
    stride: usize,
) -> Result<Trace> {
    if schedule.horizon < iterations {
        return Err(Error::HorizonTooShort { horizon: schedule.horizon, budget: iterations });
    }
    let n = problem.n();
    if graph.n() != n || x0.len() != n || schedule.n != n {
        return Err(Error::DimensionMismatch { expected: n, got: graph.n() });
    }
    let stride = stride.max(1);
    let mut nodes: Vec<NodeState> = Vec::with_capacity(n);
    for i in 0..n {
        nodes.push(NodeState::new(
            i,
            x0[i].clone(),
            graph.neighbors(i).to_vec(),
            problem.nodes[i].clone(),
            cfg,
            seed,
        )?);
    }
    let neighbor_weights: Vec<Vec<f64>> =
        (0..n).map(|i| weights.neighbor_weights(graph, i)).collect();

    let mut history: Vec<Vec<Vector>> = Vec::with_capacity(iterations + 1);
    history.push(x0.to_vec());
    let mut updates = Vec::new();
    let mut delays = DelayStats::default();
    let mut snapshots = vec![(0u64, x0.to_vec())];

    for k in 0..iterations {
        for i in 0..n {
            if !schedule.is_active(i, k) {
                continue;
            }
            let versions = schedule
                .read_versions(i, k)
                .expect("active tick carries read versions")
                .to_vec();
            for (p, &s) in versions.iter().enumerate() {
                let j = graph.neighbors(i)[p];
                nodes[i].set_copy(p, history[s][j].clone(), s as u64);
                delays.observe((k - s) as u64);
            }
            let outcome = nodes[i]
                .update(weights.diagonal(i), &neighbor_weights[i], cfg)
                .map_err(|e| Error::NodeUpdate {
                    node: i,
                    iteration: k as u64,
                    source: Box::new(e),
                })?;
            updates.push(UpdateRecord {
                tick: k as u64,
                node: i as u32,
                gamma: outcome.gamma_used,
                attempts: outcome.attempts,
                dual_iterations: outcome.dual_iterations as u64,
                beta_k: outcome.beta_k,
            });
        }
        let state: Vec<Vector> = nodes.iter().map(|nd| nd.x.clone()).collect();
        if (k + 1) % stride == 0 || k + 1 == iterations {
            snapshots.push(((k + 1) as u64, state.clone()));
        }
        history.push(state);
    }

    Ok(Trace { n, dim: problem.dim, stride, seed, snapshots, updates, delays })
}

struct NodeMessage {
    from: usize,
    stamp: u64,
    x: Vector,
}

/// Thread-per-node runtime: free-running workers with latest-wins inboxes,
/// update-and-broadcast loops, and a global event counter stamping messages.
/// A worker may run at most a bounded number of updates ahead of the
/// slowest node (partial asynchrony over real threads), so no node starves
/// its neighbors of fresh iterates. Nondeterministic; intended for
/// demonstrations, not acceptance checks.
#[allow(clippy::too_many_arguments)]
pub fn run_threaded(
    problem: &ProblemSpec,
    graph: &Graph,
    weights: &AveragingMatrix,
    cfg: &AlgoConfig,
    updates_per_node: usize,
    wall_budget: Duration,
    x0: &[Vector],
    seed: u64,
) -> Result<Trace> {
    const LEAD_BOUND: u64 = 8;
    let n = problem.n();
    if graph.n() != n || x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: graph.n() });
    }
    let mut senders: Vec<mpsc::Sender<NodeMessage>> = Vec::with_capacity(n);
    let mut receivers: Vec<Option<mpsc::Receiver<NodeMessage>>> = Vec::with_capacity(n);
    for _ in 0..n {
        let (tx, rx) = mpsc::channel();
        senders.push(tx);
        receivers.push(Some(rx));
    }
    let clock = AtomicU64::new(1);
    let stop = AtomicBool::new(false);
    let progress: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    let deadline = Instant::now() + wall_budget;

    struct WorkerOutput {
        node: usize,
        x: Vector,
        updates: Vec<UpdateRecord>,
        delays: DelayStats,
    }

    let clock_ref = &clock;
    let stop_ref = &stop;
    let progress_ref = &progress;

    let run_result = std::thread::scope(|scope| -> Result<Vec<WorkerOutput>> {
        let mut handles = Vec::with_capacity(n);
        for i in 0..n {
            let rx = receivers[i].take().expect("receiver consumed once");
            let neighbor_ids = graph.neighbors(i).to_vec();
            let out_senders: Vec<mpsc::Sender<NodeMessage>> =
                neighbor_ids.iter().map(|&j| senders[j].clone()).collect();
            let node_problem = problem.nodes[i].clone();
            let x_init = x0[i].clone();
            let w_ii = weights.diagonal(i);
            let w_row = weights.neighbor_weights(graph, i);
            let cfg = cfg.clone();
            handles.push(scope.spawn(move || -> Result<WorkerOutput> {
                let mut node = NodeState::new(
                    i,
                    x_init.clone(),
                    neighbor_ids.clone(),
                    node_problem,
                    &cfg,
                    seed,
                )?;
                let position_of: std::collections::HashMap<usize, usize> =
                    neighbor_ids.iter().enumerate().map(|(p, &j)| (j, p)).collect();
                // share the initial iterate
                for tx in &out_senders {
                    let _ = tx.send(NodeMessage { from: i, stamp: 0, x: x_init.clone() });
                }
                // first activation waits for every neighbor's initial value
                if !neighbor_ids.is_empty() {
                    let mut seen = vec![false; neighbor_ids.len()];
                    while seen.iter().any(|s| !s) {
                        if Instant::now() >= deadline || stop_ref.load(Ordering::Relaxed) {
                            break;
                        }
                        match rx.recv_timeout(Duration::from_millis(10)) {
                            Ok(msg) => {
                                let p = position_of[&msg.from];
                                seen[p] = true;
                                node.set_copy(p, msg.x, msg.stamp);
                            }
                            Err(mpsc::RecvTimeoutError::Timeout) => continue,
                            Err(mpsc::RecvTimeoutError::Disconnected) => break,
                        }
                    }
                }
                let mut updates = Vec::new();
                let mut delays = DelayStats::default();
                let mut done = 0usize;
                while done < updates_per_node
                    && Instant::now() < deadline
                    && !stop_ref.load(Ordering::Relaxed)
                {
                    // bounded lead over the slowest node
                    let min_done = progress_ref
                        .iter()
                        .map(|p| p.load(Ordering::Relaxed))
                        .min()
                        .unwrap_or(0);
                    if done as u64 > min_done + LEAD_BOUND {
                        std::thread::yield_now();
                        continue;
                    }
                    while let Ok(msg) = rx.try_recv() {
                        let p = position_of[&msg.from];
                        node.set_copy(p, msg.x, msg.stamp);
                    }
                    let now = clock_ref.fetch_add(1, Ordering::SeqCst);
                    for copy in &node.copies {
                        delays.observe(now.saturating_sub(copy.version));
                    }
                    let outcome = node.update(w_ii, &w_row, &cfg)?;
                    updates.push(UpdateRecord {
                        tick: now,
                        node: i as u32,
                        gamma: outcome.gamma_used,
                        attempts: outcome.attempts,
                        dual_iterations: outcome.dual_iterations as u64,
                        beta_k: outcome.beta_k,
                    });
                    for tx in &out_senders {
                        let _ = tx.send(NodeMessage { from: i, stamp: now, x: node.x.clone() });
                    }
                    done += 1;
                    progress_ref[i].store(done as u64, Ordering::Relaxed);
                }
                // release nodes blocked on this worker's progress
                progress_ref[i].store(u64::MAX, Ordering::Relaxed);
                Ok(WorkerOutput { node: i, x: node.x.clone(), updates, delays })
            }));
        }
        let mut collected = Vec::with_capacity(n);
        let mut first_error: Option<Error> = None;
        for handle in handles {
            match handle.join() {
                Ok(Ok(out)) => collected.push(out),
                Ok(Err(e)) => {
                    stop_ref.store(true, Ordering::Relaxed);
                    if first_error.is_none() {
                        first_error = Some(e);
                    }
                }
                Err(_) => {
                    stop_ref.store(true, Ordering::Relaxed);
                    if first_error.is_none() {
                        first_error = Some(Error::WorkerPanic(usize::MAX));
                    }
                }
            }
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(collected),
        }
    })?;

    let mut updates = Vec::new();
    let mut delays = DelayStats::default();
    let mut final_state = x0.to_vec();
    for out in run_result {
        final_state[out.node] = out.x;
        updates.extend(out.updates);
        delays.max = delays.max.max(out.delays.max);
        delays.total += out.delays.total;
        delays.count += out.delays.count;
    }
    updates.sort_by_key(|u| (u.tick, u.node));
    let last_tick = updates.last().map_or(0, |u| u.tick);
    Ok(Trace {
        n,
        dim: problem.dim,
        stride: 1,
        seed,
        snapshots: vec![(0, x0.to_vec()), (last_tick, final_state)],
        updates,
        delays,
    })
}
