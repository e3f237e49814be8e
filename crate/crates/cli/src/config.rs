//! Experiment configuration: versioned JSON schema, field-by-field
//! validation that reports every failing field, and builders for the
//! library types. The resolved (normalized) config written next to results
//! reproduces the run bit-exactly in simulator mode.

use dpbm::algorithms::{AlgoConfig, Method, StepSizePolicy};
use dpbm::bundle::ModelPolicy;
use dpbm::graph::{build_topology, Graph, Topology};
use dpbm::problem::{
    load_csv, load_libsvm, Dataset, LabelPolicy, ProblemSpec, Regularizer,
};
use dpbm::sim::{schedule_partial, schedule_total, AsyncSchedule, Growth};
use dpbm::subproblem::DualMethod;
use dpbm::synthetic;
use dpbm::Vector;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub problem: ProblemConfig,
    pub graph: GraphConfig,
    pub algorithm: AlgorithmConfig,
    pub step_size: StepConfig,
    pub alpha: f64,
    pub asynchrony: AsyncConfig,
    #[serde(default)]
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
}

fn default_stride() -> usize {
    1
}

fn default_reference_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Seeded random PSD quadratics per node.
    SyntheticQuadratic {
        dim: usize,
        #[serde(default)]
        theta: f64,
        #[serde(default = "default_spread")]
        spread: f64,
        reg: RegConfig,
        #[serde(default)]
        data_seed: Option<u64>,
    },
    /// Seeded covertype-shaped classification data split over the nodes.
    SyntheticLogistic {
        samples: usize,
        #[serde(default)]
        theta: f64,
        reg: RegConfig,
        #[serde(default)]
        data_seed: Option<u64>,
    },
    /// `label idx:val ...` file, 1-based indices.
    Libsvm {
        path: String,
        #[serde(default)]
        dim: Option<usize>,
        reg: RegConfig,
        #[serde(default)]
        theta: f64,
        /// Raw label mapped to +1 (one-vs-rest); absent means labels are
        /// already signed type.
        #[serde(default)]
        positive_label: Option<f64>,
        #[serde(default = "default_true")]
        normalize: bool,
        #[serde(default = "default_max_samples")]
        max_samples: usize,
    },
    /// CSV with header `label,f1,...,fd`.
    Csv {
        path: String,
        reg: RegConfig,
        #[serde(default)]
        theta: f64,
        #[serde(default)]
        positive_label: Option<f64>,
        #[serde(default = "default_true")]
        normalize: bool,
        #[serde(default = "default_max_samples")]
        max_samples: usize,
    },
}

fn default_spread() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_max_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegConfig {
    Zero,
    L1 { weight: f64 },
    /// Scalar bounds replicated across components.
    Box { lo: f64, hi: f64 },
}

impl RegConfig {
    pub fn build(&self, dim: usize) -> Regularizer {
        match *self {
            RegConfig::Zero => Regularizer::Zero,
            RegConfig::L1 { weight } => Regularizer::L1 { weight },
            RegConfig::Box { lo, hi } => Regularizer::Box {
                lo: Vector::from_element(dim, lo),
                hi: Vector::from_element(dim, hi),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    Ring { n: usize },
    Path { n: usize },
    Star { n: usize },
    Complete { n: usize },
    Random { n: usize, p: f64, #[serde(default)] seed: Option<u64> },
    /// Edge-list text file, `i j` per line, 0-based.
    File { path: String },
}

impl GraphConfig {
    pub fn n_hint(&self) -> Option<usize> {
        match self {
            GraphConfig::Ring { n }
            | GraphConfig::Path { n }
            | GraphConfig::Star { n }
            | GraphConfig::Complete { n }
            | GraphConfig::Random { n, .. } => Some(*n),
            GraphConfig::File { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    /// Overrides the problem-derived lower bound for floored models.
    #[serde(default)]
    pub floor: Option<f64>,
    #[serde(default = "default_dual_tol")]
    pub dual_tol: f64,
    #[serde(default = "default_dual_max_iter")]
    pub dual_max_iter: usize,
    #[serde(default)]
    pub dual_method: DualMethodKind,
}

fn default_model() -> ModelKind {
    ModelKind::CuttingPlane
}

fn default_capacity() -> usize {
    10
}

fn default_dual_tol() -> f64 {
    1e-12
}

fn default_dual_max_iter() -> usize {
    5000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Dpbm,
    ProxDgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Polyak,
    CuttingPlane,
    PolyakCuttingPlane,
    TwoCut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DualMethodKind {
    #[default]
    Fista,
    AdaptiveProjectedGradient,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepConfig {
    Fixed { eta: f64 },
    Backtracking { eta: f64, c: f64, gamma_init: f64 },
    Constant { gamma: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AsyncConfig {
    Sync,
    Partial { b: usize, d: usize, #[serde(default)] seed: Option<u64> },
    Total { #[serde(default)] growth: GrowthKind, #[serde(default)] seed: Option<u64> },
    Threaded {
        #[serde(default = "default_wall_secs")]
        wall_budget_secs: u64,
    },
}

fn default_wall_secs() -> u64 {
    60
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GrowthKind {
    Zero,
    #[default]
    Sqrt,
}

impl GrowthKind {
    pub fn build(&self) -> Growth {
        match self {
            GrowthKind::Zero => Growth::Zero,
            GrowthKind::Sqrt => Growth::Sqrt,
        }
    }
}

impl ExperimentConfig {
    /// Range and consistency checks; returns every failing field.
    pub fn validate(&self) -> Vec<String> {
        fn check(errs: &mut Vec<String>, ok: bool, msg: &str) {
            if !ok {
                errs.push(msg.to_string());
            }
        }
        let mut errs = Vec::new();
        check(
            &mut errs,
            self.schema == SCHEMA_VERSION,
            &format!("schema: expected {SCHEMA_VERSION}, got {}", self.schema),
        );
        check(&mut errs, self.alpha > 0.0 && self.alpha.is_finite(), "alpha: must be positive");
        check(&mut errs, self.iterations >= 1, "iterations: must be at least 1");
        check(&mut errs, self.snapshot_stride >= 1, "snapshot_stride: must be at least 1");
        check(&mut errs, self.reference_tol > 0.0, "reference_tol: must be positive");

        match &self.problem {
            ProblemConfig::SyntheticQuadratic { dim, theta, spread, reg, .. } => {
                check(&mut errs, *dim >= 1, "problem.dim: must be at least 1");
                check(&mut errs, *theta >= 0.0, "problem.theta: must be nonnegative");
                check(&mut errs, *spread > 0.0, "problem.spread: must be positive");
                validate_reg(reg, &mut errs);
            }
            ProblemConfig::SyntheticLogistic { samples, theta, reg, .. } => {
                check(&mut errs, *samples >= 1, "problem.samples: must be at least 1");
                check(&mut errs, *theta >= 0.0, "problem.theta: must be nonnegative");
                validate_reg(reg, &mut errs);
            }
            ProblemConfig::Libsvm { path, theta, reg, max_samples, .. }
            | ProblemConfig::Csv { path, theta, reg, max_samples, .. } => {
                check(&mut errs, !path.is_empty(), "problem.path: must not be empty");
                check(&mut errs, *theta >= 0.0, "problem.theta: must be nonnegative");
                check(&mut errs, *max_samples >= 1, "problem.max_samples: must be at least 1");
                validate_reg(reg, &mut errs);
            }
        }

        match &self.graph {
            GraphConfig::Random { n, p, .. } => {
                check(&mut errs, *n >= 2, "graph.n: must be at least 2");
                check(&mut errs, (0.0..=1.0).contains(p), "graph.p: must lie in [0, 1]");
            }
            GraphConfig::File { path } => {
                check(&mut errs, !path.is_empty(), "graph.path: must not be empty");
            }
            other => {
                if let Some(n) = other.n_hint() {
                    check(&mut errs, n >= 2, "graph.n: must be at least 2");
                }
            }
        }

        check(&mut errs, self.algorithm.capacity >= 1, "algorithm.capacity: must be at least 1");
        check(&mut errs, self.algorithm.dual_tol > 0.0, "algorithm.dual_tol: must be positive");
        check(
            &mut errs,
            self.algorithm.dual_max_iter >= 1,
            "algorithm.dual_max_iter: must be at least 1",
        );

        match &self.step_size {
            StepConfig::Fixed { eta } => {
                check(&mut errs, *eta > 0.0 && *eta < 1.0, "step_size.eta: must lie in (0, 1)");
            }
            StepConfig::Backtracking { eta, c, gamma_init } => {
                check(&mut errs, *eta > 0.0 && *eta < 1.0, "step_size.eta: must lie in (0, 1)");
                check(&mut errs, *c > 0.0 && *c < 1.0, "step_size.c: must lie in (0, 1)");
                check(&mut errs, *gamma_init > 0.0, "step_size.gamma_init: must be positive");
            }
            StepConfig::Constant { gamma } => {
                check(&mut errs, *gamma > 0.0, "step_size.gamma: must be positive");
            }
        }

        if let AsyncConfig::Threaded { wall_budget_secs } = &self.asynchrony {
            check(
                &mut errs,
                *wall_budget_secs >= 1,
                "asynchrony.wall_budget_secs: must be at least 1",
            );
        }

        if self.batch_size > 0 {
            let data_driven = matches!(
                self.problem,
                ProblemConfig::SyntheticLogistic { .. }
                    | ProblemConfig::Libsvm { .. }
                    | ProblemConfig::Csv { .. }
            );
            check(&mut errs, data_driven, "batch_size: requires a data-driven problem");
        }
        errs
    }

    /// Fills defaulted seeds so the serialized copy pins the run completely.
    pub fn normalized(&self) -> ExperimentConfig {
        let mut out = self.clone();
        match &mut out.problem {
            ProblemConfig::SyntheticQuadratic { data_seed, .. }
            | ProblemConfig::SyntheticLogistic { data_seed, .. } => {
                data_seed.get_or_insert(self.seed);
            }
            _ => {}
        }
        if let GraphConfig::Random { seed, .. } = &mut out.graph {
            seed.get_or_insert(self.seed);
        }
        match &mut out.asynchrony {
            AsyncConfig::Partial { seed, .. } | AsyncConfig::Total { seed, .. } => {
                seed.get_or_insert(self.seed);
            }
            _ => {}
        }
        out
    }

    pub fn build_graph(&self) -> anyhow::Result<Graph> {
        Ok(match &self.graph {
            GraphConfig::Ring { n } => build_topology(Topology::Ring, *n)?,
            GraphConfig::Path { n } => build_topology(Topology::Path, *n)?,
            GraphConfig::Star { n } => build_topology(Topology::Star, *n)?,
            GraphConfig::Complete { n } => build_topology(Topology::Complete, *n)?,
            GraphConfig::Random { n, p, seed } => build_topology(
                Topology::RandomConnected { p: *p, seed: seed.unwrap_or(self.seed) },
                *n,
            )?,
            GraphConfig::File { path } => Graph::from_edge_list_file(path)?,
        })
    }

    pub fn build_problem(&self, n: usize) -> anyhow::Result<ProblemSpec> {
        let spec = match &self.problem {
            ProblemConfig::SyntheticQuadratic { dim, theta, spread, reg, data_seed } => {
                synthetic::quadratic_spec(
                    n,
                    *dim,
                    *spread,
                    *theta,
                    reg.build(*dim),
                    data_seed.unwrap_or(self.seed),
                )?
            }
            ProblemConfig::SyntheticLogistic { samples, theta, reg, data_seed } => {
                let seed = data_seed.unwrap_or(self.seed);
                let data = synthetic::covertype_like(*samples, seed)?;
                synthetic::logistic_spec_from_dataset(
                    &data,
                    n,
                    reg.build(data.dim()),
                    *theta,
                    seed,
                )?
            }
            ProblemConfig::Libsvm {
                path,
                dim,
                reg,
                theta,
                positive_label,
                normalize,
                max_samples,
            } => {
                let labels = match positive_label {
                    Some(v) => LabelPolicy::PositiveVsRest(*v),
                    None => LabelPolicy::Signed,
                };
                let data = load_libsvm(path, *dim, labels)?;
                self.shard_dataset(data, n, reg, *theta, *normalize, *max_samples)?
            }
            ProblemConfig::Csv { path, reg, theta, positive_label, normalize, max_samples } => {
                let labels = match positive_label {
                    Some(v) => LabelPolicy::PositiveVsRest(*v),
                    None => LabelPolicy::Signed,
                };
                let data = load_csv(path, labels)?;
                self.shard_dataset(data, n, reg, *theta, *normalize, *max_samples)?
            }
        };
        if let Some(floor) = self.algorithm.floor {
            let mut spec = spec;
            for node in &mut spec.nodes {
                node.floor = Some(floor);
            }
            return Ok(spec);
        }
        Ok(spec)
    }

    fn shard_dataset(
        &self,
        data: Dataset,
        n: usize,
        reg: &RegConfig,
        theta: f64,
        normalize: bool,
        max_samples: usize,
    ) -> anyhow::Result<ProblemSpec> {
        let data = if normalize { data.normalized() } else { data };
        let data = if data.len() > max_samples {
            data.subsample(max_samples, self.seed)?
        } else {
            data
        };
        Ok(synthetic::logistic_spec_from_dataset(
            &data,
            n,
            reg.build(data.dim()),
            theta,
            self.seed,
        )?)
    }

    pub fn build_algo(&self) -> AlgoConfig {
        let policy = match self.algorithm.model {
            ModelKind::Polyak => ModelPolicy::Polyak,
            ModelKind::CuttingPlane => {
                ModelPolicy::CuttingPlane { capacity: self.algorithm.capacity }
            }
            ModelKind::PolyakCuttingPlane => {
                ModelPolicy::PolyakCuttingPlane { capacity: self.algorithm.capacity }
            }
            ModelKind::TwoCut => ModelPolicy::TwoCut,
        };
        let step = match self.step_size {
            StepConfig::Fixed { eta } => StepSizePolicy::Fixed { eta },
            StepConfig::Backtracking { eta, c, gamma_init } => {
                StepSizePolicy::Backtracking { eta, c, gamma_init }
            }
            StepConfig::Constant { gamma } => StepSizePolicy::Constant { gamma },
        };
        AlgoConfig {
            method: match self.algorithm.kind {
                AlgorithmKind::Dpbm => Method::Dpbm,
                AlgorithmKind::ProxDgd => Method::ProxDgd,
            },
            policy,
            step,
            alpha: self.alpha,
            batch_size: self.batch_size,
            dual_tol: self.algorithm.dual_tol,
            dual_max_iter: self.algorithm.dual_max_iter,
            dual_method: match self.algorithm.dual_method {
                DualMethodKind::Fista => DualMethod::Fista,
                DualMethodKind::AdaptiveProjectedGradient => {
                    DualMethod::AdaptiveProjectedGradient
                }
            },
            warm_start_dual: true,
        }
    }

    /// Simulator schedule; `None` means the threaded runtime was requested.
    pub fn build_schedule(&self, graph: &Graph) -> Option<AsyncSchedule> {
        match &self.asynchrony {
            AsyncConfig::Sync => Some(AsyncSchedule::synchronous(graph, self.iterations)),
            AsyncConfig::Partial { b, d, seed } => Some(schedule_partial(
                graph,
                self.iterations,
                *b,
                *d,
                seed.unwrap_or(self.seed),
            )),
            AsyncConfig::Total { growth, seed } => Some(schedule_total(
                graph,
                self.iterations,
                seed.unwrap_or(self.seed),
                growth.build(),
            )),
            AsyncConfig::Threaded { .. } => None,
        }
    }
}

fn validate_reg(reg: &RegConfig, errs: &mut Vec<String>) {
    match reg {
        RegConfig::Zero => {}
        RegConfig::L1 { weight } => {
            if !(*weight >= 0.0 && weight.is_finite()) {
                errs.push("problem.reg.weight: must be nonnegative".into());
            }
        }
        RegConfig::Box { lo, hi } => {
            if lo > hi {
                errs.push("problem.reg: lo must not exceed hi".into());
            }
        }
    }
}
