//! Reproducible experiment runs, order sweeps, and gradient-moment probes.
//!
//! A run is a pure function of (config, seed): the problem data, the weight
//! initialization, and every batch draw derive deterministically from the
//! seeds, so traces reproduce bit-for-bit. Sweeps fan (order, seed) cells
//! out across threads and merge them back in input order, which keeps the
//! parallel path byte-identical to the sequential one.

mod trace;

pub use trace::{
    format_float, parse_float, read_trace_csv, write_sweep_csv, write_trace_csv, TraceRow,
    SWEEP_HEADER, TRACE_HEADER,
};

use std::collections::VecDeque;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::moments::{metric_mk, MomentError, MomentSummary, SampleSet};
use crate::optim::{
    adam_reference_step, hadam_step, init_state, HAdamConfig, OptimError,
};
use crate::problems::{
    Mlp, NoisyQuadratic, Problem, ProblemError, Quadratic, Rosenbrock, SoftmaxRegression,
};
use crate::rng::mix_seed;

/// Probes need enough batches for the moment estimates to mean anything.
pub const MIN_PROBE_SEEDS: usize = 30;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("gradient moment probe needs at least {MIN_PROBE_SEEDS} batch seeds, got {0}")]
    TooFewProbeSeeds(usize),
    #[error("gradient stream unusable for moment summary: {0}")]
    Moments(#[from] MomentError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: malformed trace: {msg}")]
    MalformedTrace { path: PathBuf, msg: String },
}

/// Which objective a run optimizes, with enough parameters to rebuild it
/// deterministically. `data_seed` fixes the dataset; the run seed only
/// chooses the initialization and the batch order, so different seeds train
/// on the same data.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Quadratic {
        dim: usize,
        x0: f64,
    },
    Rosenbrock,
    NoisyQuadratic {
        dim: usize,
        n: usize,
        x0: f64,
        data_seed: u64,
    },
    Logistic {
        n: usize,
        features: usize,
        classes: usize,
        data_seed: u64,
    },
    Mlp {
        n: usize,
        features: usize,
        hidden: usize,
        classes: usize,
        data_seed: u64,
    },
    SkewMlp {
        n: usize,
        features: usize,
        hidden: usize,
        classes: usize,
        data_seed: u64,
        noise_rate: f64,
        label_flip: f64,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Box<dyn Problem> {
        match *self {
            ProblemSpec::Quadratic { dim, x0 } => Box::new(Quadratic::new(dim, x0)),
            ProblemSpec::Rosenbrock => Box::new(Rosenbrock::new()),
            ProblemSpec::NoisyQuadratic {
                dim,
                n,
                x0,
                data_seed,
            } => Box::new(NoisyQuadratic::new(dim, n, x0, data_seed)),
            ProblemSpec::Logistic {
                n,
                features,
                classes,
                data_seed,
            } => Box::new(SoftmaxRegression::new(n, features, classes, data_seed)),
            ProblemSpec::Mlp {
                n,
                features,
                hidden,
                classes,
                data_seed,
            } => Box::new(Mlp::new(n, features, hidden, classes, data_seed)),
            ProblemSpec::SkewMlp {
                n,
                features,
                hidden,
                classes,
                data_seed,
                noise_rate,
                label_flip,
            } => Box::new(Mlp::skew_gradient(
                n, features, hidden, classes, data_seed, noise_rate, label_flip,
            )),
        }
    }
}

/// What to do once a run diverges: stop stepping, or keep going and let the
/// NaNs propagate into the remaining rows (the reporting style in which a
/// diverged run still shows a final `nan` loss).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergencePolicy {
    Halt,
    Continue,
}

/// Which update rule drives the run. `ReferenceAdam` exists so whole-run
/// parity with the independent second-order oracle can be checked end to
/// end; it requires order = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    HAdam,
    ReferenceAdam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub optimizer: HAdamConfig,
    pub engine: Engine,
    pub steps: u64,
    /// Clamped to the number of examples for small problems, so analytic
    /// objectives run with their single full-objective term.
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub record_every: u64,
    /// Number of most recent gradient vectors pooled into the per-row M_k
    /// estimate.
    pub metric_window: usize,
    pub divergence_policy: DivergencePolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemSpec::Quadratic { dim: 10, x0: 1.0 },
            optimizer: HAdamConfig::default(),
            engine: Engine::HAdam,
            steps: 2000,
            batch_size: 32,
            seeds: vec![1, 2, 3, 4, 5],
            record_every: 50,
            metric_window: 50,
            divergence_policy: DivergencePolicy::Halt,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.optimizer.validate()?;
        if self.steps == 0 {
            return Err(HarnessError::InvalidConfig("steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::InvalidConfig(
                "batch size must be at least 1".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::InvalidConfig("at least one seed required".into()));
        }
        if self.record_every == 0 {
            return Err(HarnessError::InvalidConfig(
                "record cadence must be at least 1".into(),
            ));
        }
        if self.metric_window == 0 {
            return Err(HarnessError::InvalidConfig(
                "metric window must be at least 1".into(),
            ));
        }
        if self.engine == Engine::ReferenceAdam && self.optimizer.order != 2 {
            return Err(HarnessError::InvalidConfig(
                "the reference engine is second-order only".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// First step at which any parameter, loss, or step entry went
    /// non-finite. The flag never clears afterwards.
    DivergedAt(u64),
}

/// The recorded rows plus terminal status of one run. Wall time is carried
/// for reporting only; it is not part of the persisted trace and two
/// equal-config runs compare equal on rows and status alone.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub status: RunStatus,
    pub wall_time_secs: f64,
}

impl RunTrace {
    pub fn final_loss(&self) -> f64 {
        self.rows.last().map(|r| r.loss).unwrap_or(f64::NAN)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.accuracy)
    }
}

/// M_k of the pooled recent gradients; NaN when the pool is unusable (non-
/// finite entries after divergence) or the metric is undefined.
fn window_metric(window: &VecDeque<Vec<f64>>, order: u32) -> f64 {
    let pooled: Vec<f64> = window.iter().flatten().copied().collect();
    match SampleSet::new(pooled) {
        Ok(set) => metric_mk(&set, order).unwrap_or(f64::NAN),
        Err(_) => f64::NAN,
    }
}

/// Runs one (config, seed) cell to completion, halt, or divergence.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunTrace, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let problem = cfg.problem.build();
    let mut state = init_state(problem.dim(), problem.initial_point(seed))?;
    let batch_size = cfg.batch_size.min(problem.num_examples());
    let mut window: VecDeque<Vec<f64>> = VecDeque::with_capacity(cfg.metric_window + 1);
    let mut first_divergence: Option<u64> = None;
    let mut rows = Vec::new();
    for t in 1..=cfg.steps {
        let batch = problem.sample_batch(mix_seed(seed, t), batch_size)?;
        let grad = problem.grad(&state.x, &batch);
        window.push_back(grad.clone());
        if window.len() > cfg.metric_window {
            window.pop_front();
        }
        let diag = match cfg.engine {
            Engine::HAdam => hadam_step(&mut state, &grad, &cfg.optimizer),
            Engine::ReferenceAdam => adam_reference_step(&mut state, &grad, &cfg.optimizer),
        };
        if diag.diverged && first_divergence.is_none() {
            first_divergence = Some(t);
        }
        let newly_diverged = first_divergence == Some(t);
        if t % cfg.record_every == 0 || t == cfg.steps || newly_diverged {
            let full = problem.full_batch();
            let loss = problem.loss(&state.x, &full);
            if !loss.is_finite() && first_divergence.is_none() {
                first_divergence = Some(t);
            }
            rows.push(TraceRow {
                t,
                loss,
                accuracy: problem.accuracy(&state.x, &full),
                max_abs_delta: diag.max_abs_delta,
                metric_mk: window_metric(&window, cfg.optimizer.order),
                diverged: first_divergence.is_some(),
            });
        }
        if first_divergence.is_some() && cfg.divergence_policy == DivergencePolicy::Halt {
            break;
        }
    }
    Ok(RunTrace {
        rows,
        status: match first_divergence {
            Some(t) => RunStatus::DivergedAt(t),
            None => RunStatus::Completed,
        },
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStatus {
    Completed,
    /// At least one seed diverged.
    Diverged { seeds_diverged: usize },
}

/// Aggregate over the seeds of one order, plus the per-seed traces in seed
/// order.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub order: u32,
    /// Lower median over seeds; NaN sorts last, so the cell reads NaN only
    /// when at least half the seeds diverged.
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
    pub status: SweepStatus,
    pub runs: Vec<RunTrace>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

/// Lower median with NaN ordered after every number. Deterministic and
/// never averages, so no NaN arithmetic can leak in.
fn median_nan_last(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| match (a.is_nan(), b.is_nan()) {
        (true, true) => std::cmp::Ordering::Equal,
        (true, false) => std::cmp::Ordering::Greater,
        (false, true) => std::cmp::Ordering::Less,
        (false, false) => a.partial_cmp(b).unwrap(),
    });
    sorted[(sorted.len() - 1) / 2]
}

/// Runs every (order, seed) cell of the sweep grid and aggregates per
/// order. Divergence is a result here, not an error, so the policy is
/// forced to `Continue`: diverged runs still report a final (NaN) loss the
/// way a fixed-length training budget would. Cells run in parallel; results
/// are merged in deterministic (order, seed) order.
pub fn sweep_orders(cfg: &ExperimentConfig, orders: &[u32]) -> Result<SweepResult, HarnessError> {
    if orders.is_empty() {
        return Err(HarnessError::InvalidConfig("no orders requested".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &k in orders {
        if k < 2 {
            return Err(HarnessError::InvalidConfig(format!(
                "sweep order must be at least 2, got {k}"
            )));
        }
        if !seen.insert(k) {
            return Err(HarnessError::InvalidConfig(format!(
                "sweep order {k} requested twice"
            )));
        }
    }
    let mut base = cfg.clone();
    base.divergence_policy = DivergencePolicy::Continue;
    base.validate()?;

    let jobs: Vec<(u32, u64)> = orders
        .iter()
        .flat_map(|&k| base.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let runs: Vec<Result<RunTrace, HarnessError>> = jobs
        .par_iter()
        .map(|&(order, seed)| {
            let mut cell_cfg = base.clone();
            cell_cfg.optimizer.order = order;
            run_experiment(&cell_cfg, seed)
        })
        .collect();

    let seeds_per_order = base.seeds.len();
    let mut runs_iter = runs.into_iter();
    let mut cells = Vec::with_capacity(orders.len());
    for &order in orders {
        let mut cell_runs = Vec::with_capacity(seeds_per_order);
        for _ in 0..seeds_per_order {
            cell_runs.push(runs_iter.next().expect("job grid covers all cells")?);
        }
        let losses: Vec<f64> = cell_runs.iter().map(|r| r.final_loss()).collect();
        let accuracies: Vec<f64> = cell_runs
            .iter()
            .map(|r| r.final_accuracy().unwrap_or(f64::NAN))
            .collect();
        let has_accuracy = cell_runs.iter().any(|r| r.final_accuracy().is_some());
        let seeds_diverged = cell_runs
            .iter()
            .filter(|r| matches!(r.status, RunStatus::DivergedAt(_)))
            .count();
        cells.push(SweepCell {
            order,
            final_loss: median_nan_last(&losses),
            final_accuracy: if has_accuracy {
                Some(median_nan_last(&accuracies))
            } else {
                None
            },
            status: if seeds_diverged == 0 {
                SweepStatus::Completed
            } else {
                SweepStatus::Diverged { seeds_diverged }
            },
            runs: cell_runs,
        });
    }
    Ok(SweepResult { cells })
}

/// Samples the stochastic gradient at a fixed point across many seeded
/// batches and summarizes the pooled component stream: raw moments, M_k for
/// each requested order, and skewness when defined.
pub fn gradient_moment_probe(
    problem: &dyn Problem,
    x: &[f64],
    batch_seeds: &[u64],
    batch_size: usize,
    orders: &[u32],
) -> Result<MomentSummary, HarnessError> {
    if batch_seeds.len() < MIN_PROBE_SEEDS {
        return Err(HarnessError::TooFewProbeSeeds(batch_seeds.len()));
    }
    let size = batch_size.min(problem.num_examples()).max(1);
    let mut samples = Vec::with_capacity(batch_seeds.len() * problem.dim());
    for &seed in batch_seeds {
        let batch = problem.sample_batch(seed, size)?;
        samples.extend(problem.grad(x, &batch));
    }
    let set = SampleSet::new(samples)?;
    Ok(MomentSummary::from_samples(&set, orders))
}
