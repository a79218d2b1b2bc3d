//! Order-k moment optimization: a generalization of the classic
//! first/second-moment adaptive update in which the second-moment
//! accumulator is replaced by an exponential moving average of the k-th
//! gradient power, normalized by its k-th root.
//!
//! The crate is organized around that one idea:
//!
//! - [`moments`]: raw sample moments, skewness, the step-size metric M_k,
//!   k-th root policies, and EMA machinery with bias correction.
//! - [`optim`]: the order-k update itself plus an independently coded
//!   second-order reference used as a correctness oracle.
//! - [`problems`]: deterministic and stochastic differentiable test
//!   objectives with seeded batch sampling and a finite-difference checker.
//! - [`harness`]: reproducible experiment runs, order sweeps, gradient
//!   moment probes, and CSV trace persistence.
//! - [`config`]: the flat `key = value` experiment file format used by the
//!   command-line binary.
//! - [`verify`]: self-check suites wired into the `verify` subcommand.
//!
//! Everything is deterministic given the seeds in the experiment config:
//! runs reproduce bit-for-bit, including across the thread-parallel sweep
//! path.

pub mod config;
pub mod harness;
pub mod moments;
pub mod optim;
pub mod problems;
pub mod rng;
pub mod verify;

pub use moments::{EmaAccumulator, MomentSummary, RootPolicy, SampleSet};
pub use optim::{
    adam_reference_step, hadam_step, init_state, BiasMode, HAdamConfig, OptimizerState,
    StepDiagnostics,
};
pub use problems::{Batch, Problem};
