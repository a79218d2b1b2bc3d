//! Differentiable test objectives.
//!
//! Every objective is a finite-sum loss f(x) = (1/n) sum_i f_i(x). A
//! [`Batch`] selects which terms participate; deterministic problems have a
//! single term and treat every batch as the full objective. Batch sampling
//! is seeded and draws without replacement within a batch, so any (seed,
//! size) pair reproduces the same index set forever.

mod analytic;
mod classify;

pub use analytic::{NoisyQuadratic, Quadratic, Rosenbrock};
pub use classify::{FeatureNoise, Mlp, SoftmaxRegression};

use thiserror::Error;

use crate::rng::prng;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("batch size {requested} exceeds the {available} available examples")]
    BatchTooLarge { requested: usize, available: usize },
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("batch indices must be distinct and in range")]
    BadIndices,
}

/// A set of distinct example indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    indices: Vec<usize>,
}

impl Batch {
    pub fn full(n: usize) -> Self {
        Batch {
            indices: (0..n).collect(),
        }
    }

    pub fn from_indices(indices: Vec<usize>, n: usize) -> Result<Self, ProblemError> {
        if indices.is_empty() {
            return Err(ProblemError::EmptyBatch);
        }
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n || seen[i] {
                return Err(ProblemError::BadIndices);
            }
            seen[i] = true;
        }
        Ok(Batch { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

/// Seeded without-replacement index sample, shared by every problem.
fn sample_indices(seed: u64, n: usize, size: usize) -> Result<Batch, ProblemError> {
    if size == 0 {
        return Err(ProblemError::EmptyBatch);
    }
    if size > n {
        return Err(ProblemError::BatchTooLarge {
            requested: size,
            available: n,
        });
    }
    let mut rng = prng(seed);
    let indices = rand::seq::index::sample(&mut rng, n, size).into_vec();
    Ok(Batch { indices })
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &'static str;

    /// Parameter dimension.
    fn dim(&self) -> usize;

    /// Number of finite-sum terms.
    fn num_examples(&self) -> usize;

    /// Deterministic starting point. Data-driven problems fold `seed` into
    /// their weight initialization; analytic ones ignore it.
    fn initial_point(&self, seed: u64) -> Vec<f64>;

    /// Mean loss over the batch.
    fn loss(&self, x: &[f64], batch: &Batch) -> f64;

    /// Mean gradient over the batch.
    fn grad(&self, x: &[f64], batch: &Batch) -> Vec<f64>;

    /// Seeded batch of `size` distinct examples.
    fn sample_batch(&self, seed: u64, size: usize) -> Result<Batch, ProblemError> {
        sample_indices(seed, self.num_examples(), size)
    }

    fn full_batch(&self) -> Batch {
        Batch::full(self.num_examples())
    }

    /// Known minimizer and minimal value, when there is a closed form.
    fn optimum(&self) -> Option<(Vec<f64>, f64)> {
        None
    }

    /// Fraction of correctly classified batch examples; None for
    /// non-classification objectives.
    fn accuracy(&self, _x: &[f64], _batch: &Batch) -> Option<f64> {
        None
    }
}

/// Central-difference gradient of the batch loss on a fixed batch:
/// (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate. The oracle against
/// which every analytic gradient is checked.
pub fn finite_difference_grad(
    problem: &dyn Problem,
    x: &[f64],
    batch: &Batch,
    h: f64,
) -> Vec<f64> {
    assert!(h > 0.0, "step width must be positive");
    assert_eq!(x.len(), problem.dim(), "point dimension must match problem");
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let original = probe[i];
        probe[i] = original + h;
        let plus = problem.loss(&probe, batch);
        probe[i] = original - h;
        let minus = problem.loss(&probe, batch);
        probe[i] = original;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Relative disagreement between two gradient vectors, measured in the
/// Euclidean norm against the larger of the two magnitudes (floored so a
/// pair of near-zero vectors compares equal rather than exploding).
pub fn gradient_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}
