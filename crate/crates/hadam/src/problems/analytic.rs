//! Closed-form objectives: a separable quadratic, the banana-valley
//! benchmark, and a noisy quadratic whose stochastic gradients carry
//! exactly symmetric Gaussian noise.

use rand_distr::{Distribution, Normal};

use super::{Batch, Problem};
use crate::rng::prng;

/// f(x) = 1/2 ||x||^2, gradient x. Single-term objective: every batch is
/// the full objective.
#[derive(Debug, Clone)]
pub struct Quadratic {
    dim: usize,
    x0: f64,
}

impl Quadratic {
    pub fn new(dim: usize, x0: f64) -> Self {
        assert!(dim >= 1);
        Quadratic { dim, x0 }
    }
}

impl Problem for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn num_examples(&self) -> usize {
        1
    }

    fn initial_point(&self, _seed: u64) -> Vec<f64> {
        vec![self.x0; self.dim]
    }

    fn loss(&self, x: &[f64], _batch: &Batch) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn grad(&self, x: &[f64], _batch: &Batch) -> Vec<f64> {
        x.to_vec()
    }

    fn optimum(&self) -> Option<(Vec<f64>, f64)> {
        Some((vec![0.0; self.dim], 0.0))
    }
}

/// f(x, y) = (1 - x)^2 + 100 (y - x^2)^2 from the classic curved-valley
/// start (-1.2, 1).
#[derive(Debug, Clone, Default)]
pub struct Rosenbrock;

impl Rosenbrock {
    pub fn new() -> Self {
        Rosenbrock
    }
}

impl Problem for Rosenbrock {
    fn name(&self) -> &'static str {
        "rosenbrock"
    }

    fn dim(&self) -> usize {
        2
    }

    fn num_examples(&self) -> usize {
        1
    }

    fn initial_point(&self, _seed: u64) -> Vec<f64> {
        vec![-1.2, 1.0]
    }

    fn loss(&self, x: &[f64], _batch: &Batch) -> f64 {
        let (a, b) = (x[0], x[1]);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    fn grad(&self, x: &[f64], _batch: &Batch) -> Vec<f64> {
        let (a, b) = (x[0], x[1]);
        vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ]
    }

    fn optimum(&self) -> Option<(Vec<f64>, f64)> {
        Some((vec![1.0, 1.0], 0.0))
    }
}

/// f_i(x) = 1/2 ||x - c_i||^2 with Gaussian centers c_i. The minibatch
/// gradient is x - mean(c_batch): linear in a Gaussian, hence exactly
/// symmetric noise around the full gradient. This is the clean control for
/// gradient-moment probes.
#[derive(Debug, Clone)]
pub struct NoisyQuadratic {
    dim: usize,
    x0: f64,
    centers: Vec<f64>, // n rows of `dim`, flattened
    n: usize,
}

impl NoisyQuadratic {
    pub fn new(dim: usize, n: usize, x0: f64, seed: u64) -> Self {
        assert!(dim >= 1 && n >= 1);
        let mut rng = prng(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let centers = (0..n * dim).map(|_| normal.sample(&mut rng)).collect();
        NoisyQuadratic { dim, x0, centers, n }
    }

    fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    fn mean_center(&self, batch: &Batch) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for &i in batch.indices() {
            for (m, c) in mean.iter_mut().zip(self.center(i)) {
                *m += c;
            }
        }
        let inv = 1.0 / batch.size() as f64;
        for m in &mut mean {
            *m *= inv;
        }
        mean
    }
}

impl Problem for NoisyQuadratic {
    fn name(&self) -> &'static str {
        "noisy_quadratic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn num_examples(&self) -> usize {
        self.n
    }

    fn initial_point(&self, _seed: u64) -> Vec<f64> {
        vec![self.x0; self.dim]
    }

    fn loss(&self, x: &[f64], batch: &Batch) -> f64 {
        let mut total = 0.0;
        for &i in batch.indices() {
            total += 0.5
                * x.iter()
                    .zip(self.center(i))
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>();
        }
        total / batch.size() as f64
    }

    fn grad(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        let mean = self.mean_center(batch);
        x.iter().zip(&mean).map(|(a, c)| a - c).collect()
    }

    fn optimum(&self) -> Option<(Vec<f64>, f64)> {
        let full = self.full_batch();
        let mean = self.mean_center(&full);
        let value = self.loss(&mean, &full);
        Some((mean, value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{finite_difference_grad, gradient_relative_error};
    use rand::Rng;

    #[test]
    fn quadratic_gradient_is_identity() {
        let p = Quadratic::new(2, 1.0);
        let b = p.full_batch();
        assert_eq!(p.grad(&[3.0, -1.0], &b), vec![3.0, -1.0]);
        assert_eq!(p.loss(&[3.0, -1.0], &b), 5.0);
        assert_eq!(p.loss(&[0.0, 0.0], &b), 0.0);
    }

    #[test]
    fn quadratic_matches_finite_differences_tightly() {
        let p = Quadratic::new(5, 1.0);
        let b = p.full_batch();
        let mut rng = crate::rng::prng(11);
        for _ in 0..10 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let fd = finite_difference_grad(&p, &x, &b, 1e-5);
            let an = p.grad(&x, &b);
            let err = gradient_relative_error(&an, &fd);
            assert!(err <= 1e-7, "err {err}");
        }
    }

    #[test]
    fn rosenbrock_known_gradients() {
        let p = Rosenbrock::new();
        let b = p.full_batch();
        assert_eq!(p.grad(&[0.0, 0.0], &b), vec![-2.0, 0.0]);
        assert_eq!(p.grad(&[1.0, 1.0], &b), vec![0.0, 0.0]);
        assert_eq!(p.loss(&[1.0, 1.0], &b), 0.0);
    }

    #[test]
    fn rosenbrock_matches_finite_differences() {
        let p = Rosenbrock::new();
        let b = p.full_batch();
        let mut rng = crate::rng::prng(12);
        for _ in 0..10 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let fd = finite_difference_grad(&p, &x, &b, 1e-5);
            let an = p.grad(&x, &b);
            let err = gradient_relative_error(&an, &fd);
            assert!(err <= 1e-6, "err {err} at {x:?}");
        }
    }

    #[test]
    fn noisy_quadratic_gradient_and_optimum() {
        let p = NoisyQuadratic::new(3, 40, 1.0, 5);
        let full = p.full_batch();
        let x = vec![0.5, -0.25, 2.0];
        let fd = finite_difference_grad(&p, &x, &full, 1e-5);
        let an = p.grad(&x, &full);
        assert!(gradient_relative_error(&an, &fd) <= 1e-7);

        let (opt, value) = p.optimum().unwrap();
        let g = p.grad(&opt, &full);
        assert!(g.iter().all(|c| c.abs() < 1e-12));
        assert!(p.loss(&x, &full) > value);
    }

    #[test]
    fn minibatch_gradient_is_unbiased_by_enumeration() {
        // All C(10, 3) batches of a 10-example problem average to the
        // full-batch gradient.
        let p = NoisyQuadratic::new(2, 10, 0.0, 8);
        let x = [0.3, -0.7];
        let full_grad = p.grad(&x, &p.full_batch());
        let mut mean = [0.0; 2];
        let mut count = 0usize;
        for i in 0..10 {
            for j in (i + 1)..10 {
                for l in (j + 1)..10 {
                    let batch = Batch::from_indices(vec![i, j, l], 10).unwrap();
                    let g = p.grad(&x, &batch);
                    for (m, v) in mean.iter_mut().zip(&g) {
                        *m += v;
                    }
                    count += 1;
                }
            }
        }
        assert_eq!(count, 120);
        for (m, f) in mean.iter().zip(&full_grad) {
            assert!((m / count as f64 - f).abs() <= 1e-12);
        }
    }

    #[test]
    fn disjoint_halves_average_to_full_gradient() {
        let p = NoisyQuadratic::new(3, 20, 0.5, 21);
        let x = vec![1.0, -1.0, 0.25];
        let lo = Batch::from_indices((0..10).collect(), 20).unwrap();
        let hi = Batch::from_indices((10..20).collect(), 20).unwrap();
        let full = p.grad(&x, &p.full_batch());
        let gl = p.grad(&x, &lo);
        let gh = p.grad(&x, &hi);
        for i in 0..3 {
            assert!((0.5 * (gl[i] + gh[i]) - full[i]).abs() <= 1e-12);
        }
    }
}
