//! Raw sample moments, skewness, the step-size metric M_k, k-th roots, and
//! exponential moving averages with bias correction.
//!
//! Every estimator here divides by the sample count N (population form, no
//! Bessel correction). The EMA accumulator is a value type whose `update`
//! consumes and returns it, so there is no shared mutable state anywhere in
//! the module: all functions are pure and safe to call from worker threads.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MomentError {
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("sample {index} is not finite ({value})")]
    NonFiniteSample { index: usize, value: f64 },
    #[error("skewness is undefined: sample variance is zero")]
    ZeroVariance,
    #[error("metric M_k is undefined: k-th raw moment is zero")]
    ZeroMoment,
    #[error("even-order real root of a negative value ({value})")]
    NegativeEvenRoot { value: f64 },
    #[error("bias correction requires at least one update")]
    BiasCorrectionBeforeFirstUpdate,
}

/// A nonempty batch of finite scalar samples (gradient components, random
/// draws, ...). Construction is the single validation point; every moment
/// routine below can then assume a usable set.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    values: Vec<f64>,
}

impl SampleSet {
    pub fn new(values: Vec<f64>) -> Result<Self, MomentError> {
        if values.is_empty() {
            return Err(MomentError::EmptySampleSet);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(MomentError::NonFiniteSample { index, value });
            }
        }
        Ok(SampleSet { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mean of the k-th powers, (1/N) sum Y_j^k. `k = 1` is the sample mean.
pub fn raw_sample_moment(samples: &SampleSet, k: u32) -> f64 {
    assert!(k >= 1, "moment order must be at least 1");
    let n = samples.len() as f64;
    samples.values().iter().map(|y| y.powi(k as i32)).sum::<f64>() / n
}

pub fn sample_mean(samples: &SampleSet) -> f64 {
    raw_sample_moment(samples, 1)
}

/// Population variance via raw moments. The subtraction can land an epsilon
/// below zero for near-constant data; clamp so callers can rely on `>= 0`.
pub fn sample_variance(samples: &SampleSet) -> f64 {
    let mean = sample_mean(samples);
    let raw2 = raw_sample_moment(samples, 2);
    (raw2 - mean * mean).max(0.0)
}

/// Skewness from raw moments: (E[Y^3] - 3 E[Y] Var - E[Y]^3) / Var^(3/2),
/// all population-normalized. Undefined when the variance vanishes.
pub fn sample_skewness(samples: &SampleSet) -> Result<f64, MomentError> {
    let variance = sample_variance(samples);
    if variance <= 0.0 {
        return Err(MomentError::ZeroVariance);
    }
    let mean = sample_mean(samples);
    let raw3 = raw_sample_moment(samples, 3);
    let third_central = raw3 - 3.0 * mean * variance - mean.powi(3);
    Ok(third_central / variance.powf(1.5))
}

/// Which real k-th root to take when the radicand may be negative.
///
/// `Naive` mirrors what a plain `x.powf(1.0 / k)` does: any negative
/// radicand (the order being odd does not help) comes back NaN. `Signed`
/// extends odd roots over the whole line as sign(x) |x|^(1/k) and treats a
/// negative radicand under an even root as a domain error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootPolicy {
    Naive,
    Signed,
}

/// Real k-th root under the chosen policy. `k = 1` is the identity either
/// way (the exponent 1/k is exactly 1.0).
pub fn kth_root(x: f64, k: u32, policy: RootPolicy) -> Result<f64, MomentError> {
    assert!(k >= 1, "root order must be at least 1");
    let exponent = 1.0 / k as f64;
    match policy {
        RootPolicy::Naive => Ok(x.powf(exponent)),
        RootPolicy::Signed => {
            if k % 2 == 1 {
                if x < 0.0 {
                    Ok(-(-x).powf(exponent))
                } else {
                    Ok(x.powf(exponent))
                }
            } else if x < 0.0 {
                Err(MomentError::NegativeEvenRoot { value: x })
            } else {
                Ok(x.powf(exponent))
            }
        }
    }
}

/// The step-size ratio M_k = |E[Y] / (E[Y^k])^(1/k)|.
///
/// For even k the power-mean inequality pins this into [0, 1]; for odd k the
/// k-th raw moment keeps its sign, the signed real root is used, and the
/// ratio can exceed 1 on skewed data. A vanishing k-th moment leaves the
/// ratio undefined.
pub fn metric_mk(samples: &SampleSet, k: u32) -> Result<f64, MomentError> {
    assert!(k >= 1, "metric order must be at least 1");
    let raw_k = raw_sample_moment(samples, k);
    if raw_k == 0.0 {
        return Err(MomentError::ZeroMoment);
    }
    // Even orders have raw_k > 0 here, so the signed root never errors.
    let root = kth_root(raw_k, k, RootPolicy::Signed)?;
    Ok((sample_mean(samples) / root).abs())
}

/// Exponential moving average v <- beta v + (1 - beta) u with an update
/// counter for bias correction. NaN inputs propagate through `value`; they
/// are a signal for the caller, not an error here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaAccumulator {
    value: f64,
    beta: f64,
    step: u64,
}

impl EmaAccumulator {
    pub fn new(beta: f64) -> Self {
        assert!(
            (0.0..1.0).contains(&beta),
            "EMA decay must lie in [0, 1), got {beta}"
        );
        EmaAccumulator {
            value: 0.0,
            beta,
            step: 0,
        }
    }

    pub fn update(mut self, input: f64) -> Self {
        self.value = self.beta * self.value + (1.0 - self.beta) * input;
        self.step += 1;
        self
    }

    /// value / (1 - beta^t). Before the first update the denominator is
    /// zero and the correction is undefined.
    pub fn bias_corrected(&self) -> Result<f64, MomentError> {
        if self.step == 0 {
            return Err(MomentError::BiasCorrectionBeforeFirstUpdate);
        }
        Ok(self.value / (1.0 - self.beta.powi(self.step as i32)))
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Direct-summation form of the EMA of k-th powers over a full history:
/// (1 - beta) * sum_{i=0}^{t-1} beta^i * g_{t-i}^k.
///
/// This is the verification route for chained [`EmaAccumulator::update`]
/// calls and deliberately shares no code with the recurrence.
pub fn closed_form_ema(history: &[f64], beta: f64, k: u32) -> f64 {
    assert!(!history.is_empty(), "history must be nonempty");
    assert!(
        (0.0..1.0).contains(&beta),
        "EMA decay must lie in [0, 1), got {beta}"
    );
    let mut sum = 0.0;
    let mut weight = 1.0; // beta^i, newest term first
    for &g in history.iter().rev() {
        sum += weight * g.powi(k as i32);
        weight *= beta;
    }
    (1.0 - beta) * sum
}

/// One-stop moment summary of a sample set: mean, population variance,
/// requested raw moments (order 1 always included), skewness when defined,
/// and M_k for every requested order where it is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mean: f64,
    pub variance: f64,
    pub raw_moments: BTreeMap<u32, f64>,
    pub skewness: Option<f64>,
    pub metric: BTreeMap<u32, f64>,
}

impl MomentSummary {
    pub fn from_samples(samples: &SampleSet, orders: &[u32]) -> Self {
        let mean = sample_mean(samples);
        let variance = sample_variance(samples);
        let mut raw_moments = BTreeMap::new();
        raw_moments.insert(1, mean);
        let mut metric = BTreeMap::new();
        for &k in orders {
            raw_moments.insert(k, raw_sample_moment(samples, k));
            if let Ok(m) = metric_mk(samples, k) {
                metric.insert(k, m);
            }
        }
        MomentSummary {
            mean,
            variance,
            raw_moments,
            skewness: sample_skewness(samples).ok(),
            metric,
        }
    }
}
