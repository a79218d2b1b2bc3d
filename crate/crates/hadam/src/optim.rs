//! The order-k moment optimizer and its independently coded k = 2 reference.
//!
//! The update keeps two exponential moving averages per parameter: the mean
//! gradient m and the k-th gradient power V. The step is
//!
//! ```text
//! m_t = b1 m_{t-1} + (1 - b1) g_t
//! V_t = b2 V_{t-1} + (1 - b2) g_t^k
//! x_t = x_{t-1} - a * root_k(1 - b2^t) / (1 - b1^t) * m_t / (root_k(V_t) + eps)
//! ```
//!
//! elementwise, with `root_k` the real k-th root under the configured
//! [`RootPolicy`]. For odd k the accumulator V can go negative and the naive
//! root then produces NaN; that is deliberately left visible. Divergence is
//! signaled through [`StepDiagnostics`], never repaired.

use thiserror::Error;

use crate::moments::{kth_root, RootPolicy};

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
}

/// Where the bias-correction factors are applied.
///
/// `Folded` multiplies the step size by root_k(1 - b2^t) / (1 - b1^t) and
/// divides by root_k(V_t) + eps. `Explicit` first forms the corrected
/// averages m_hat = m / (1 - b1^t) and V_hat = V / (1 - b2^t), then divides
/// by root_k(V_hat) + eps. The two agree when eps = 0 and differ (slightly)
/// otherwise, because eps lands next to differently scaled roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasMode {
    Folded,
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HAdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Moment order k >= 2. Even orders keep V nonnegative; odd orders are
    /// admitted but flagged by [`HAdamConfig::odd_order`].
    pub order: u32,
    /// Added to the root of V after the root is taken, so the k = 2 case
    /// with `Folded` matches the classic update written with eps outside
    /// the square root.
    pub epsilon: f64,
    pub root_policy: RootPolicy,
    pub bias_mode: BiasMode,
}

impl Default for HAdamConfig {
    fn default() -> Self {
        HAdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            order: 2,
            epsilon: 1e-8,
            root_policy: RootPolicy::Naive,
            bias_mode: BiasMode::Folded,
        }
    }
}

impl HAdamConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(OptimError::InvalidConfig(format!(
                "step size must be positive and finite, got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(OptimError::InvalidConfig(format!(
                "beta1 must lie in [0, 1), got {}",
                self.beta1
            )));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(OptimError::InvalidConfig(format!(
                "beta2 must lie in [0, 1), got {}",
                self.beta2
            )));
        }
        if self.order < 2 {
            return Err(OptimError::InvalidConfig(format!(
                "moment order must be at least 2, got {}",
                self.order
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(OptimError::InvalidConfig(format!(
                "epsilon must be nonnegative and finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Odd orders can drive V negative and, under the naive root, produce
    /// NaN steps. Callers surface this as a warning, not an error.
    pub fn odd_order(&self) -> bool {
        self.order % 2 == 1
    }
}

/// Per-run optimizer state. Both accumulators start at zero; `t` counts
/// completed steps, so the first call sees t = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub x: Vec<f64>,
}

pub fn init_state(dim: usize, x0: Vec<f64>) -> Result<OptimizerState, OptimError> {
    if x0.len() != dim {
        return Err(OptimError::DimMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    Ok(OptimizerState {
        m: vec![0.0; dim],
        v: vec![0.0; dim],
        t: 0,
        x: x0,
    })
}

/// What one step did. `nan_components` counts non-finite entries of the
/// step itself; `diverged` is set when the step, the updated parameters, or
/// either moment accumulator contains a non-finite value (an overflowed
/// g^k shows up as Inf in V and counts as genuine divergence even when the
/// resulting step stays bounded).
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub delta: Vec<f64>,
    pub max_abs_delta: f64,
    pub diverged: bool,
    pub nan_components: usize,
}

fn diagnostics(delta: Vec<f64>, state: &OptimizerState) -> StepDiagnostics {
    let nan_components = delta.iter().filter(|d| !d.is_finite()).count();
    let any_nan = delta.iter().any(|d| d.is_nan());
    let max_abs_delta = if any_nan {
        f64::NAN
    } else {
        delta.iter().fold(0.0f64, |acc, d| acc.max(d.abs()))
    };
    let diverged = nan_components > 0
        || state.x.iter().any(|v| !v.is_finite())
        || state.m.iter().any(|v| !v.is_finite())
        || state.v.iter().any(|v| !v.is_finite());
    StepDiagnostics {
        delta,
        max_abs_delta,
        diverged,
        nan_components,
    }
}

/// One update of the order-k optimizer. Dimension mismatches are programmer
/// errors; NaN and Inf flow through into the diagnostics instead of
/// erroring.
#[allow(clippy::needless_range_loop)] // lockstep update over m, v, x, delta
pub fn hadam_step(
    state: &mut OptimizerState,
    grad: &[f64],
    cfg: &HAdamConfig,
) -> StepDiagnostics {
    assert_eq!(
        grad.len(),
        state.x.len(),
        "gradient dimension must match state"
    );
    let k = cfg.order;
    state.t += 1;
    let t = state.t as i32;
    for i in 0..state.x.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i].powi(k as i32);
    }
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let mut delta = vec![0.0; state.x.len()];
    match cfg.bias_mode {
        BiasMode::Folded => {
            // bias2 is in (0, 1], so this root never errors under either policy.
            let root_bias2 = kth_root(bias2, k, cfg.root_policy).unwrap_or(f64::NAN);
            let coef = cfg.alpha * root_bias2 / bias1;
            for i in 0..state.x.len() {
                let root_v = kth_root(state.v[i], k, cfg.root_policy).unwrap_or(f64::NAN);
                let d = -coef * state.m[i] / (root_v + cfg.epsilon);
                delta[i] = d;
                state.x[i] += d;
            }
        }
        BiasMode::Explicit => {
            for i in 0..state.x.len() {
                let m_hat = state.m[i] / bias1;
                let v_hat = state.v[i] / bias2;
                let root_v = kth_root(v_hat, k, cfg.root_policy).unwrap_or(f64::NAN);
                let d = -cfg.alpha * m_hat / (root_v + cfg.epsilon);
                delta[i] = d;
                state.x[i] += d;
            }
        }
    }
    diagnostics(delta, state)
}

/// Classic first/second-moment update, written out on its own so it can
/// serve as an oracle for the k = 2 specialization above. No k-th-root
/// machinery: squares and square roots only.
#[allow(clippy::needless_range_loop)] // lockstep update over m, v, x, delta
pub fn adam_reference_step(
    state: &mut OptimizerState,
    grad: &[f64],
    cfg: &HAdamConfig,
) -> StepDiagnostics {
    assert_eq!(cfg.order, 2, "the reference update is second-order only");
    assert_eq!(
        grad.len(),
        state.x.len(),
        "gradient dimension must match state"
    );
    state.t += 1;
    let t = state.t as i32;
    for i in 0..state.x.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    }
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let mut delta = vec![0.0; state.x.len()];
    match cfg.bias_mode {
        BiasMode::Folded => {
            let coef = cfg.alpha * bias2.sqrt() / bias1;
            for i in 0..state.x.len() {
                let d = -coef * state.m[i] / (state.v[i].sqrt() + cfg.epsilon);
                delta[i] = d;
                state.x[i] += d;
            }
        }
        BiasMode::Explicit => {
            for i in 0..state.x.len() {
                let m_hat = state.m[i] / bias1;
                let v_hat = state.v[i] / bias2;
                let d = -cfg.alpha * m_hat / (v_hat.sqrt() + cfg.epsilon);
                delta[i] = d;
                state.x[i] += d;
            }
        }
    }
    diagnostics(delta, state)
}

/// Summary of how step magnitudes compare against the nominal step size.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBoundReport {
    /// Largest finite max|delta| / alpha over the trace.
    pub max_ratio: f64,
    /// 1-based step index where `max_ratio` occurred (0 when no step was finite).
    pub max_ratio_step: u64,
    /// First 1-based step whose ratio exceeded 1 + tolerance or was not finite.
    pub first_exceedance: Option<u64>,
    /// Steps whose ratio was NaN or infinite.
    pub nonfinite_steps: usize,
}

/// Scans a trace of step diagnostics for violations of the |delta| <= alpha
/// heuristic. Non-finite steps count as exceedances: whatever their true
/// magnitude was, it was not within the bound.
pub fn effective_step_bound_check(
    trace: &[StepDiagnostics],
    cfg: &HAdamConfig,
    tolerance: f64,
) -> StepBoundReport {
    assert!(!trace.is_empty(), "trace must be nonempty");
    let mut max_ratio = 0.0;
    let mut max_ratio_step = 0;
    let mut first_exceedance = None;
    let mut nonfinite_steps = 0;
    for (idx, diag) in trace.iter().enumerate() {
        let t = idx as u64 + 1;
        let ratio = diag.max_abs_delta / cfg.alpha;
        if !ratio.is_finite() {
            nonfinite_steps += 1;
            if first_exceedance.is_none() {
                first_exceedance = Some(t);
            }
            continue;
        }
        if ratio > max_ratio {
            max_ratio = ratio;
            max_ratio_step = t;
        }
        if ratio > 1.0 + tolerance && first_exceedance.is_none() {
            first_exceedance = Some(t);
        }
    }
    StepBoundReport {
        max_ratio,
        max_ratio_step,
        first_exceedance,
        nonfinite_steps,
    }
}
