//! Environmental uncertainty: per-worker noise bounds, noise draws, noisy
//! evaluation and the fitness-evaluation budget.

use rand::Rng;

use crate::error::ConfigError;
use crate::problems::Objective;

/// Smallest exponent the bound schedule emits. Anything lower would be a
/// subnormal double; the schedule clamps to `2^-1022` instead.
pub const MIN_BOUND_EXPONENT: f64 = -1022.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseSign {
    /// `r ~ U(0, bv)`
    Positive,
    /// `r ~ U(-bv, 0)`
    Negative,
}

/// A worker's uncertainty: the magnitude bound `|bv|` and its sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintySpec {
    pub bound_value: f64,
    pub sign: NoiseSign,
}

impl UncertaintySpec {
    pub fn new(bound_value: f64, sign: NoiseSign) -> Self {
        assert!(
            bound_value.is_finite() && bound_value >= 0.0,
            "bound value must be finite and nonnegative"
        );
        Self { bound_value, sign }
    }

    pub fn noise_free() -> Self {
        Self::new(0.0, NoiseSign::Positive)
    }
}

/// Number of reliable workers `floor(n * reliable_fraction)`.
pub fn reliable_count(n_workers: usize, reliable_fraction: f64) -> usize {
    // The epsilon keeps products such as 100 * 0.57 = 56.999... on the
    // integer the caller meant.
    ((n_workers as f64 * reliable_fraction) + 1e-9).floor() as usize
}

/// Per-worker bound values `|bv_1| .. |bv_n|`.
///
/// Workers `1..=m` with `m = floor(n * reliable_fraction)` get
/// `2^-(m - i)`; workers `m+1..=n` get `2^((i - m) * max_exponent / (n - m))`,
/// growing to `2^max_exponent` for the last worker.
pub fn bound_schedule(
    n_workers: usize,
    reliable_fraction: f64,
    max_exponent: f64,
) -> Result<Vec<f64>, ConfigError> {
    let mut err = ConfigError::default();
    if n_workers < 2 {
        err.push("np", "bound schedule needs at least 2 workers");
    }
    if !(reliable_fraction > 0.0 && reliable_fraction <= 1.0) {
        err.push(
            "reliable_fraction",
            format!("must be in (0, 1], got {reliable_fraction}"),
        );
    }
    if !(max_exponent > 0.0 && max_exponent.is_finite()) {
        err.push(
            "max_exponent",
            format!("must be a positive finite real, got {max_exponent}"),
        );
    }
    err.into_result()?;

    let m = reliable_count(n_workers, reliable_fraction).min(n_workers);
    let unreliable = n_workers - m;
    if unreliable == 0 {
        log::warn!(
            "{n_workers} workers with reliable fraction {reliable_fraction} leaves no unreliable worker; all bounds are <= 1"
        );
    }
    let bounds = (1..=n_workers)
        .map(|i| {
            let exponent = if i <= m {
                -((m - i) as f64)
            } else {
                (i - m) as f64 * max_exponent / unreliable as f64
            };
            exponent.max(MIN_BOUND_EXPONENT).exp2()
        })
        .collect();
    Ok(bounds)
}

/// One fresh noise sample for `spec`.
pub fn draw_noise<R: Rng + ?Sized>(spec: &UncertaintySpec, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    match spec.sign {
        NoiseSign::Positive => u * spec.bound_value,
        NoiseSign::Negative => -u * spec.bound_value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("fitness evaluation budget of {max_fes} exhausted")]
pub struct BudgetExhausted {
    pub max_fes: usize,
}

/// Counter of consumed fitness evaluations against a hard cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalBudget {
    max_fes: usize,
    used_fes: usize,
}

impl EvalBudget {
    pub fn new(max_fes: usize) -> Self {
        Self {
            max_fes,
            used_fes: 0,
        }
    }

    pub fn max_fes(&self) -> usize {
        self.max_fes
    }

    pub fn used_fes(&self) -> usize {
        self.used_fes
    }

    pub fn remaining(&self) -> usize {
        self.max_fes - self.used_fes
    }

    pub fn is_exhausted(&self) -> bool {
        self.used_fes >= self.max_fes
    }

    pub fn try_consume(&mut self) -> Result<(), BudgetExhausted> {
        if self.is_exhausted() {
            return Err(BudgetExhausted {
                max_fes: self.max_fes,
            });
        }
        self.used_fes += 1;
        Ok(())
    }
}

/// Result of one worker-side evaluation. `true_fitness` is diagnostic only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyEvaluation {
    pub fitness: f64,
    pub true_fitness: f64,
}

/// `F = f(x) + r` with a fresh draw of `r`; consumes one evaluation.
pub fn noisy_eval<R: Rng + ?Sized>(
    objective: &Objective,
    spec: &UncertaintySpec,
    x: &[f64],
    budget: &mut EvalBudget,
    rng: &mut R,
) -> Result<NoisyEvaluation, BudgetExhausted> {
    budget.try_consume()?;
    let true_fitness = objective.eval(x);
    let fitness = true_fitness + draw_noise(spec, rng);
    Ok(NoisyEvaluation {
        fitness,
        true_fitness,
    })
}
