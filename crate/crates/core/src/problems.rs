//! Objective interface and analytic large-scale benchmark functions.

use std::fmt;
use std::sync::Arc;

use crate::error::ConfigError;

/// Box-constrained search space.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ConfigError> {
        let mut err = ConfigError::default();
        if lower.is_empty() {
            err.push("domain", "dimension must be at least 1");
        }
        if lower.len() != upper.len() {
            err.push(
                "domain",
                format!(
                    "lower has {} bounds, upper has {}",
                    lower.len(),
                    upper.len()
                ),
            );
        }
        for (d, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                err.push(
                    "domain",
                    format!("dimension {d}: need finite lower < upper, got [{lo}, {hi}]"),
                );
            }
        }
        err.into_result()?;
        Ok(Self { lower, upper })
    }

    /// The same interval `[lower, upper]` in every dimension.
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self, ConfigError> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// True iff every coordinate lies inside its closed interval.
    ///
    /// # Panics
    ///
    /// Panics if `x.len()` differs from the domain dimension.
    pub fn contains(&self, x: &[f64]) -> bool {
        assert_eq!(x.len(), self.dim(), "point dimension does not match domain");
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

/// Free-function form of [`SearchDomain::contains`].
pub fn clamp_check(domain: &SearchDomain, x: &[f64]) -> bool {
    domain.contains(x)
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A named, deterministic objective over a search domain (minimization).
#[derive(Clone)]
pub struct Objective {
    name: String,
    domain: SearchDomain,
    eval: Arc<EvalFn>,
    known_optimum: Option<f64>,
}

impl Objective {
    pub fn new<F>(name: impl Into<String>, domain: SearchDomain, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            domain,
            eval: Arc::new(eval),
            known_optimum: None,
        }
    }

    pub fn with_known_optimum(mut self, value: f64) -> Self {
        self.known_optimum = Some(value);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &SearchDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn known_optimum(&self) -> Option<f64> {
        self.known_optimum
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        (self.eval)(x)
    }
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("known_optimum", &self.known_optimum)
            .finish()
    }
}

pub const BENCHMARK_NAMES: [&str; 6] = [
    "sphere",
    "elliptic",
    "rastrigin",
    "ackley",
    "rosenbrock",
    "schwefel12",
];

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Weights `(10^6)^((d-1)/(D-1))` of the high-conditioned elliptic function.
fn elliptic_weights(dim: usize) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    (0..dim)
        .map(|d| 1e6f64.powf(d as f64 / (dim - 1) as f64))
        .collect()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    x.iter()
        .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos() + 10.0)
        .sum()
}

pub fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sum_sq: f64 = x.iter().map(|v| v * v).sum();
    let sum_cos: f64 = x
        .iter()
        .map(|v| (2.0 * std::f64::consts::PI * v).cos())
        .sum();
    // Written as two nonnegative terms so the optimum evaluates to exactly 0.
    20.0 * (1.0 - (-0.2 * (sum_sq / n).sqrt()).exp()) + (1f64.exp() - (sum_cos / n).exp())
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

/// Schwefel's problem 1.2: sum of squared prefix sums.
pub fn schwefel12(x: &[f64]) -> f64 {
    let mut prefix = 0.0;
    let mut total = 0.0;
    for v in x {
        prefix += v;
        total += prefix * prefix;
    }
    total
}

/// Builds one of the analytic stand-in benchmarks with its conventional domain.
pub fn make_benchmark(name: &str, dim: usize) -> Result<Objective, ConfigError> {
    let mut err = ConfigError::default();
    if dim == 0 {
        err.push("dim", "must be at least 1");
    }
    if name == "rosenbrock" && dim == 1 {
        err.push("dim", "rosenbrock requires at least 2 dimensions");
    }
    if !BENCHMARK_NAMES.contains(&name) {
        err.push(
            "problem",
            format!(
                "unknown benchmark '{name}', expected one of {}",
                BENCHMARK_NAMES.join(", ")
            ),
        );
    }
    err.into_result()?;

    let obj = match name {
        "sphere" => Objective::new(name, SearchDomain::uniform(dim, -100.0, 100.0)?, sphere),
        "elliptic" => {
            let weights = elliptic_weights(dim);
            Objective::new(name, SearchDomain::uniform(dim, -100.0, 100.0)?, move |x| {
                x.iter().zip(&weights).map(|(v, w)| w * v * v).sum()
            })
        }
        "rastrigin" => Objective::new(name, SearchDomain::uniform(dim, -5.12, 5.12)?, rastrigin),
        "ackley" => Objective::new(name, SearchDomain::uniform(dim, -32.0, 32.0)?, ackley),
        "rosenbrock" => Objective::new(name, SearchDomain::uniform(dim, -30.0, 30.0)?, rosenbrock),
        "schwefel12" => {
            Objective::new(name, SearchDomain::uniform(dim, -100.0, 100.0)?, schwefel12)
        }
        _ => unreachable!(),
    };
    Ok(obj.with_known_optimum(0.0))
}

/// The point where a benchmark attains its known optimum.
pub fn optimum_location(name: &str, dim: usize) -> Option<Vec<f64>> {
    match name {
        "rosenbrock" => Some(vec![1.0; dim]),
        n if BENCHMARK_NAMES.contains(&n) => Some(vec![0.0; dim]),
        _ => None,
    }
}
