//! Run configuration: a flat key-value file merged with overrides and
//! documented defaults, then validated as a whole.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::optimizer::{InertiaSource, DEFAULT_PHI};
use crate::problems::BENCHMARK_NAMES;
use crate::ranking::DEFAULT_LAMBDA;

/// Smallest crowd that still forms four non-empty levels of two.
pub const MIN_SWARM: usize = 8;

pub const DEFAULT_NP: usize = 100;
pub const DEFAULT_DIM: usize = 50;
pub const DEFAULT_U: usize = 100;
pub const DEFAULT_SPARSITY: f64 = 0.1;
pub const DEFAULT_RELIABLE_FRACTION: f64 = 0.9;
pub const DEFAULT_MAX_EXPONENT: f64 = 30.0;
pub const DEFAULT_K: usize = 10;
pub const DEFAULT_BLOB_POINTS_TOTAL: usize = 1000;
pub const DEFAULT_BLOB_SPREAD: f64 = 0.1;
/// Fitness evaluations per decision variable.
pub const FES_PER_DIM: usize = 1000;
pub const OUT_ENV: &str = "CEC_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// `r ~ U(0, bv_i)` on every evaluation.
    Positive,
    /// `r ~ U(-bv_i, 0)` on every evaluation.
    Negative,
    /// Worker `i` clusters a copy of the data with `i` points replaced.
    ClusteringReplacement,
    /// Every worker evaluates exactly.
    None,
}

impl NoiseMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(Self::Positive),
            "negative" => Some(Self::Negative),
            "clustering-replacement" | "replacement" => Some(Self::ClusteringReplacement),
            "none" => Some(Self::None),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Negative => "negative",
            Self::ClusteringReplacement => "clustering-replacement",
            Self::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        columns: (usize, usize),
        has_header: bool,
    },
    Blobs {
        clusters: usize,
        points_per_cluster: usize,
        spread: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Benchmark { name: String, dim: usize },
    Clustering { k: usize, source: DataSource },
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Benchmark { dim, .. } => *dim,
            ProblemSpec::Clustering { k, .. } => 2 * k,
        }
    }

    pub fn is_clustering(&self) -> bool {
        matches!(self, ProblemSpec::Clustering { .. })
    }
}

/// Fully resolved experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub np: usize,
    pub max_fes: usize,
    pub u: usize,
    pub sparsity: f64,
    pub phi: f64,
    pub lambda: f64,
    pub noise_mode: NoiseMode,
    pub detection: bool,
    pub reliable_fraction: f64,
    pub max_exponent: f64,
    pub inertia_source: InertiaSource,
    pub reevaluate_elites: bool,
    pub log_tuples: bool,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Defaults on a benchmark problem.
    pub fn benchmark(name: &str, dim: usize) -> Self {
        RawConfig {
            problem: Some(name.to_string()),
            dim: Some(dim),
            ..RawConfig::default()
        }
        .resolve()
        .unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut err = ConfigError::default();
        match &self.problem {
            ProblemSpec::Benchmark { name, dim } => {
                if !BENCHMARK_NAMES.contains(&name.as_str()) {
                    err.push(
                        "problem",
                        format!(
                            "unknown problem '{name}', expected clustering or one of {}",
                            BENCHMARK_NAMES.join(", ")
                        ),
                    );
                }
                if *dim == 0 || (name == "rosenbrock" && *dim < 2) {
                    err.push(
                        "dim",
                        format!("must be >= 1 (>= 2 for rosenbrock), got {dim}"),
                    );
                }
                if self.noise_mode == NoiseMode::ClusteringReplacement {
                    err.push(
                        "noise_mode",
                        "clustering-replacement requires problem = clustering",
                    );
                }
            }
            ProblemSpec::Clustering { k, source } => {
                if *k == 0 {
                    err.push("k", "must be >= 1");
                }
                if let DataSource::Blobs {
                    clusters,
                    points_per_cluster,
                    spread,
                    ..
                } = source
                {
                    if *clusters == 0 {
                        err.push("blob_clusters", "must be >= 1");
                    }
                    if *points_per_cluster == 0 {
                        err.push("blob_points", "must be >= 1");
                    }
                    if !(*spread >= 0.0 && spread.is_finite()) {
                        err.push(
                            "blob_spread",
                            format!("must be a nonnegative real, got {spread}"),
                        );
                    }
                    if clusters * points_per_cluster < *k {
                        err.push(
                            "k",
                            format!(
                                "must not exceed the {} data points",
                                clusters * points_per_cluster
                            ),
                        );
                    }
                    if self.noise_mode == NoiseMode::ClusteringReplacement
                        && clusters * points_per_cluster < self.np
                    {
                        err.push(
                            "np",
                            format!(
                                "replacement noise needs at least np = {} data points, got {}",
                                self.np,
                                clusters * points_per_cluster
                            ),
                        );
                    }
                }
            }
        }
        if self.np < MIN_SWARM {
            err.push("np", format!("must be >= {MIN_SWARM}, got {}", self.np));
        }
        if self.max_fes < self.np {
            err.push(
                "fes",
                format!("must be >= np ({}), got {}", self.np, self.max_fes),
            );
        }
        if self.u == 0 {
            err.push("u", "must be >= 1");
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            err.push(
                "sparsity",
                format!("must be in (0, 1], got {}", self.sparsity),
            );
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            err.push("phi", format!("must be a positive real, got {}", self.phi));
        }
        if !(self.lambda > 0.0 && self.lambda <= 0.5) {
            err.push(
                "lambda",
                format!("must be in (0, 0.5], got {}", self.lambda),
            );
        }
        if !(self.reliable_fraction > 0.0 && self.reliable_fraction <= 1.0) {
            err.push(
                "reliable_fraction",
                format!("must be in (0, 1], got {}", self.reliable_fraction),
            );
        }
        if !(self.max_exponent > 0.0 && self.max_exponent <= 1023.0) {
            err.push(
                "max_exponent",
                format!("must be in (0, 1023], got {}", self.max_exponent),
            );
        }
        if self.seeds.is_empty() {
            err.push("seeds", "at least one seed is required");
        }
        err.into_result()
    }

    /// The flat key-value form of this configuration.
    pub fn to_raw(&self) -> RawConfig {
        let mut raw = RawConfig {
            np: Some(self.np),
            fes: Some(self.max_fes),
            u: Some(self.u),
            sparsity: Some(self.sparsity),
            phi: Some(self.phi),
            lambda: Some(self.lambda),
            noise_mode: Some(self.noise_mode.as_str().to_string()),
            detection: Some(self.detection),
            reliable_fraction: Some(self.reliable_fraction),
            max_exponent: Some(self.max_exponent),
            inertia_source: Some(self.inertia_source),
            reevaluate_elites: Some(self.reevaluate_elites),
            log_tuples: Some(self.log_tuples),
            seeds: Some(format_seeds(&self.seeds)),
            out: Some(self.out_dir.clone()),
            ..RawConfig::default()
        };
        match &self.problem {
            ProblemSpec::Benchmark { name, dim } => {
                raw.problem = Some(name.clone());
                raw.dim = Some(*dim);
            }
            ProblemSpec::Clustering { k, source } => {
                raw.problem = Some("clustering".into());
                raw.k = Some(*k);
                match source {
                    DataSource::Csv {
                        path,
                        columns,
                        has_header,
                    } => {
                        raw.data = Some(path.clone());
                        raw.data_columns = Some([columns.0, columns.1]);
                        raw.data_header = Some(*has_header);
                    }
                    DataSource::Blobs {
                        clusters,
                        points_per_cluster,
                        spread,
                        seed,
                    } => {
                        raw.blob_clusters = Some(*clusters);
                        raw.blob_points = Some(*points_per_cluster);
                        raw.blob_spread = Some(*spread);
                        raw.blob_seed = Some(*seed);
                    }
                }
            }
        }
        raw
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("flat config serializes")
    }
}

/// Unresolved configuration: every key optional. Used for the config file
/// and for command-line overrides alike.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub problem: Option<String>,
    pub dim: Option<usize>,
    pub k: Option<usize>,
    pub data: Option<PathBuf>,
    pub data_columns: Option<[usize; 2]>,
    pub data_header: Option<bool>,
    pub blob_clusters: Option<usize>,
    pub blob_points: Option<usize>,
    pub blob_spread: Option<f64>,
    pub blob_seed: Option<u64>,
    pub np: Option<usize>,
    pub fes: Option<usize>,
    pub u: Option<usize>,
    pub sparsity: Option<f64>,
    pub phi: Option<f64>,
    pub lambda: Option<f64>,
    pub noise_mode: Option<String>,
    pub detection: Option<bool>,
    pub reliable_fraction: Option<f64>,
    pub max_exponent: Option<f64>,
    pub inertia_source: Option<InertiaSource>,
    pub reevaluate_elites: Option<bool>,
    pub log_tuples: Option<bool>,
    pub seeds: Option<String>,
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl RawConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::single("config", e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_toml_str(&text)?)
    }

    /// Keys set in `top` win over keys set in `self`.
    pub fn merged_with(mut self, top: RawConfig) -> Self {
        overlay!(self, top;
            problem, dim, k, data, data_columns, data_header, blob_clusters, blob_points,
            blob_spread, blob_seed, np, fes, u, sparsity, phi, lambda, noise_mode, detection,
            reliable_fraction, max_exponent, inertia_source, reevaluate_elites, log_tuples,
            seeds, out,
        );
        self
    }

    /// Fills unset keys from defaults and validates the result.
    pub fn resolve(self) -> Result<RunConfig, ConfigError> {
        let mut err = ConfigError::default();
        let problem_name = self.problem.unwrap_or_else(|| "sphere".into());
        let problem = if problem_name == "clustering" {
            let k = self.k.unwrap_or(DEFAULT_K);
            let source = match self.data {
                Some(path) => {
                    let c = self.data_columns.unwrap_or([0, 1]);
                    DataSource::Csv {
                        path,
                        columns: (c[0], c[1]),
                        has_header: self.data_header.unwrap_or(false),
                    }
                }
                None => {
                    let clusters = self.blob_clusters.unwrap_or(k);
                    DataSource::Blobs {
                        clusters,
                        points_per_cluster: self
                            .blob_points
                            .unwrap_or((DEFAULT_BLOB_POINTS_TOTAL / clusters.max(1)).max(1)),
                        spread: self.blob_spread.unwrap_or(DEFAULT_BLOB_SPREAD),
                        seed: self.blob_seed.unwrap_or(0),
                    }
                }
            };
            ProblemSpec::Clustering { k, source }
        } else {
            ProblemSpec::Benchmark {
                name: problem_name,
                dim: self.dim.unwrap_or(DEFAULT_DIM),
            }
        };

        let noise_mode = match self.noise_mode.as_deref() {
            None if problem.is_clustering() => NoiseMode::ClusteringReplacement,
            None => NoiseMode::Positive,
            Some(s) => NoiseMode::parse(s).unwrap_or_else(|| {
                err.push(
                    "noise_mode",
                    format!("unknown mode '{s}', expected positive, negative, clustering-replacement or none"),
                );
                NoiseMode::Positive
            }),
        };

        let seeds = match self.seeds.as_deref() {
            None => vec![1],
            Some(s) => parse_seeds(s).unwrap_or_else(|m| {
                err.push("seeds", m);
                Vec::new()
            }),
        };

        let out_dir = self
            .out
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("cec-out"));

        let dim = problem.dim();
        let config = RunConfig {
            max_fes: self.fes.unwrap_or(FES_PER_DIM * dim),
            problem,
            np: self.np.unwrap_or(DEFAULT_NP),
            u: self.u.unwrap_or(DEFAULT_U),
            sparsity: self.sparsity.unwrap_or(DEFAULT_SPARSITY),
            phi: self.phi.unwrap_or(DEFAULT_PHI),
            lambda: self.lambda.unwrap_or(DEFAULT_LAMBDA),
            noise_mode,
            detection: self.detection.unwrap_or(true),
            reliable_fraction: self.reliable_fraction.unwrap_or(DEFAULT_RELIABLE_FRACTION),
            max_exponent: self.max_exponent.unwrap_or(DEFAULT_MAX_EXPONENT),
            inertia_source: self.inertia_source.unwrap_or_default(),
            reevaluate_elites: self.reevaluate_elites.unwrap_or(false),
            log_tuples: self.log_tuples.unwrap_or(false),
            seeds,
            out_dir,
        };
        if let Err(e) = config.validate() {
            err.violations.extend(e.violations);
        }
        err.into_result()?;
        Ok(config)
    }
}

/// Parses `"1..25"`, `"3"` or comma-separated mixtures such as `"1,4..6"`.
/// Ranges are inclusive.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a
                .trim()
                .parse()
                .map_err(|_| format!("bad seed range '{part}'"))?;
            let b: u64 = b
                .trim()
                .parse()
                .map_err(|_| format!("bad seed range '{part}'"))?;
            if b < a {
                return Err(format!("empty seed range '{part}'"));
            }
            seeds.extend(a..=b);
        } else {
            seeds.push(part.parse().map_err(|_| format!("bad seed '{part}'"))?);
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}

/// Compact form of a seed list, collapsing consecutive runs into ranges.
pub fn format_seeds(seeds: &[u64]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < seeds.len() {
        let mut j = i;
        while j + 1 < seeds.len() && seeds[j + 1] == seeds[j] + 1 {
            j += 1;
        }
        parts.push(if j > i {
            format!("{}..{}", seeds[i], seeds[j])
        } else {
            seeds[i].to_string()
        });
        i = j + 1;
    }
    parts.join(",")
}
