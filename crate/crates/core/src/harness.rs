//! Multi-seed batches, parameter sweeps and their CSV artifacts.
//!
//! Output layout under the configured directory:
//!
//! ```text
//! config.toml                 effective configuration
//! summary.csv                 one row per seed plus an aggregate row
//! statistics.csv              mean/std/median/min/max per metric
//! convergence_mean.csv        per-generation means across seeds
//! convergence_seed<S>.csv     per-seed convergence log
//! detections_seed<S>.csv      per-seed detection events
//! tuples_seed<S>.csv          per-seed comparison tuples (when enabled)
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{RawConfig, RunConfig};
use crate::engine::{fmt_f64, Problem, RunResult, Simulation};
use crate::error::{ConfigError, Error, Result};

/// Reads an optional config file, applies overrides, validates, and echoes
/// the effective configuration to the output directory.
pub fn parse_config(file: Option<&Path>, overrides: RawConfig) -> Result<RunConfig> {
    let base = match file {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    let config = base.merged_with(overrides).resolve()?;
    write_effective_config(&config)?;
    Ok(config)
}

pub fn write_effective_config(config: &RunConfig) -> Result<PathBuf> {
    create_dir(&config.out_dir)?;
    let path = config.out_dir.join("config.toml");
    fs::write(&path, config.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Summary statistics over a sample. `std` is the sample standard deviation
/// (zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n > 0, "statistics of an empty sample");
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            n,
            mean,
            std,
            median: median(values),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean convergence over the seeds that reached a given generation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRecord {
    pub generation: usize,
    pub runs: usize,
    pub fes: f64,
    pub best_fitness: f64,
    pub best_true_fitness: f64,
    pub alive: f64,
    pub layered_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct BatchSummary {
    pub config: RunConfig,
    /// In the order of `config.seeds`.
    pub runs: Vec<RunResult>,
    pub f_server: Stats,
    pub layered_accuracy: Stats,
    pub mean_curve: Vec<MeanRecord>,
}

impl BatchSummary {
    fn new(config: RunConfig, runs: Vec<RunResult>) -> Self {
        let f: Vec<f64> = runs.iter().map(|r| r.f_server).collect();
        let acc: Vec<f64> = runs.iter().map(RunResult::mean_layered_accuracy).collect();
        let mean_curve = mean_curve(&runs);
        Self {
            config,
            f_server: Stats::of(&f),
            layered_accuracy: Stats::of(&acc),
            mean_curve,
            runs,
        }
    }
}

fn mean_curve(runs: &[RunResult]) -> Vec<MeanRecord> {
    let longest = runs
        .iter()
        .map(|r| r.convergence_log.len())
        .max()
        .unwrap_or(0);
    (0..longest)
        .map(|g| {
            let rows: Vec<_> = runs
                .iter()
                .filter_map(|r| r.convergence_log.get(g))
                .collect();
            let n = rows.len() as f64;
            let mean = |f: &dyn Fn(&crate::engine::GenerationRecord) -> f64| {
                rows.iter().map(|r| f(r)).sum::<f64>() / n
            };
            MeanRecord {
                generation: rows[0].generation,
                runs: rows.len(),
                fes: mean(&|r| r.fes as f64),
                best_fitness: mean(&|r| r.best_fitness),
                best_true_fitness: mean(&|r| r.best_true_fitness),
                alive: mean(&|r| r.alive as f64),
                layered_accuracy: mean(&|r| r.layered_accuracy),
            }
        })
        .collect()
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(ConfigError::single("jobs", e.to_string())))
}

/// Runs every seed of `config` (up to `jobs` at a time, `0` for one per
/// core) and writes the batch artifacts. The problem is built and the
/// configuration checked before any run starts.
pub fn run_batch(config: &RunConfig, jobs: usize) -> Result<BatchSummary> {
    let problem = Problem::build(config)?;
    let summary = run_batch_in_memory(config, &problem, jobs)?;
    write_batch(&summary)?;
    Ok(summary)
}

/// Like [`run_batch`] but writes nothing.
pub fn run_batch_in_memory(
    config: &RunConfig,
    problem: &Problem,
    jobs: usize,
) -> Result<BatchSummary> {
    config.validate()?;
    let runs = pool(jobs)?.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| Simulation::initialize(config, problem, seed).map(Simulation::run_to_end))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(BatchSummary::new(config.clone(), runs))
}

pub const SUMMARY_HEADER: [&str; 7] = [
    "seed",
    "f_server",
    "mean_layered_accuracy",
    "fes_used",
    "generations",
    "detections",
    "status",
];

pub fn write_batch(summary: &BatchSummary) -> Result<()> {
    let dir = &summary.config.out_dir;
    create_dir(dir)?;
    write_effective_config(&summary.config)?;
    for r in &summary.runs {
        let s = r.seed;
        r.write_convergence_csv(create_file(&dir.join(format!("convergence_seed{s}.csv")))?)?;
        r.write_detections_csv(create_file(&dir.join(format!("detections_seed{s}.csv")))?)?;
        if summary.config.log_tuples {
            r.write_tuples_csv(create_file(&dir.join(format!("tuples_seed{s}.csv")))?)?;
        }
    }

    let mut csv = csv::Writer::from_writer(create_file(&dir.join("summary.csv"))?);
    csv.write_record(SUMMARY_HEADER)?;
    for r in &summary.runs {
        csv.write_record([
            r.seed.to_string(),
            fmt_f64(r.f_server),
            fmt_f64(r.mean_layered_accuracy()),
            r.fes_used.to_string(),
            r.generations.to_string(),
            r.detection_events.len().to_string(),
            r.termination.as_str().to_string(),
        ])?;
    }
    let col =
        |f: &dyn Fn(&RunResult) -> f64| Stats::of(&summary.runs.iter().map(f).collect::<Vec<_>>());
    let metrics = [
        ("f_server", summary.f_server),
        ("mean_layered_accuracy", summary.layered_accuracy),
        ("fes_used", col(&|r| r.fes_used as f64)),
        ("generations", col(&|r| r.generations as f64)),
        ("detections", col(&|r| r.detection_events.len() as f64)),
    ];
    csv.write_record(
        std::iter::once("mean".to_string())
            .chain(metrics.iter().map(|(_, s)| fmt_f64(s.mean)))
            .chain(std::iter::once(String::new())),
    )?;
    csv.flush().map_err(csv::Error::from)?;

    let mut csv = csv::Writer::from_writer(create_file(&dir.join("statistics.csv"))?);
    csv.write_record(["metric", "n", "mean", "std", "median", "min", "max"])?;
    for (name, s) in metrics {
        csv.write_record([
            name.to_string(),
            s.n.to_string(),
            fmt_f64(s.mean),
            fmt_f64(s.std),
            fmt_f64(s.median),
            fmt_f64(s.min),
            fmt_f64(s.max),
        ])?;
    }
    csv.flush().map_err(csv::Error::from)?;

    let mut csv = csv::Writer::from_writer(create_file(&dir.join("convergence_mean.csv"))?);
    csv.write_record([
        "generation",
        "runs",
        "fes",
        "best_F",
        "best_f_true",
        "alive",
        "layered_accuracy",
    ])?;
    for m in &summary.mean_curve {
        csv.write_record([
            m.generation.to_string(),
            m.runs.to_string(),
            fmt_f64(m.fes),
            fmt_f64(m.best_fitness),
            fmt_f64(m.best_true_fitness),
            fmt_f64(m.alive),
            fmt_f64(m.layered_accuracy),
        ])?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Sparsity,
    U,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sparsity" => Some(Self::Sparsity),
            "u" => Some(Self::U),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sparsity => "sparsity",
            Self::U => "u",
        }
    }
}

/// One batch of a sweep with the axis value it used.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub batch: BatchSummary,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    /// Mean layered accuracy never decreases along the given value order.
    pub accuracy_nondecreasing: bool,
}

/// Builds one configuration per axis value. For the `u` axis the value
/// `max` means `u = max_fes`, which disables detection in practice.
pub fn sweep_configs(
    template: &RunConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<Vec<(String, RunConfig)>> {
    let mut err = ConfigError::default();
    let mut configs = Vec::new();
    if values.is_empty() {
        err.push("values", "a sweep needs at least one value");
    }
    for v in values {
        let mut c = template.clone();
        let label = v.trim().to_string();
        match axis {
            SweepAxis::Sparsity => match label.parse::<f64>() {
                Ok(s) => c.sparsity = s,
                Err(_) => {
                    err.push("values", format!("'{label}' is not a sparsity"));
                    continue;
                }
            },
            SweepAxis::U => {
                c.u = if label == "max" {
                    c.max_fes
                } else {
                    match label.parse::<usize>() {
                        Ok(u) => u,
                        Err(_) => {
                            err.push("values", format!("'{label}' is not a detection interval"));
                            continue;
                        }
                    }
                }
            }
        }
        c.out_dir = template.out_dir.join(format!("{}_{label}", axis.as_str()));
        if let Err(e) = c.validate() {
            for mut v in e.violations {
                v.message = format!("{} = {label}: {}", axis.as_str(), v.message);
                err.violations.push(v);
            }
            continue;
        }
        configs.push((label, c));
    }
    err.into_result()?;
    Ok(configs)
}

/// One batch per axis value plus a combined `sweep.csv`.
pub fn sweep(
    template: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    jobs: usize,
) -> Result<SweepReport> {
    let configs = sweep_configs(template, axis, values)?;
    let problem = Problem::build(template)?;
    let mut points = Vec::with_capacity(configs.len());
    for (label, c) in configs {
        log::info!("{} = {label}: {} seeds", axis.as_str(), c.seeds.len());
        let batch = run_batch_in_memory(&c, &problem, jobs)?;
        write_batch(&batch)?;
        points.push(SweepPoint { label, batch });
    }
    let accuracy_nondecreasing = points
        .windows(2)
        .all(|w| w[1].batch.layered_accuracy.mean >= w[0].batch.layered_accuracy.mean);

    create_dir(&template.out_dir)?;
    let mut csv = csv::Writer::from_writer(create_file(&template.out_dir.join("sweep.csv"))?);
    csv.write_record([
        axis.as_str(),
        "seeds",
        "f_server_mean",
        "f_server_std",
        "f_server_median",
        "accuracy_mean",
        "accuracy_std",
        "accuracy_median",
        "detections_mean",
    ])?;
    for p in &points {
        let b = &p.batch;
        let detections = b
            .runs
            .iter()
            .map(|r| r.detection_events.len() as f64)
            .sum::<f64>()
            / b.runs.len() as f64;
        csv.write_record([
            p.label.clone(),
            b.runs.len().to_string(),
            fmt_f64(b.f_server.mean),
            fmt_f64(b.f_server.std),
            fmt_f64(b.f_server.median),
            fmt_f64(b.layered_accuracy.mean),
            fmt_f64(b.layered_accuracy.std),
            fmt_f64(b.layered_accuracy.median),
            fmt_f64(detections),
        ])?;
    }
    csv.flush().map_err(csv::Error::from)?;
    let report_path = template.out_dir.join("sweep_report.txt");
    let mut report = create_file(&report_path)?;
    writeln!(report, "axis: {}", axis.as_str()).map_err(|e| Error::io(&report_path, e))?;
    writeln!(report, "accuracy_nondecreasing: {accuracy_nondecreasing}")
        .map_err(|e| Error::io(&report_path, e))?;

    Ok(SweepReport {
        axis,
        points,
        accuracy_nondecreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_by_hand() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max), (1.0, 4.0));
        assert_eq!(Stats::of(&[7.0]).std, 0.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn sweep_values_are_checked_together() {
        let t = RunConfig::benchmark("sphere", 5);
        let e = sweep_configs(
            &t,
            SweepAxis::Sparsity,
            &["0.5".into(), "0".into(), "x".into()],
        )
        .unwrap_err();
        match e {
            Error::Config(c) => assert_eq!(c.violations.len(), 2),
            other => panic!("{other}"),
        }
        let ok = sweep_configs(&t, SweepAxis::U, &["1".into(), "max".into()]).unwrap();
        assert_eq!(ok[1].1.u, t.max_fes);
    }
}
