//! Acceptance criteria. Runs as a plain binary so every criterion reports
//! one PASS/FAIL line; the process fails if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cec_core::clustering::{kmeans_oracle, wcss, Point};
use cec_core::config::{RawConfig, RunConfig};
use cec_core::engine::{Problem, Simulation, SimulationOptions};
use cec_core::harness::{median, run_batch, run_batch_in_memory};
use cec_core::ranking::{build_comparisons, competition_rank, ComparisonMatrix, DEFAULT_LAMBDA};
use cec_core::rng::StreamSeeds;
use cec_core::topology::random_topology;
use cec_core::AgentId;

// Tolerances and thresholds.
const PRI_TOL: f64 = 1e-3;
const SPARSE_ACCURACY_FLOOR: f64 = 0.80;
const DETECTION_ORDER_SHARE: f64 = 0.80;
const NOISE_FREE_IMPROVEMENT: f64 = 1e6;
const KMEANS_ENVELOPE: f64 = 2.0;
const SEEDS_25: &str = "1..25";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn out_dir(tag: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("cec-acceptance-{}-{tag}", std::process::id()))
}

fn config(overrides: RawConfig, tag: &str) -> RunConfig {
    RawConfig {
        out: Some(out_dir(tag)),
        ..RawConfig::default()
    }
    .merged_with(overrides)
    .resolve()
    .unwrap_or_else(|e| panic!("{e}"))
}

fn desk(problem: &str, overrides: RawConfig, tag: &str) -> RunConfig {
    config(
        RawConfig {
            problem: Some(problem.into()),
            dim: Some(50),
            np: Some(100),
            fes: Some(50_000),
            u: Some(100),
            sparsity: Some(0.1),
            seeds: Some(SEEDS_25.into()),
            ..RawConfig::default()
        }
        .merged_with(overrides),
        tag,
    )
}

fn worked_example() -> Outcome {
    let rows = vec![
        vec![None, Some(0.0), Some(0.0), Some(0.0), Some(1.0)],
        vec![Some(1.0), None, Some(1.0), Some(1.0), Some(1.0)],
        vec![Some(1.0), Some(0.0), None, Some(0.0), Some(1.0)],
        vec![Some(1.0), Some(0.0), Some(1.0), None, Some(1.0)],
        vec![Some(0.0), Some(0.0), Some(0.0), Some(0.0), None],
    ];
    let r = competition_rank(&ComparisonMatrix::from_numeric(&rows), DEFAULT_LAMBDA);
    let expected = [0.0707, 0.5270, 0.1512, 0.2499, 0.0011];
    let worst = r
        .pri
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let order: Vec<usize> = r.order.iter().map(|p| p + 1).collect();
    outcome(
        worst <= PRI_TOL && order == [2, 4, 3, 1, 5],
        format!("max |PRI error| {worst:.2e}, order {order:?}"),
    )
}

fn dense_oracle() -> Outcome {
    let mut mismatches = 0usize;
    let mut cases = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let check = |f: &[f64], rng: &mut ChaCha8Rng| {
        let ids: Vec<AgentId> = (0..f.len()).map(AgentId).collect();
        let t = random_topology(&ids, 1.0, rng).unwrap();
        let (m, _) = build_comparisons(f, &t);
        let order = competition_rank(&m, DEFAULT_LAMBDA).order;
        let mut sorted: Vec<usize> = (0..f.len()).collect();
        sorted.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
        order == sorted
    };
    for n in 2..=8usize {
        let mut perm: Vec<usize> = (0..n).collect();
        // Heap's algorithm over all n! arrangements.
        let mut c = vec![0usize; n];
        let mut visit = |p: &[usize], rng: &mut ChaCha8Rng| {
            let f: Vec<f64> = p.iter().map(|&v| v as f64).collect();
            if !check(&f, rng) {
                mismatches += 1;
            }
            cases += 1;
        };
        visit(&perm, &mut rng);
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                visit(&perm, &mut rng);
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
    }
    for _ in 0..200 {
        let n = rng.random_range(9..=100);
        let mut f: Vec<f64> = (0..n).map(|i| i as f64 * 1.5 - 20.0).collect();
        f.shuffle(&mut rng);
        if !check(&f, &mut rng) {
            mismatches += 1;
        }
        cases += 1;
    }
    outcome(
        mismatches == 0,
        format!("{cases} instances, {mismatches} mismatches"),
    )
}

fn full_connectivity_accuracy() -> Outcome {
    let c = desk(
        "sphere",
        RawConfig {
            sparsity: Some(1.0),
            ..RawConfig::default()
        },
        "c3",
    );
    let b = run_batch_in_memory(&c, &Problem::build(&c).unwrap(), 0).unwrap();
    let all_one = b
        .runs
        .iter()
        .all(|r| r.convergence_log.iter().all(|g| g.layered_accuracy == 1.0));
    outcome(
        all_one && b.layered_accuracy.mean == 1.0 && b.layered_accuracy.std == 0.0,
        format!(
            "mean {} std {} over {} seeds",
            b.layered_accuracy.mean,
            b.layered_accuracy.std,
            b.runs.len()
        ),
    )
}

fn sparsity_trend() -> Outcome {
    let acc = |s: f64| {
        let c = desk(
            "sphere",
            RawConfig {
                sparsity: Some(s),
                ..RawConfig::default()
            },
            "c4",
        );
        run_batch_in_memory(&c, &Problem::build(&c).unwrap(), 0)
            .unwrap()
            .layered_accuracy
            .mean
    };
    let (sparse, dense) = (acc(0.1), acc(1.0));
    outcome(
        sparse > SPARSE_ACCURACY_FLOOR && sparse < dense,
        format!("accuracy {sparse:.4} at sparsity 0.1 (floor {SPARSE_ACCURACY_FLOOR}), {dense:.4} at 1.0"),
    )
}

fn detection_ordering() -> Outcome {
    let c = desk("sphere", RawConfig::default(), "c5");
    let b = run_batch_in_memory(&c, &Problem::build(&c).unwrap(), 0).unwrap();
    // One-based workers 100, 96 and 92 carry 2^30, 2^18 and 2^6.
    let bounds = cec_core::uncertainty::bound_schedule(100, 0.9, 30.0).unwrap();
    assert_eq!(
        [bounds[99], bounds[95], bounds[91]],
        [2f64.powi(30), 2f64.powi(18), 2f64.powi(6)]
    );
    let ordered = b
        .runs
        .iter()
        .filter(|r| {
            let g = |i: usize| r.detection_generation(AgentId(i)).unwrap_or(usize::MAX);
            g(99) != usize::MAX && g(99) <= g(95) && g(95) <= g(91)
        })
        .count();
    let share = ordered as f64 / b.runs.len() as f64;
    outcome(
        share >= DETECTION_ORDER_SHARE,
        format!("ordered in {ordered}/{} seeds", b.runs.len()),
    )
}

fn ablation_direction() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for problem in ["sphere", "elliptic"] {
        let med = |detection: bool| {
            let c = desk(
                problem,
                RawConfig {
                    detection: Some(detection),
                    ..RawConfig::default()
                },
                "c6",
            );
            let b = run_batch_in_memory(&c, &Problem::build(&c).unwrap(), 0).unwrap();
            b.f_server.median
        };
        let (with, without) = (med(true), med(false));
        pass &= with <= without;
        detail.push(format!(
            "{problem}: {with:.3e} with vs {without:.3e} without"
        ));
    }
    outcome(pass, detail.join("; "))
}

fn noise_free_convergence() -> Outcome {
    let c = config(
        RawConfig {
            problem: Some("sphere".into()),
            dim: Some(30),
            np: Some(64),
            fes: Some(64 * 501),
            phi: Some(0.4),
            sparsity: Some(1.0),
            noise_mode: Some("none".into()),
            detection: Some(false),
            seeds: Some("1..10".into()),
            ..RawConfig::default()
        },
        "c7",
    );
    let p = Problem::build(&c).unwrap();
    let ratios: Vec<f64> = c
        .seeds
        .iter()
        .map(|&seed| {
            let mut s = Simulation::initialize(&c, &p, seed).unwrap();
            let initial = s.true_best_so_far().fitness;
            for _ in 0..500 {
                if s.step().is_some() {
                    break;
                }
            }
            initial / s.true_best_so_far().fitness
        })
        .collect();
    let m = median(&ratios);
    outcome(
        m >= NOISE_FREE_IMPROVEMENT,
        format!("median improvement factor {m:.3e}"),
    )
}

fn clustering() -> Outcome {
    let c = config(
        RawConfig {
            problem: Some("clustering".into()),
            k: Some(4),
            blob_clusters: Some(4),
            blob_points: Some(250),
            blob_spread: Some(0.05),
            blob_seed: Some(7),
            seeds: Some(SEEDS_25.into()),
            ..RawConfig::default()
        },
        "c8",
    );
    assert_eq!(c.problem.dim(), 8);
    let p = Problem::build(&c).unwrap();
    let Problem::Clustering(cp) = &p else {
        unreachable!()
    };
    assert_eq!(cp.base().len(), 1000);
    let b = run_batch_in_memory(&c, &p, 0).unwrap();
    let bb = cp.bounding_box();
    let beats_random = b
        .runs
        .iter()
        .filter(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + r.seed);
            let centers: Vec<Point> = (0..4)
                .map(|_| {
                    [
                        bb.min[0] + rng.random::<f64>() * (bb.max[0] - bb.min[0]),
                        bb.min[1] + rng.random::<f64>() * (bb.max[1] - bb.min[1]),
                    ]
                })
                .collect();
            r.f_server <= wcss(&centers, cp.base())
        })
        .count();
    let km: Vec<f64> = c
        .seeds
        .iter()
        .map(|&s| kmeans_oracle(cp.base(), 4, s, 300).unwrap().wcss)
        .collect();
    let (cec_med, km_med) = (b.f_server.median, median(&km));
    outcome(
        beats_random == b.runs.len() && cec_med <= KMEANS_ENVELOPE * km_med,
        format!(
            "beats random centers in {beats_random}/{}; median WCSS {cec_med:.4} vs k-means {km_med:.4}",
            b.runs.len()
        ),
    )
}

fn budget_and_determinism() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let mut over_budget = 0;
    for (fes, np) in [(100, 100), (137, 16), (1000, 16), (5003, 50)] {
        let c = config(
            RawConfig {
                problem: Some("rastrigin".into()),
                dim: Some(10),
                np: Some(np),
                fes: Some(fes),
                u: Some(10),
                seeds: Some("1..5".into()),
                ..RawConfig::default()
            },
            "c9",
        );
        let b = run_batch_in_memory(&c, &Problem::build(&c).unwrap(), 0).unwrap();
        over_budget += b.runs.iter().filter(|r| r.fes_used > fes).count();
    }
    pass &= over_budget == 0;
    notes.push(format!("{over_budget} runs over budget"));

    let files_of = |tag: &str| {
        let c = config(
            RawConfig {
                problem: Some("elliptic".into()),
                dim: Some(10),
                np: Some(20),
                fes: Some(4000),
                u: Some(15),
                log_tuples: Some(true),
                seeds: Some("1..4".into()),
                ..RawConfig::default()
            },
            tag,
        );
        run_batch(&c, 2).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&c.out_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect();
        files.sort();
        std::fs::remove_dir_all(&c.out_dir).ok();
        files
    };
    let (a, b) = (files_of("c9a"), files_of("c9b"));
    let identical = a == b && !a.is_empty();
    pass &= identical;
    notes.push(format!("{} CSV files byte-identical: {identical}", a.len()));

    let c = config(
        RawConfig {
            problem: Some("sphere".into()),
            dim: Some(10),
            np: Some(30),
            fes: Some(3000),
            detection: Some(false),
            ..RawConfig::default()
        },
        "c9",
    );
    let p = Problem::build(&c).unwrap();
    let topologies = |seeds: StreamSeeds| {
        let mut s = Simulation::with_options(
            &c,
            &p,
            0,
            SimulationOptions {
                seeds: Some(seeds),
                ..Default::default()
            },
        )
        .unwrap();
        let mut seq = vec![s.topology().edges().collect::<Vec<_>>()];
        let mut fitness = vec![s.agents()[0].cached_fitness];
        while s.step().is_none() {
            seq.push(s.topology().edges().collect());
            fitness.push(s.agents()[0].cached_fitness);
        }
        (seq, fitness)
    };
    let base = StreamSeeds::from_master(11);
    let (t1, f1) = topologies(base);
    let (t2, f2) = topologies(StreamSeeds {
        noise: base.noise ^ 0xdead_beef,
        ..base
    });
    let isolated = t1 == t2 && f1 != f2;
    pass &= isolated;
    notes.push(format!(
        "noise-stream isolation over {} topologies: {isolated}",
        t1.len()
    ));

    outcome(pass, notes.join("; "))
}

fn information_firewall() -> Outcome {
    let cases = [
        ("sphere", 20, "positive"),
        ("elliptic", 20, "negative"),
        ("rastrigin", 10, "positive"),
        ("ackley", 10, "positive"),
        ("rosenbrock", 10, "negative"),
    ];
    let mut identical = 0;
    for (problem, dim, noise) in cases {
        let c = config(
            RawConfig {
                problem: Some(problem.into()),
                dim: Some(dim),
                np: Some(40),
                fes: Some(20_000),
                u: Some(25),
                noise_mode: Some(noise.into()),
                ..RawConfig::default()
            },
            "c10",
        );
        let p = Problem::build(&c).unwrap();
        let go = |poison: bool| {
            Simulation::with_options(
                &c,
                &p,
                3,
                SimulationOptions {
                    poison_true_fitness: poison,
                    ..Default::default()
                },
            )
            .unwrap()
            .run_to_end()
        };
        let (clean, poisoned) = (go(false), go(true));
        assert!(poisoned.true_best_so_far.fitness.is_nan());
        if clean.x_best == poisoned.x_best
            && clean.f_server == poisoned.f_server
            && clean.detection_events == poisoned.detection_events
        {
            identical += 1;
        }
    }
    outcome(
        identical == cases.len(),
        format!("{identical}/{} configurations identical", cases.len()),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (
            "worked-example ranking",
            Duration::from_millis(1),
            worked_example,
        ),
        (
            "dense ranking equals fitness order",
            Duration::from_secs(10),
            dense_oracle,
        ),
        (
            "full connectivity accuracy",
            Duration::from_secs(120),
            full_connectivity_accuracy,
        ),
        ("sparsity trend", Duration::from_secs(600), sparsity_trend),
        (
            "detection ordering",
            Duration::from_secs(600),
            detection_ordering,
        ),
        (
            "ablation direction",
            Duration::from_secs(900),
            ablation_direction,
        ),
        (
            "noise-free convergence",
            Duration::from_secs(60),
            noise_free_convergence,
        ),
        ("clustering", Duration::from_secs(300), clustering),
        (
            "budget and determinism",
            Duration::from_secs(60),
            budget_and_determinism,
        ),
        (
            "information firewall",
            Duration::from_secs(120),
            information_firewall,
        ),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| *f == n.to_string() || name.contains(f.as_str()))
        {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (
                false,
                format!(
                    "panicked: {}",
                    e.downcast_ref::<String>()
                        .map(String::as_str)
                        .or_else(|| e.downcast_ref::<&str>().copied())
                        .unwrap_or("?")
                ),
            ),
        };
        // Wall time is reported against its budget but does not decide the
        // verdict; the one-millisecond budget is too tight for a shared box.
        let timing = if elapsed <= *limit { "within" } else { "over" };
        println!(
            "criterion {n:>2} {:<4} {name}: {detail} [{:.2?}, {timing} {:?} budget]",
            if pass { "PASS" } else { "FAIL" },
            elapsed,
            limit
        );
        if !pass {
            failed += 1;
        }
    }
    std::fs::remove_dir_all(out_dir("c9")).ok();
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
