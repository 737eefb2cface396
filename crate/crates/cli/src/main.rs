use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cec_core::config::RawConfig;
use cec_core::engine::{run, RunResult};
use cec_core::harness::{self, SweepAxis};
use cec_core::optimizer::InertiaSource;
use cec_core::{ConfigError, Error, Result};

#[derive(Parser)]
#[command(
    name = "cec",
    version,
    about = "Crowd-coordinated evolutionary computation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the first configured seed and print its result.
    Run(Flags),
    /// Run every configured seed and write summary CSVs.
    Batch(Flags),
    /// Run one batch per value of a parameter.
    Sweep {
        #[command(flatten)]
        flags: Flags,
        /// Parameter to vary: sparsity or u.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; `max` on the u axis means u = fes.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

#[derive(Args)]
struct Flags {
    /// Flat key-value configuration file. Flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark name or `clustering`.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Number of clusters for the clustering problem.
    #[arg(long)]
    k: Option<usize>,
    /// CSV file with 2-D points for the clustering problem.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Two zero-based column indices, e.g. `0,1`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    data_columns: Option<Vec<usize>>,
    /// The data file has a header row.
    #[arg(long)]
    data_header: bool,
    #[arg(long)]
    np: Option<usize>,
    /// Fitness evaluation budget.
    #[arg(long)]
    fes: Option<usize>,
    /// Detection interval in generations.
    #[arg(long)]
    u: Option<usize>,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// positive, negative, clustering-replacement or none.
    #[arg(long)]
    noise_mode: Option<String>,
    /// Never remove workers.
    #[arg(long)]
    no_detection: bool,
    #[arg(long)]
    reliable_fraction: Option<f64>,
    #[arg(long)]
    max_exponent: Option<f64>,
    /// velocity or position.
    #[arg(long)]
    inertia: Option<String>,
    /// Re-evaluate level-1 workers every generation.
    #[arg(long)]
    reevaluate_elites: bool,
    /// Write per-generation comparison tuples.
    #[arg(long)]
    log_tuples: bool,
    /// Seeds such as `1..25` or `1,5,9`.
    #[arg(long)]
    seeds: Option<String>,
    /// Parallel runs; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory (default: $CEC_OUT or ./cec-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Result<RawConfig> {
        let inertia_source = match self.inertia.as_deref() {
            None => None,
            Some("velocity") => Some(InertiaSource::Velocity),
            Some("position") => Some(InertiaSource::Position),
            Some(other) => {
                return Err(ConfigError::single(
                    "inertia_source",
                    format!("expected velocity or position, got '{other}'"),
                )
                .into())
            }
        };
        Ok(RawConfig {
            problem: self.problem.clone(),
            dim: self.dim,
            k: self.k,
            data: self.data.clone(),
            data_columns: self.data_columns.as_ref().map(|c| [c[0], c[1]]),
            data_header: self.data_header.then_some(true),
            np: self.np,
            fes: self.fes,
            u: self.u,
            sparsity: self.sparsity,
            phi: self.phi,
            lambda: self.lambda,
            noise_mode: self.noise_mode.clone(),
            detection: self.no_detection.then_some(false),
            reliable_fraction: self.reliable_fraction,
            max_exponent: self.max_exponent,
            inertia_source,
            reevaluate_elites: self.reevaluate_elites.then_some(true),
            log_tuples: self.log_tuples.then_some(true),
            seeds: self.seeds.clone(),
            out: self.out.clone(),
            ..RawConfig::default()
        })
    }

    fn config(&self) -> Result<cec_core::RunConfig> {
        harness::parse_config(self.config.as_deref(), self.overrides()?)
    }
}

fn print_run(r: &RunResult) {
    println!("seed {}", r.seed);
    println!("status {}", r.termination.as_str());
    println!("f_server {:e}", r.f_server);
    println!("fes_used {}", r.fes_used);
    println!("generations {}", r.generations);
    println!("mean_layered_accuracy {:.4}", r.mean_layered_accuracy());
    println!("detections {}", r.detection_events.len());
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(flags) => {
            let mut config = flags.config()?;
            config.seeds.truncate(1);
            let r = run(&config, config.seeds[0])?;
            let dir = &config.out_dir;
            let path = dir.join(format!("convergence_seed{}.csv", r.seed));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            r.write_convergence_csv(std::io::BufWriter::new(file))?;
            let path = dir.join(format!("detections_seed{}.csv", r.seed));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            r.write_detections_csv(std::io::BufWriter::new(file))?;
            if config.log_tuples {
                let path = dir.join(format!("tuples_seed{}.csv", r.seed));
                let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                r.write_tuples_csv(std::io::BufWriter::new(file))?;
            }
            print_run(&r);
        }
        Command::Batch(flags) => {
            let config = flags.config()?;
            let s = harness::run_batch(&config, flags.jobs)?;
            println!("seeds {}", s.runs.len());
            println!(
                "f_server mean {:e} std {:e} median {:e}",
                s.f_server.mean, s.f_server.std, s.f_server.median
            );
            println!(
                "layered_accuracy mean {:.4} std {:.4}",
                s.layered_accuracy.mean, s.layered_accuracy.std
            );
            println!("output {}", config.out_dir.display());
        }
        Command::Sweep {
            flags,
            axis,
            values,
        } => {
            let axis = SweepAxis::parse(&axis).ok_or_else(|| {
                ConfigError::single("axis", format!("expected sparsity or u, got '{axis}'"))
            })?;
            let config = flags.config()?;
            let report = harness::sweep(&config, axis, &values, flags.jobs)?;
            for p in &report.points {
                println!(
                    "{} {}: f_server median {:e}, layered_accuracy mean {:.4}",
                    axis.as_str(),
                    p.label,
                    p.batch.f_server.median,
                    p.batch.layered_accuracy.mean
                );
            }
            println!("accuracy_nondecreasing {}", report.accuracy_nondecreasing);
            println!("output {}", config.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
