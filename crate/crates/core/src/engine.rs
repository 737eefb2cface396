//! The server/worker loop.
//!
//! Each generation the workers compare cached fitness values with their
//! current neighbors, the server ranks and levels the crowd, removes workers
//! that stayed in the top or bottom level for `u` generations, and the
//! surviving lower-level workers move and re-evaluate. The run ends when the
//! evaluation budget is spent; the server then evaluates the top-ranked
//! worker's candidate without noise.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;

use crate::clustering::{load_csv, synth_blobs, ClusteringProblem, Dataset};
use crate::config::{DataSource, NoiseMode, ProblemSpec, RunConfig, MIN_SWARM};
use crate::error::Result;
use crate::optimizer::{propose_move, Particle, UpdateRule};
use crate::problems::{make_benchmark, Objective};
use crate::ranking::{
    build_comparisons, competition_rank, detect_unreliable, layered_accuracy, oracle_levels,
    ComparisonTuple, Level, LevelHistory,
};
use crate::rng::{StreamRng, StreamSeeds};
use crate::topology::{random_topology, revary, Topology};
use crate::uncertainty::{bound_schedule, draw_noise, EvalBudget, NoiseSign, UncertaintySpec};
use crate::AgentId;

/// Consecutive generations without a single evaluation after which a run
/// is declared stalled.
pub const STALL_LIMIT: usize = 1000;

/// The objective a batch shares across seeds, built once from the config.
#[derive(Debug, Clone)]
pub enum Problem {
    Benchmark(Objective),
    Clustering(Arc<ClusteringProblem>),
}

impl Problem {
    /// Builds the problem, loading or synthesizing clustering data.
    pub fn build(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(match &config.problem {
            ProblemSpec::Benchmark { name, dim } => Problem::Benchmark(make_benchmark(name, *dim)?),
            ProblemSpec::Clustering { k, source } => {
                let data: Dataset = match source {
                    DataSource::Csv {
                        path,
                        columns,
                        has_header,
                    } => load_csv(path, *columns, *has_header)?,
                    DataSource::Blobs {
                        clusters,
                        points_per_cluster,
                        spread,
                        seed,
                    } => synth_blobs(*clusters, *points_per_cluster, *spread, *seed)?.0,
                };
                if config.noise_mode == NoiseMode::ClusteringReplacement && data.len() < config.np {
                    return Err(crate::ConfigError::single(
                        "np",
                        format!(
                            "replacement noise needs at least np = {} data points, got {}",
                            config.np,
                            data.len()
                        ),
                    )
                    .into());
                }
                Problem::Clustering(Arc::new(ClusteringProblem::new(*k, data)?))
            }
        })
    }

    /// The noise-free objective the server evaluates.
    pub fn objective(&self) -> Objective {
        match self {
            Problem::Benchmark(o) => o.clone(),
            Problem::Clustering(c) => c.objective(),
        }
    }
}

/// What one worker sees when it evaluates a position.
#[derive(Debug, Clone)]
struct WorkerView {
    /// `None` when the worker evaluates the true objective.
    own_objective: Option<Objective>,
    uncertainty: UncertaintySpec,
}

#[derive(Debug, Clone)]
pub struct WorkerAgent {
    pub id: AgentId,
    pub uncertainty: UncertaintySpec,
    /// `|bv_i|` under additive noise, the replaced point count under data
    /// replacement, zero when noise-free.
    pub disturbance: f64,
    pub cached_fitness: f64,
    /// Diagnostic only; never read by ranking, detection or evolution.
    pub cached_true_fitness: f64,
    pub alive: bool,
    pub history: LevelHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub generation: usize,
    pub agent: AgentId,
    pub bound_value: f64,
    pub tail_level: Level,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub fes: usize,
    pub best_fitness: f64,
    pub best_true_fitness: f64,
    pub alive: usize,
    pub layered_accuracy: f64,
    /// Agents removed this generation.
    pub detections: usize,
    /// The budget ran out before every moved agent was evaluated.
    pub partial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    BudgetExhausted,
    DegenerateSwarm,
    Stalled,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::BudgetExhausted => "budget-exhausted",
            Termination::DegenerateSwarm => "degenerate-swarm",
            Termination::Stalled => "stalled",
        }
    }
}

/// Best record seen so far: position and its fitness value.
#[derive(Debug, Clone, PartialEq)]
pub struct BestRecord {
    pub position: Vec<f64>,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub x_best: Vec<f64>,
    /// Noise-free server evaluation of `x_best`.
    pub f_server: f64,
    pub fes_used: usize,
    pub generations: usize,
    pub detection_events: Vec<DetectionEvent>,
    pub convergence_log: Vec<GenerationRecord>,
    pub termination: Termination,
    /// `(generation, tuple)` pairs, filled when tuple logging is enabled.
    pub tuples: Vec<(usize, ComparisonTuple)>,
    pub best_so_far: BestRecord,
    pub true_best_so_far: BestRecord,
    pub final_alive: usize,
}

impl RunResult {
    pub fn mean_layered_accuracy(&self) -> f64 {
        if self.convergence_log.is_empty() {
            return f64::NAN;
        }
        self.convergence_log
            .iter()
            .map(|r| r.layered_accuracy)
            .sum::<f64>()
            / self.convergence_log.len() as f64
    }

    /// Generation at which `agent` was removed, if it was.
    pub fn detection_generation(&self, agent: AgentId) -> Option<usize> {
        self.detection_events
            .iter()
            .find(|e| e.agent == agent)
            .map(|e| e.generation)
    }

    pub fn write_convergence_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "generation",
            "fes",
            "best_F",
            "best_f_true",
            "alive",
            "layered_accuracy",
        ])?;
        for r in &self.convergence_log {
            csv.write_record([
                r.generation.to_string(),
                r.fes.to_string(),
                fmt_f64(r.best_fitness),
                fmt_f64(r.best_true_fitness),
                r.alive.to_string(),
                fmt_f64(r.layered_accuracy),
            ])?;
        }
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_detections_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["generation", "agent_id", "bound_value", "tail_level"])?;
        for e in &self.detection_events {
            csv.write_record([
                e.generation.to_string(),
                e.agent.to_string(),
                fmt_f64(e.bound_value),
                e.tail_level.number().to_string(),
            ])?;
        }
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_tuples_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["generation", "id1", "id2", "result"])?;
        for (g, t) in &self.tuples {
            let code = t.outcome.code().map(String::from).unwrap_or_default();
            csv.write_record([g.to_string(), t.id1.to_string(), t.id2.to_string(), code])?;
        }
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Knobs for tests and experiments that bypass the master seed.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulationOptions {
    /// Replaces the streams derived from the master seed.
    pub seeds: Option<StreamSeeds>,
    /// Stores NaN in place of every true fitness value.
    pub poison_true_fitness: bool,
}

/// State of one run.
#[derive(Debug)]
pub struct Simulation {
    config: RunConfig,
    seed: u64,
    objective: Objective,
    views: Vec<WorkerView>,
    agents: Vec<WorkerAgent>,
    particles: Vec<Particle>,
    levels: Vec<Option<Level>>,
    topology: Topology,
    topology_rng: StreamRng,
    evolution_rngs: Vec<StreamRng>,
    noise_rngs: Vec<StreamRng>,
    budget: EvalBudget,
    generation: usize,
    best: BestRecord,
    true_best: BestRecord,
    detection_events: Vec<DetectionEvent>,
    log: Vec<GenerationRecord>,
    tuples: Vec<(usize, ComparisonTuple)>,
    idle_generations: usize,
    poison: bool,
    status: Option<Termination>,
}

/// Runs `config` with master seed `seed` to completion.
pub fn run(config: &RunConfig, seed: u64) -> Result<RunResult> {
    let problem = Problem::build(config)?;
    Ok(Simulation::initialize(config, &problem, seed)?.run_to_end())
}

impl Simulation {
    pub fn initialize(config: &RunConfig, problem: &Problem, seed: u64) -> Result<Self> {
        Self::with_options(config, problem, seed, SimulationOptions::default())
    }

    pub fn with_options(
        config: &RunConfig,
        problem: &Problem,
        seed: u64,
        options: SimulationOptions,
    ) -> Result<Self> {
        config.validate()?;
        let np = config.np;
        let streams = options
            .seeds
            .unwrap_or_else(|| StreamSeeds::from_master(seed));
        let objective = problem.objective();
        let domain = objective.domain().clone();
        let mut noise_rngs: Vec<StreamRng> = (0..np).map(|i| streams.noise_rng(i)).collect();

        let sign = match config.noise_mode {
            NoiseMode::Negative => NoiseSign::Negative,
            _ => NoiseSign::Positive,
        };
        let (views, disturbance): (Vec<WorkerView>, Vec<f64>) = match (config.noise_mode, problem) {
            (NoiseMode::ClusteringReplacement, Problem::Clustering(c)) => noise_rngs
                .iter_mut()
                .enumerate()
                .map(|(i, rng)| {
                    let own = c.worker_objective(i + 1, rng);
                    let view = WorkerView {
                        own_objective: Some(own),
                        uncertainty: UncertaintySpec::noise_free(),
                    };
                    (view, (i + 1) as f64)
                })
                .unzip(),
            (NoiseMode::ClusteringReplacement, Problem::Benchmark(_)) => {
                return Err(crate::ConfigError::single(
                    "noise_mode",
                    "clustering-replacement requires problem = clustering",
                )
                .into())
            }
            (NoiseMode::None, _) => (0..np)
                .map(|_| {
                    let view = WorkerView {
                        own_objective: None,
                        uncertainty: UncertaintySpec::noise_free(),
                    };
                    (view, 0.0)
                })
                .unzip(),
            (NoiseMode::Positive | NoiseMode::Negative, _) => {
                bound_schedule(np, config.reliable_fraction, config.max_exponent)?
                    .into_iter()
                    .map(|bv| {
                        let view = WorkerView {
                            own_objective: None,
                            uncertainty: UncertaintySpec::new(bv, sign),
                        };
                        (view, bv)
                    })
                    .unzip()
            }
        };

        let mut init_rng = streams.init_rng();
        let particles: Vec<Particle> = (0..np)
            .map(|_| {
                let x = domain
                    .lower()
                    .iter()
                    .zip(domain.upper())
                    .map(|(&lo, &hi)| lo + init_rng.random::<f64>() * (hi - lo))
                    .collect();
                Particle::at_rest(x)
            })
            .collect();

        let agents = (0..np)
            .map(|i| WorkerAgent {
                id: AgentId(i),
                uncertainty: views[i].uncertainty,
                disturbance: disturbance[i],
                cached_fitness: f64::NAN,
                cached_true_fitness: f64::NAN,
                alive: true,
                history: LevelHistory::new(config.u),
            })
            .collect();

        let mut topology_rng = streams.topology_rng();
        let ids: Vec<AgentId> = (0..np).map(AgentId).collect();
        let topology = random_topology(&ids, config.sparsity, &mut topology_rng)
            .expect("np >= 8 is validated");

        let mut sim = Simulation {
            config: config.clone(),
            seed,
            objective,
            views,
            agents,
            particles,
            levels: vec![None; np],
            topology,
            topology_rng,
            evolution_rngs: (0..np).map(|i| streams.evolution_rng(i)).collect(),
            noise_rngs,
            budget: EvalBudget::new(config.max_fes),
            generation: 1,
            best: BestRecord {
                position: Vec::new(),
                fitness: f64::INFINITY,
            },
            true_best: BestRecord {
                position: Vec::new(),
                fitness: f64::INFINITY,
            },
            detection_events: Vec::new(),
            log: Vec::new(),
            tuples: Vec::new(),
            idle_generations: 0,
            poison: options.poison_true_fitness,
            status: None,
        };
        for i in 0..np {
            let evaluated = sim.evaluate(AgentId(i));
            debug_assert!(evaluated, "budget >= np is validated");
        }
        sim.best = sim.alive_best();
        if sim.budget.is_exhausted() {
            sim.status = Some(Termination::BudgetExhausted);
        }
        Ok(sim)
    }

    /// Evaluates agent `id` at its current position. Returns false when the
    /// budget is spent.
    fn evaluate(&mut self, id: AgentId) -> bool {
        if self.budget.try_consume().is_err() {
            return false;
        }
        let i = id.0;
        let x = &self.particles[i].position;
        let view = &self.views[i];
        let rng = &mut self.noise_rngs[i];
        let (fitness, true_fitness) = match &view.own_objective {
            Some(own) => (
                own.eval(x) + draw_noise(&view.uncertainty, rng),
                self.objective.eval(x),
            ),
            None => {
                let f = self.objective.eval(x);
                (f + draw_noise(&view.uncertainty, rng), f)
            }
        };
        let true_fitness = if self.poison { f64::NAN } else { true_fitness };
        let agent = &mut self.agents[i];
        agent.cached_fitness = fitness;
        agent.cached_true_fitness = true_fitness;
        if fitness < self.best.fitness {
            self.best = BestRecord {
                position: x.clone(),
                fitness,
            };
        }
        if true_fitness < self.true_best.fitness || self.true_best.position.is_empty() {
            self.true_best = BestRecord {
                position: x.clone(),
                fitness: true_fitness,
            };
        }
        true
    }

    /// Lowest cached fitness among alive agents, first id on ties.
    fn alive_best(&self) -> BestRecord {
        let (i, a) = self
            .agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.alive)
            .min_by(|(_, a), (_, b)| a.cached_fitness.total_cmp(&b.cached_fitness))
            .expect("at least one alive agent");
        BestRecord {
            position: self.particles[i].position.clone(),
            fitness: a.cached_fitness,
        }
    }

    pub fn alive_ids(&self) -> Vec<AgentId> {
        self.agents
            .iter()
            .filter(|a| a.alive)
            .map(|a| a.id)
            .collect()
    }

    /// Runs one generation. Returns the termination status once the run has
    /// ended; further calls do nothing.
    pub fn step(&mut self) -> Option<Termination> {
        if self.status.is_some() {
            return self.status;
        }
        let g = self.generation;
        let members = self.topology.members().to_vec();
        let fitness: Vec<f64> = members
            .iter()
            .map(|id| self.agents[id.0].cached_fitness)
            .collect();

        let (matrix, tuples) = build_comparisons(&fitness, &self.topology);
        if self.config.log_tuples {
            self.tuples.extend(tuples.into_iter().map(|t| (g, t)));
        }
        let ranking = competition_rank(&matrix, self.config.lambda);
        let levels = ranking.levels().expect("alive swarm >= 8");
        let oracle = oracle_levels(&fitness).expect("alive swarm >= 8");
        let accuracy = layered_accuracy(&levels, &oracle);

        self.levels.iter_mut().for_each(|l| *l = None);
        for (p, id) in members.iter().enumerate() {
            self.levels[id.0] = Some(levels[p]);
            self.agents[id.0].history.push(levels[p]);
        }

        let mut detections = 0;
        if self.config.detection && g.is_multiple_of(self.config.u) {
            let found = detect_unreliable(
                members.iter().map(|id| (*id, &self.agents[id.0].history)),
                self.config.u,
            );
            for (id, tail_level) in found {
                let agent = &mut self.agents[id.0];
                agent.alive = false;
                self.levels[id.0] = None;
                self.detection_events.push(DetectionEvent {
                    generation: g,
                    agent: id,
                    bound_value: agent.disturbance,
                    tail_level,
                });
                detections += 1;
            }
            if detections > 0 {
                self.best = self.alive_best();
            }
        }

        let alive = self.alive_ids();
        if alive.len() < MIN_SWARM {
            self.log.push(self.record(g, accuracy, detections, false));
            if alive.len() >= 2 {
                self.topology = revary(&alive, self.config.sparsity, &mut self.topology_rng)
                    .expect("two or more alive");
            }
            self.generation += 1;
            self.status = Some(Termination::DegenerateSwarm);
            return self.status;
        }

        let rule = UpdateRule {
            phi: self.config.phi,
            domain: self.objective.domain(),
            inertia: self.config.inertia_source,
        };
        let moves: Vec<_> = alive
            .iter()
            .filter_map(|&id| {
                propose_move(
                    id,
                    &self.particles,
                    &self.levels,
                    &self.topology,
                    rule,
                    &mut self.evolution_rngs[id.0],
                )
            })
            .collect();

        let mut evaluated = 0;
        let mut partial = false;
        for mv in moves {
            if self.budget.is_exhausted() {
                partial = true;
                break;
            }
            self.particles[mv.agent.0] = mv.particle;
            self.evaluate(mv.agent);
            evaluated += 1;
        }
        if self.config.reevaluate_elites {
            for &id in &alive {
                if self.levels[id.0] == Some(Level::L1) && self.evaluate(id) {
                    evaluated += 1;
                }
            }
            self.best = self.alive_best();
        }

        self.log.push(self.record(g, accuracy, detections, partial));
        self.topology =
            revary(&alive, self.config.sparsity, &mut self.topology_rng).expect("alive swarm >= 8");
        self.generation += 1;

        if evaluated == 0 {
            self.idle_generations += 1;
        } else {
            self.idle_generations = 0;
        }
        if self.budget.is_exhausted() {
            self.status = Some(Termination::BudgetExhausted);
        } else if self.idle_generations >= STALL_LIMIT {
            log::warn!(
                "seed {}: no evaluations for {STALL_LIMIT} generations",
                self.seed
            );
            self.status = Some(Termination::Stalled);
        }
        self.status
    }

    fn record(
        &self,
        g: usize,
        accuracy: f64,
        detections: usize,
        partial: bool,
    ) -> GenerationRecord {
        GenerationRecord {
            generation: g,
            fes: self.budget.used_fes(),
            best_fitness: self.best.fitness,
            best_true_fitness: self.true_best.fitness,
            alive: self.agents.iter().filter(|a| a.alive).count(),
            layered_accuracy: accuracy,
            detections,
            partial,
        }
    }

    /// Steps until termination and returns the server's verdict.
    pub fn run_to_end(mut self) -> RunResult {
        while self.step().is_none() {}
        self.finish()
    }

    /// Ranks the alive crowd once more and evaluates the top candidate
    /// without noise. This evaluation is not charged to the budget.
    pub fn finish(self) -> RunResult {
        let members = self.topology.members();
        let top = if members.len() >= 2 {
            let fitness: Vec<f64> = members
                .iter()
                .map(|id| self.agents[id.0].cached_fitness)
                .collect();
            let (matrix, _) = build_comparisons(&fitness, &self.topology);
            members[competition_rank(&matrix, self.config.lambda).order[0]]
        } else {
            self.alive_ids()[0]
        };
        let x_best = self.particles[top.0].position.clone();
        let f_server = self.objective.eval(&x_best);
        RunResult {
            seed: self.seed,
            f_server,
            x_best,
            fes_used: self.budget.used_fes(),
            generations: self.generation - 1,
            detection_events: self.detection_events,
            convergence_log: self.log,
            termination: self.status.unwrap_or(Termination::BudgetExhausted),
            tuples: self.tuples,
            best_so_far: self.best,
            true_best_so_far: self.true_best,
            final_alive: self.agents.iter().filter(|a| a.alive).count(),
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn budget(&self) -> &EvalBudget {
        &self.budget
    }

    pub fn agents(&self) -> &[WorkerAgent] {
        &self.agents
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Levels assigned in the last generation; `None` for dead agents and
    /// before the first generation.
    pub fn levels(&self) -> &[Option<Level>] {
        &self.levels
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn best_so_far(&self) -> &BestRecord {
        &self.best
    }

    pub fn true_best_so_far(&self) -> &BestRecord {
        &self.true_best
    }

    pub fn detection_events(&self) -> &[DetectionEvent] {
        &self.detection_events
    }

    pub fn log(&self) -> &[GenerationRecord] {
        &self.log
    }

    pub fn status(&self) -> Option<Termination> {
        self.status
    }
}
