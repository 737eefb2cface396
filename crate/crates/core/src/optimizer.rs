//! Level-based learning swarm update restricted to topology neighbors.
//!
//! Level-1 particles are kept. A particle in a lower level learns from two
//! exemplars drawn from strictly better-ranked neighbors:
//!
//! ```text
//! v' = r1 * v + r2 * (x1 - x) + phi * r3 * (x2 - x)
//! x' = x + v'
//! ```
//!
//! where `x1` comes from the better of the two exemplar levels. Level-2
//! particles take both exemplars from level 1. Coordinates leaving the
//! domain are re-drawn uniformly with their velocity zeroed.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::problems::SearchDomain;
use crate::ranking::Level;
use crate::topology::Topology;
use crate::AgentId;

pub const DEFAULT_PHI: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl Particle {
    pub fn at_rest(position: Vec<f64>) -> Self {
        let velocity = vec![0.0; position.len()];
        Self { position, velocity }
    }
}

/// What the first term of the velocity update scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InertiaSource {
    /// `r1 * v`, the usual level-based learning form.
    #[default]
    Velocity,
    /// `r1 * x`, kept for comparison.
    Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exemplars {
    /// `first` is from the better (or equal) level.
    Pair { first: AgentId, second: AgentId },
    /// No better-ranked neighbor; the agent stays put this generation.
    Fallback,
}

fn pick_two<R: Rng + ?Sized>(pool: &[AgentId], rng: &mut R) -> (AgentId, AgentId) {
    if pool.len() == 1 {
        return (pool[0], pool[0]);
    }
    let a = rng.random_range(0..pool.len());
    let mut b = rng.random_range(0..pool.len() - 1);
    if b >= a {
        b += 1;
    }
    (pool[a], pool[b])
}

/// Chooses two exemplars for `agent` among its better-ranked neighbors.
///
/// `levels[id]` is `None` for agents that are no longer part of the crowd.
pub fn select_exemplars<R: Rng + ?Sized>(
    agent: AgentId,
    levels: &[Option<Level>],
    topology: &Topology,
    rng: &mut R,
) -> Exemplars {
    let own = levels[agent.0].expect("agent has no level");
    assert!(own != Level::L1, "level-1 agents do not learn");

    let mut by_level: BTreeMap<Level, Vec<AgentId>> = BTreeMap::new();
    for &n in topology.neighbors(agent) {
        if let Some(l) = levels[n.0] {
            if l < own {
                by_level.entry(l).or_default().push(n);
            }
        }
    }

    if own == Level::L2 {
        return match by_level.get(&Level::L1) {
            Some(pool) => {
                let (first, second) = pick_two(pool, rng);
                Exemplars::Pair { first, second }
            }
            None => Exemplars::Fallback,
        };
    }

    let present: Vec<&Vec<AgentId>> = by_level.values().collect();
    match present.len() {
        0 => Exemplars::Fallback,
        1 => {
            let (first, second) = pick_two(present[0], rng);
            Exemplars::Pair { first, second }
        }
        k => {
            let a = rng.random_range(0..k);
            let mut b = rng.random_range(0..k - 1);
            if b >= a {
                b += 1;
            }
            let (better, worse) = (a.min(b), a.max(b));
            let first = present[better][rng.random_range(0..present[better].len())];
            let second = present[worse][rng.random_range(0..present[worse].len())];
            Exemplars::Pair { first, second }
        }
    }
}

/// Swarm update with an explicit source of `U(0,1)` draws.
///
/// Draw order per dimension: `r1`, `r2`, `r3`, then one more draw if the
/// coordinate has to be re-initialized.
pub fn llso_update_with<D: FnMut() -> f64>(
    particle: &Particle,
    first: &[f64],
    second: &[f64],
    phi: f64,
    domain: &SearchDomain,
    inertia: InertiaSource,
    mut draw: D,
) -> Particle {
    let dim = particle.position.len();
    assert_eq!(dim, domain.dim());
    let mut position = Vec::with_capacity(dim);
    let mut velocity = Vec::with_capacity(dim);
    for d in 0..dim {
        let x = particle.position[d];
        let (r1, r2, r3) = (draw(), draw(), draw());
        let carried = match inertia {
            InertiaSource::Velocity => particle.velocity[d],
            InertiaSource::Position => x,
        };
        let mut v = r1 * carried + r2 * (first[d] - x) + phi * r3 * (second[d] - x);
        let mut nx = x + v;
        let (lo, hi) = (domain.lower()[d], domain.upper()[d]);
        if !(lo..=hi).contains(&nx) {
            nx = lo + draw() * (hi - lo);
            v = 0.0;
        }
        position.push(nx);
        velocity.push(v);
    }
    Particle { position, velocity }
}

pub fn llso_update<R: Rng + ?Sized>(
    particle: &Particle,
    first: &[f64],
    second: &[f64],
    phi: f64,
    domain: &SearchDomain,
    inertia: InertiaSource,
    rng: &mut R,
) -> Particle {
    llso_update_with(particle, first, second, phi, domain, inertia, || {
        rng.random::<f64>()
    })
}

/// Parameters shared by every particle in one generation.
#[derive(Debug, Clone, Copy)]
pub struct UpdateRule<'a> {
    pub phi: f64,
    pub domain: &'a SearchDomain,
    pub inertia: InertiaSource,
}

/// Proposed move of one agent, computed from the pre-generation swarm.
#[derive(Debug, Clone, PartialEq)]
pub struct Move {
    pub agent: AgentId,
    pub exemplars: (AgentId, AgentId),
    pub particle: Particle,
}

/// Proposes the move of one agent. Returns `None` for level-1 agents, dead
/// agents and fallbacks.
pub fn propose_move<R: Rng + ?Sized>(
    agent: AgentId,
    swarm: &[Particle],
    levels: &[Option<Level>],
    topology: &Topology,
    rule: UpdateRule<'_>,
    rng: &mut R,
) -> Option<Move> {
    match levels[agent.0] {
        None | Some(Level::L1) => return None,
        Some(_) => {}
    }
    match select_exemplars(agent, levels, topology, rng) {
        Exemplars::Fallback => None,
        Exemplars::Pair { first, second } => {
            let particle = llso_update(
                &swarm[agent.0],
                &swarm[first.0].position,
                &swarm[second.0].position,
                rule.phi,
                rule.domain,
                rule.inertia,
                rng,
            );
            Some(Move {
                agent,
                exemplars: (first, second),
                particle,
            })
        }
    }
}

/// Moves every level-2..4 agent that has a better-ranked neighbor.
///
/// All exemplar positions are read from the swarm as it was before the
/// generation, and each agent draws from its own stream `rngs[id]`, so the
/// result does not depend on processing order. Returns the ids that moved,
/// ascending.
pub fn evolve_generation<R: Rng>(
    swarm: &mut [Particle],
    levels: &[Option<Level>],
    topology: &Topology,
    rule: UpdateRule<'_>,
    rngs: &mut [R],
) -> Vec<AgentId> {
    let moves: Vec<Move> = rngs
        .iter_mut()
        .enumerate()
        .filter_map(|(i, rng)| propose_move(AgentId(i), swarm, levels, topology, rule, rng))
        .collect();
    let updated = moves.iter().map(|m| m.agent).collect();
    for m in moves {
        swarm[m.agent.0] = m.particle;
    }
    updated
}
