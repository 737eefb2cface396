//! Time-varying random communication graphs with a guaranteed minimum degree.
//!
//! Every alive agent draws `t = max(1, min(floor(s * n), n - 1))` distinct
//! partners uniformly from its alive peers, and the edge set is the
//! symmetric closure of all draws. Degrees are therefore at least `t` and,
//! in expectation, below `2t`.

use rand::seq::index;
use rand::Rng;

use crate::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("topology needs at least 2 alive agents, got {alive}")]
pub struct TopologyDegenerate {
    pub alive: usize,
}

/// Undirected neighbor lists over a set of agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    members: Vec<AgentId>,
    neighbors: Vec<Vec<AgentId>>,
    target_degree: usize,
}

/// Floor on every agent's degree for `n` agents at the given sparsity.
pub fn target_degree(n: usize, sparsity: f64) -> usize {
    let raw = (sparsity * n as f64 + 1e-9).floor() as usize;
    raw.min(n.saturating_sub(1)).max(1)
}

/// Draws a fresh random topology over `alive`.
pub fn random_topology<R: Rng + ?Sized>(
    alive: &[AgentId],
    sparsity: f64,
    rng: &mut R,
) -> Result<Topology, TopologyDegenerate> {
    assert!(
        sparsity > 0.0 && sparsity <= 1.0,
        "sparsity must be in (0, 1]"
    );
    let mut members = alive.to_vec();
    members.sort_unstable();
    members.dedup();
    let n = members.len();
    if n < 2 {
        return Err(TopologyDegenerate { alive: n });
    }
    let t = target_degree(n, sparsity);

    let mut adjacency = vec![vec![false; n]; n];
    if t == n - 1 {
        for (i, row) in adjacency.iter_mut().enumerate() {
            row.iter_mut().enumerate().for_each(|(j, c)| *c = i != j);
        }
    } else {
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            // Sample among the n - 1 peers, skipping self.
            for k in index::sample(rng, n - 1, t) {
                let j = if k >= i { k + 1 } else { k };
                adjacency[i][j] = true;
                adjacency[j][i] = true;
            }
        }
    }

    let neighbors = adjacency
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, c)| **c)
                .map(|(j, _)| members[j])
                .collect()
        })
        .collect();
    Ok(Topology {
        members,
        neighbors,
        target_degree: t,
    })
}

/// A fresh topology for the next generation; same contract as
/// [`random_topology`].
pub fn revary<R: Rng + ?Sized>(
    alive: &[AgentId],
    sparsity: f64,
    rng: &mut R,
) -> Result<Topology, TopologyDegenerate> {
    random_topology(alive, sparsity, rng)
}

impl Topology {
    /// Sorted agent ids covered by this topology.
    pub fn members(&self) -> &[AgentId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn target_degree(&self) -> usize {
        self.target_degree
    }

    pub fn position(&self, id: AgentId) -> Option<usize> {
        self.members.binary_search(&id).ok()
    }

    /// Sorted neighbor ids of `id`; empty for agents outside the topology.
    pub fn neighbors(&self, id: AgentId) -> &[AgentId] {
        match self.position(id) {
            Some(p) => &self.neighbors[p],
            None => &[],
        }
    }

    pub fn degree(&self, id: AgentId) -> usize {
        self.neighbors(id).len()
    }

    pub fn contains_edge(&self, a: AgentId, b: AgentId) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    /// Undirected edges `(a, b)` with `a < b`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.members
            .iter()
            .zip(&self.neighbors)
            .flat_map(|(a, ns)| ns.iter().filter(move |b| *a < **b).map(move |b| (*a, *b)))
    }
}
