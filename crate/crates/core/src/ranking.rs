//! Server-side competition ranking from sparse pairwise comparisons.
//!
//! The pipeline turns the win/lose/tie record `M` into a priority vector:
//!
//! 1. accumulate win and lose counts (`M_w`, `M_l`, a tie counts half each);
//! 2. fuzzy preference: win rate pulled toward 1/2 by
//!    `lambda * 2^(-M_t(i,j) / max M_t)`, exactly 1/2 on an even record and
//!    for pairs that never met;
//! 3. ratio transform `m / (1 - m)`;
//! 4. divide every column by its Euclidean norm;
//! 5. `PRI(i)` = row sum over grand sum.
//!
//! Agents are then sorted by descending priority (ties by ascending index)
//! and cut into four levels of `floor(n/4)` agents, the remainder going to
//! the last level.

use std::collections::VecDeque;
use std::fmt;

use crate::error::ConfigError;
use crate::topology::Topology;
use crate::AgentId;

pub const DEFAULT_LAMBDA: f64 = 0.01;

/// Outcome of row agent `i` against column agent `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// `F_i < F_j`
    Win,
    /// `F_i > F_j`
    Lose,
    Tie,
    Absent,
}

impl Outcome {
    fn mirrored(self) -> Self {
        match self {
            Outcome::Win => Outcome::Lose,
            Outcome::Lose => Outcome::Win,
            other => other,
        }
    }

    /// Tuple code used on the wire: `w`, `l` or `t`.
    pub fn code(self) -> Option<char> {
        match self {
            Outcome::Win => Some('w'),
            Outcome::Lose => Some('l'),
            Outcome::Tie => Some('t'),
            Outcome::Absent => None,
        }
    }
}

/// Antisymmetric `n x n` comparison record; the diagonal is always absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonMatrix {
    n: usize,
    cells: Vec<Outcome>,
}

impl ComparisonMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            cells: vec![Outcome::Absent; n * n],
        }
    }

    /// Builds a matrix from numeric rows: `1` win, `0` lose, `0.5` tie,
    /// `None` absent. Panics if the rows are not antisymmetric.
    pub fn from_numeric(rows: &[Vec<Option<f64>>]) -> Self {
        let n = rows.len();
        let mut m = Self::new(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            for (j, cell) in row.iter().enumerate() {
                let o = match cell {
                    None => Outcome::Absent,
                    Some(v) if *v == 1.0 => Outcome::Win,
                    Some(v) if *v == 0.0 => Outcome::Lose,
                    Some(v) if *v == 0.5 => Outcome::Tie,
                    Some(v) => panic!("invalid comparison value {v}"),
                };
                assert!(i != j || o == Outcome::Absent, "diagonal must be absent");
                m.cells[i * n + j] = o;
            }
        }
        for i in 0..n {
            for j in 0..n {
                assert_eq!(
                    m.get(i, j),
                    m.get(j, i).mirrored(),
                    "cells ({i},{j}) and ({j},{i}) disagree"
                );
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Outcome {
        self.cells[i * self.n + j]
    }

    /// Records `outcome` for `(i, j)` and its mirror for `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, outcome: Outcome) {
        assert_ne!(i, j, "agents do not compare with themselves");
        self.cells[i * self.n + j] = outcome;
        self.cells[j * self.n + i] = outcome.mirrored();
    }

    pub fn comparisons_of(&self, i: usize) -> usize {
        (0..self.n)
            .filter(|&j| self.get(i, j) != Outcome::Absent)
            .count()
    }
}

/// A comparison message `[id1, id2, w/l/t]` sent by a worker to the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComparisonTuple {
    pub id1: AgentId,
    pub id2: AgentId,
    pub outcome: Outcome,
}

impl fmt::Display for ComparisonTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{}",
            self.id1,
            self.id2,
            self.outcome.code().unwrap_or('?')
        )
    }
}

/// Compares neighbors' uncertain fitness values.
///
/// `fitness[p]` belongs to `topology.members()[p]`; the returned matrix uses
/// the same positions. One tuple is emitted per ordered edge direction.
pub fn build_comparisons(
    fitness: &[f64],
    topology: &Topology,
) -> (ComparisonMatrix, Vec<ComparisonTuple>) {
    let members = topology.members();
    assert_eq!(
        fitness.len(),
        members.len(),
        "one fitness value per topology member"
    );
    let mut m = ComparisonMatrix::new(members.len());
    let mut tuples = Vec::new();
    for (i, &a) in members.iter().enumerate() {
        for &b in topology.neighbors(a) {
            let j = topology.position(b).expect("neighbor outside topology");
            let outcome = if fitness[i] < fitness[j] {
                Outcome::Win
            } else if fitness[i] > fitness[j] {
                Outcome::Lose
            } else {
                Outcome::Tie
            };
            m.cells[i * m.n + j] = outcome;
            tuples.push(ComparisonTuple {
                id1: a,
                id2: b,
                outcome,
            });
        }
    }
    (m, tuples)
}

/// Priority vector and the order it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingOutcome {
    /// Nonnegative priorities summing to one.
    pub pri: Vec<f64>,
    /// Positions sorted best to worst.
    pub order: Vec<usize>,
    /// Positions that had no comparison at all; they rank from a flat
    /// 1/2 preference row.
    pub isolated: Vec<usize>,
}

impl RankingOutcome {
    /// One-based rank of each position (`rank[order[0]] == 1`).
    pub fn rank_vector(&self) -> Vec<usize> {
        let mut rank = vec![0; self.order.len()];
        for (r, &p) in self.order.iter().enumerate() {
            rank[p] = r + 1;
        }
        rank
    }

    pub fn levels(&self) -> Result<Vec<Level>, ConfigError> {
        classify_levels(&self.order, self.order.len())
    }
}

/// Runs the competition ranking over `m`.
pub fn competition_rank(m: &ComparisonMatrix, lambda: f64) -> RankingOutcome {
    let n = m.len();
    let mut wins = vec![0.0f64; n * n];
    let mut totals = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let (w, l) = match m.get(i, j) {
                Outcome::Win => (1.0, 0.0),
                Outcome::Lose => (0.0, 1.0),
                Outcome::Tie => (0.5, 0.5),
                Outcome::Absent => continue,
            };
            wins[i * n + j] += w;
            totals[i * n + j] += w + l;
        }
    }
    let max_total = totals.iter().copied().fold(0.0, f64::max);

    // Fuzzy preference followed by the ratio transform.
    let mut ratio = vec![1.0f64; n * n];
    for idx in 0..n * n {
        let t = totals[idx];
        if t == 0.0 {
            continue;
        }
        let w = wins[idx];
        let penalty = lambda * (-t / max_total).exp2();
        let fuzzy = if w > t / 2.0 {
            w / t - penalty
        } else if w < t / 2.0 {
            w / t + penalty
        } else {
            0.5
        };
        assert!(
            fuzzy < 1.0,
            "fuzzy preference reached 1; lambda must be positive"
        );
        ratio[idx] = fuzzy / (1.0 - fuzzy);
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| ratio[i * n + j].powi(2)).sum::<f64>().sqrt())
        .collect();
    let row_sums: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| ratio[i * n + j] / norms[j]).sum())
        .collect();
    let grand: f64 = row_sums.iter().sum();
    let pri: Vec<f64> = row_sums.iter().map(|r| r / grand).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pri[b].total_cmp(&pri[a]).then(a.cmp(&b)));
    let isolated = (0..n).filter(|&i| m.comparisons_of(i) == 0).collect();
    RankingOutcome {
        pri,
        order,
        isolated,
    }
}

/// One of the four quality levels; `L1` is best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    L1 = 1,
    L2 = 2,
    L3 = 3,
    L4 = 4,
}

impl Level {
    pub fn number(self) -> u8 {
        self as u8
    }

    fn from_block(block: usize) -> Self {
        match block {
            0 => Level::L1,
            1 => Level::L2,
            2 => Level::L3,
            _ => Level::L4,
        }
    }
}

/// Level of every position given the best-to-worst `order` of `n` agents.
pub fn classify_levels(order: &[usize], n: usize) -> Result<Vec<Level>, ConfigError> {
    if n < 4 {
        return Err(ConfigError::single(
            "np",
            format!("need at least 4 agents to form levels, got {n}"),
        ));
    }
    assert_eq!(order.len(), n);
    let block = n / 4;
    let mut levels = vec![Level::L4; n];
    for (rank, &p) in order.iter().enumerate() {
        levels[p] = Level::from_block((rank / block).min(3));
    }
    Ok(levels)
}

/// Levels from the exact ascending sort of uncertain fitness (ties by
/// position), i.e. what a fully informed server would assign.
pub fn oracle_levels(fitness: &[f64]) -> Result<Vec<Level>, ConfigError> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
    classify_levels(&order, fitness.len())
}

/// Fraction of agents whose level matches the oracle level.
pub fn layered_accuracy(levels: &[Level], oracle: &[Level]) -> f64 {
    assert_eq!(levels.len(), oracle.len());
    if levels.is_empty() {
        return 1.0;
    }
    let hits = levels.iter().zip(oracle).filter(|(a, b)| a == b).count();
    hits as f64 / levels.len() as f64
}

/// The last `window` level assignments of one agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelHistory {
    window: usize,
    entries: VecDeque<Level>,
}

impl LevelHistory {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1);
        Self {
            window,
            entries: VecDeque::with_capacity(window.min(1024)),
        }
    }

    pub fn push(&mut self, level: Level) {
        if self.entries.len() == self.window {
            self.entries.pop_front();
        }
        self.entries.push_back(level);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn entries(&self) -> impl Iterator<Item = Level> + '_ {
        self.entries.iter().copied()
    }

    /// `Some(L1)` or `Some(L4)` when the trailing `window` entries all sit in
    /// that tail level.
    pub fn persistent_tail(&self, window: usize) -> Option<Level> {
        if window == 0 || self.entries.len() < window {
            return None;
        }
        let mut tail = self.entries.iter().rev().take(window);
        let first = *tail.next()?;
        if !matches!(first, Level::L1 | Level::L4) {
            return None;
        }
        tail.all(|l| *l == first).then_some(first)
    }
}

/// Agents whose last `u` levels are all `L1` or all `L4`, with that level.
pub fn detect_unreliable<'a, I>(histories: I, u: usize) -> Vec<(AgentId, Level)>
where
    I: IntoIterator<Item = (AgentId, &'a LevelHistory)>,
{
    histories
        .into_iter()
        .filter_map(|(id, h)| h.persistent_tail(u).map(|l| (id, l)))
        .collect()
}
