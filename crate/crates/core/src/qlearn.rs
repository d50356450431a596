//! Tabular Q-learning with a goal-only reward, and the closed-form value
//! table it converges to: Q(s, a) = gamma^H*(T(s, a)).
//!
//! Tables cover every non-goal state and each of its valid actions. The goal
//! is absorbing and has no entries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentDecision, AgentError};
use crate::env::Observation;
use crate::puzzle::{apply_move, goal_state, is_goal, valid_actions, DiskCount, MoveAction, PuzzleState};
use crate::search::{distance_to_goal, enumerate_states, DistanceMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QLearnError {
    #[error("invalid q-learning config: {0}")]
    Config(String),
    #[error("q-table domains differ: {0}")]
    DomainMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLearnConfig {
    pub n: DiskCount,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub episodes: u64,
    pub max_steps_per_episode: u64,
    /// Optional cap on the total number of updates across all episodes.
    pub step_budget: Option<u64>,
    pub seed: u64,
}

impl QLearnConfig {
    pub fn new(n: DiskCount) -> Self {
        Self {
            n,
            gamma: 0.9,
            alpha: 1.0,
            epsilon: 0.3,
            episodes: 10_000,
            max_steps_per_episode: 4 * n.optimal_length().max(1),
            step_budget: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), QLearnError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(QLearnError::Config(format!("gamma {} not in (0, 1)", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(QLearnError::Config(format!("alpha {} not in (0, 1]", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(QLearnError::Config(format!("epsilon {} not in (0, 1)", self.epsilon)));
        }
        if self.episodes == 0 || self.max_steps_per_episode == 0 {
            return Err(QLearnError::Config("episodes and steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n: DiskCount,
    values: BTreeMap<(PuzzleState, MoveAction), f64>,
}

impl QTable {
    /// Zero-valued table over every non-goal (state, valid action) pair.
    pub fn zeros(n: DiskCount) -> Self {
        let goal = goal_state(n);
        let values = enumerate_states(n)
            .into_iter()
            .filter(|&s| s != goal)
            .flat_map(|s| valid_actions(s).iter().map(move |a| ((s, a), 0.0)).collect::<Vec<_>>())
            .collect();
        Self { n, values }
    }

    pub fn disk_count(&self) -> DiskCount {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, s: PuzzleState, a: MoveAction) -> Option<f64> {
        self.values.get(&(s, a)).copied()
    }

    pub fn set(&mut self, s: PuzzleState, a: MoveAction, v: f64) {
        if let Some(slot) = self.values.get_mut(&(s, a)) {
            *slot = v;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (PuzzleState, MoveAction, f64)> + '_ {
        self.values.iter().map(|(&(s, a), &v)| (s, a, v))
    }

    /// Best value available from `s`; zero at the absorbing goal.
    pub fn max_value(&self, s: PuzzleState) -> f64 {
        if is_goal(s, self.n) {
            return 0.0;
        }
        valid_actions(s)
            .iter()
            .map(|a| self.get(s, a).unwrap_or(0.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Highest-valued action, first in peg-pair order on ties.
    pub fn greedy_action(&self, s: PuzzleState) -> Option<MoveAction> {
        let mut best: Option<(MoveAction, f64)> = None;
        for a in &valid_actions(s) {
            let v = self.get(s, a)?;
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((a, v));
            }
        }
        best.map(|(a, _)| a)
    }

    /// Sorted `state<TAB>action<TAB>value` lines.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<_> = self.iter().map(|(s, a, v)| (s.to_string(), a.to_string(), v)).collect();
        rows.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));
        let mut out = String::from("state\taction\tvalue\n");
        for (s, a, v) in rows {
            let _ = writeln!(out, "{s}\t{a}\t{v:.17e}");
        }
        out
    }
}

/// Goal-only reward: 1 when the move lands on the goal.
pub fn reward(_s: PuzzleState, _a: MoveAction, s_next: PuzzleState) -> f64 {
    if is_goal(s_next, s_next.disk_count()) {
        1.0
    } else {
        0.0
    }
}

/// Epsilon-greedy one-step Q-learning from uniformly random non-goal starts.
pub fn train_q(cfg: &QLearnConfig) -> Result<QTable, QLearnError> {
    cfg.validate()?;
    let n = cfg.n;
    let mut q = QTable::zeros(n);
    let goal = goal_state(n);
    let starts: Vec<_> = enumerate_states(n).into_iter().filter(|&s| s != goal).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let budget = cfg.step_budget.unwrap_or(u64::MAX);
    let mut total = 0u64;

    'episodes: for _ in 0..cfg.episodes {
        let mut s = *starts.choose(&mut rng).expect("n >= 1 has non-goal states");
        for _ in 0..cfg.max_steps_per_episode {
            let a = if rng.random::<f64>() < cfg.epsilon {
                *valid_actions(s).as_slice().choose(&mut rng).expect("actions")
            } else {
                q.greedy_action(s).expect("state in table")
            };
            let next = apply_move(s, a).expect("valid action");
            let target = reward(s, a, next) + cfg.gamma * q.max_value(next);
            let old = q.get(s, a).expect("state in table");
            q.set(s, a, old + cfg.alpha * (target - old));
            total += 1;
            if total >= budget {
                break 'episodes;
            }
            if next == goal {
                break;
            }
            s = next;
        }
    }
    Ok(q)
}

/// The table gamma^H*(T(s, a)).
pub fn closed_form_q(n: DiskCount, gamma: f64) -> Result<QTable, QLearnError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(QLearnError::Config(format!("gamma {gamma} not in (0, 1)")));
    }
    Ok(closed_form_from_distances(&distance_to_goal(n), gamma))
}

/// Same as [`closed_form_q`] over a caller-supplied distance map.
pub fn closed_form_from_distances(d: &DistanceMap, gamma: f64) -> QTable {
    let mut q = QTable::zeros(d.disk_count());
    for value in q.values.iter_mut() {
        let ((s, a), v) = value;
        let next = apply_move(*s, *a).expect("valid action");
        let h = d.get(next).expect("distance map is total");
        *v = gamma.powi(h as i32);
    }
    q
}

pub fn max_q_deviation(q: &QTable, q_ref: &QTable) -> Result<f64, QLearnError> {
    if q.n != q_ref.n || q.values.len() != q_ref.values.len() {
        return Err(QLearnError::DomainMismatch(format!(
            "{} entries for {} disks vs {} entries for {} disks",
            q.len(),
            q.n,
            q_ref.len(),
            q_ref.n
        )));
    }
    let mut worst = 0.0f64;
    for ((k1, v1), (k2, v2)) in q.values.iter().zip(&q_ref.values) {
        if k1 != k2 {
            return Err(QLearnError::DomainMismatch(format!("{} {} vs {} {}", k1.0, k1.1, k2.0, k2.1)));
        }
        worst = worst.max((v1 - v2).abs());
    }
    Ok(worst)
}

/// Largest |Q(s,a) - (r + gamma * max_a' Q(s',a'))| over the table.
pub fn bellman_residual(q: &QTable, gamma: f64) -> f64 {
    q.iter()
        .map(|(s, a, v)| {
            let next = apply_move(s, a).expect("valid action");
            (v - (reward(s, a, next) + gamma * q.max_value(next))).abs()
        })
        .fold(0.0, f64::max)
}

/// Plays greedily with respect to a learned table.
pub struct GreedyQAgent {
    table: QTable,
}

impl GreedyQAgent {
    pub fn new(table: QTable) -> Self {
        Self { table }
    }
}

impl Agent for GreedyQAgent {
    fn label(&self) -> String {
        "qlearn".into()
    }

    fn next_decision(&mut self, obs: &Observation) -> Result<AgentDecision, AgentError> {
        if obs.goal_reached || is_goal(obs.state, obs.n) {
            return Ok(AgentDecision::end_game());
        }
        let a = self
            .table
            .greedy_action(obs.state)
            .ok_or_else(|| AgentError::Other(format!("no q-values for {}", obs.state)))?;
        Ok(AgentDecision::move_disk(i64::from(a.from_peg()), i64::from(a.to_peg())))
    }
}
