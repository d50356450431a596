//! Trajectory metrics: loop rate, unique continuation proportion, success
//! rate, and the token-budget model for one-shot answers.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::policy::TransitionDataset;
use super::AnalysisError;
use crate::agents::oneshot::OneShotResult;
use crate::env::{EpisodeResult, Outcome};
use crate::puzzle::{DiskCount, MoveAction};

/// Mean over episodes of the fraction of transitions that land on a state
/// already visited earlier in the same episode.
pub fn loop_rate(d: &TransitionDataset, n: DiskCount) -> Result<f64, AnalysisError> {
    let episodes = d.episodes(n);
    if episodes.is_empty() {
        return Err(AnalysisError::EmptyDataset(n));
    }
    let mut sum = 0.0;
    for ep in &episodes {
        let mut seen = HashSet::from([ep[0].state]);
        let revisits = ep.iter().filter(|r| !seen.insert(r.next_state)).count();
        sum += revisits as f64 / ep.len() as f64;
    }
    Ok(sum / episodes.len() as f64)
}

/// Per-(episode, state) continuation statistics for one k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuationStats {
    pub visits: usize,
    pub continuations: BTreeSet<Vec<MoveAction>>,
}

/// Length-k action continuations for every state visited at least twice
/// with k actions still to come, keyed by (episode index, state code).
pub fn continuation_stats(
    d: &TransitionDataset,
    n: DiskCount,
    k: usize,
) -> BTreeMap<(usize, u32), ContinuationStats> {
    let mut out = BTreeMap::new();
    for (e, ep) in d.episodes(n).iter().enumerate() {
        let actions: Vec<_> = ep.iter().map(|r| r.action).collect();
        let mut per_state: BTreeMap<u32, ContinuationStats> = BTreeMap::new();
        for i in 0..ep.len() {
            if i + k > actions.len() {
                break;
            }
            let entry = per_state.entry(ep[i].state.code()).or_insert_with(|| ContinuationStats {
                visits: 0,
                continuations: BTreeSet::new(),
            });
            entry.visits += 1;
            entry.continuations.insert(actions[i..i + k].to_vec());
        }
        for (code, stats) in per_state {
            if stats.visits >= 2 {
                out.insert((e, code), stats);
            }
        }
    }
    out
}

/// Distinct length-k continuations per qualifying visit, visit-weighted
/// across (episode, state) pairs. `None` when no state qualifies.
pub fn unique_subsequence_proportion(
    d: &TransitionDataset,
    n: DiskCount,
    k: usize,
) -> Result<Option<f64>, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::InvalidArgument("k must be at least 1".into()));
    }
    let stats = continuation_stats(d, n, k);
    let visits: usize = stats.values().map(|s| s.visits).sum();
    if visits == 0 {
        return Ok(None);
    }
    let distinct: usize = stats.values().map(|s| s.continuations.len()).sum();
    Ok(Some(distinct as f64 / visits as f64))
}

/// Anything that can be scored as solved or not at a given complexity.
pub trait Scored {
    fn disk_count(&self) -> DiskCount;
    fn solved(&self) -> bool;
}

impl Scored for EpisodeResult {
    fn disk_count(&self) -> DiskCount {
        self.trajectory.n
    }

    fn solved(&self) -> bool {
        self.outcome == Outcome::Solved
    }
}

impl Scored for OneShotResult {
    fn disk_count(&self) -> DiskCount {
        self.n
    }

    fn solved(&self) -> bool {
        self.reached_goal
    }
}

pub fn success_rate<R: Scored>(results: &[R], n: DiskCount) -> Result<f64, AnalysisError> {
    let at_n: Vec<_> = results.iter().filter(|r| r.disk_count() == n).collect();
    if at_n.is_empty() {
        return Err(AnalysisError::EmptyDataset(n));
    }
    Ok(at_n.iter().filter(|r| r.solved()).count() as f64 / at_n.len() as f64)
}

/// Token cost of writing out a full solution: tokens_per_move * (2^N - 1)^2 + C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudgetModel {
    pub tokens_per_move: u64,
    pub constant_c: u64,
    pub budget_l_max: u64,
}

impl Default for TokenBudgetModel {
    fn default() -> Self {
        Self { tokens_per_move: 5, constant_c: 0, budget_l_max: 64_000 }
    }
}

/// Operating range quoted alongside the logarithmic estimate.
pub const REPORTED_RANGE: (u32, u32) = (7, 8);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudgetDiagnostic {
    pub n_max_direct: u32,
    pub n_max_log_expression: u32,
    pub reported_range: (u32, u32),
    pub message: String,
}

impl TokenBudgetModel {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.tokens_per_move == 0 || self.budget_l_max == 0 {
            return Err(AnalysisError::InvalidArgument(
                "tokens_per_move and budget must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn token_budget(&self, n: u32) -> u128 {
        let moves = (1u128 << n) - 1;
        u128::from(self.tokens_per_move) * moves * moves + u128::from(self.constant_c)
    }

    /// Largest N with T(N) <= L_max, found by evaluating T directly.
    pub fn n_max(&self) -> u32 {
        (1..64).take_while(|&n| self.token_budget(n) <= u128::from(self.budget_l_max)).last().unwrap_or(0)
    }

    /// floor(log2(L_max / tokens_per_move)).
    pub fn n_max_log_expression(&self) -> u32 {
        (self.budget_l_max as f64 / self.tokens_per_move as f64).log2().floor().max(0.0) as u32
    }

    pub fn diagnostic(&self) -> TokenBudgetDiagnostic {
        let direct = self.n_max();
        let log_expr = self.n_max_log_expression();
        let (lo, hi) = REPORTED_RANGE;
        let in_range = |v: u32| (lo..=hi).contains(&v);
        let message = format!(
            "L_max={} C={}: inverting T(N) gives n_max={direct}; floor(log2(L_max/{})) gives {log_expr}; \
             reported operating range {lo}-{hi} disks; {}",
            self.budget_l_max,
            self.constant_c,
            self.tokens_per_move,
            if in_range(direct) && in_range(log_expr) {
                "all consistent".to_owned()
            } else {
                format!(
                    "inconsistent (direct {} range, log expression {} range)",
                    if in_range(direct) { "inside" } else { "outside" },
                    if in_range(log_expr) { "inside" } else { "outside" }
                )
            }
        );
        TokenBudgetDiagnostic {
            n_max_direct: direct,
            n_max_log_expression: log_expr,
            reported_range: REPORTED_RANGE,
            message,
        }
    }
}

pub fn token_budget(model: &TokenBudgetModel, n: u32) -> u128 {
    model.token_budget(n)
}

pub fn n_max(model: &TokenBudgetModel) -> u32 {
    model.n_max()
}
