//! Policy analysis over trajectory datasets.

pub mod divergence;
pub mod metrics;
pub mod policy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::puzzle::DiskCount;
use crate::search::{DistanceMap, SearchError};
use divergence::{jsd, DivergenceError};
use metrics::{loop_rate, unique_subsequence_proportion, Scored};
use policy::{
    estimate_joint_policy, reference_from_policy, restrict_to_three_action_states, ReferenceKind,
    TransitionDataset,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no transitions for {0} disks")]
    EmptyDataset(DiskCount),
    #[error("no states with {0} valid actions in the policy")]
    EmptyRestriction(usize),
    #[error("empty state marginal")]
    EmptyMarginal,
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    SuccessRate,
    LoopRate,
    JsdVsOptimal,
    JsdVsRandom,
    UniqueSubseqK2,
    UniqueSubseqK3,
    MeanMoves,
}

impl MetricName {
    pub const ALL: [MetricName; 7] = [
        MetricName::SuccessRate,
        MetricName::LoopRate,
        MetricName::JsdVsOptimal,
        MetricName::JsdVsRandom,
        MetricName::UniqueSubseqK2,
        MetricName::UniqueSubseqK3,
        MetricName::MeanMoves,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::SuccessRate => "success_rate",
            MetricName::LoopRate => "loop_rate",
            MetricName::JsdVsOptimal => "jsd_vs_optimal",
            MetricName::JsdVsRandom => "jsd_vs_random",
            MetricName::UniqueSubseqK2 => "unique_subseq_k2",
            MetricName::UniqueSubseqK3 => "unique_subseq_k3",
            MetricName::MeanMoves => "mean_moves",
        }
    }

    /// Whether values are confined to [0, 1].
    pub fn is_unit_interval(self) -> bool {
        self != MetricName::MeanMoves
    }
}

impl std::fmt::Display for MetricName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One exported metric value; `None` marks an undefined metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model_id: String,
    pub n: DiskCount,
    pub metric_name: MetricName,
    pub value: Option<f64>,
}

/// Outcome of one episode or one-shot answer, as needed for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: DiskCount,
    pub solved: bool,
    pub moves: u64,
}

impl Scored for RunSummary {
    fn disk_count(&self) -> DiskCount {
        self.n
    }

    fn solved(&self) -> bool {
        self.solved
    }
}

fn success_and_moves(model_id: &str, n: DiskCount, runs: &[RunSummary]) -> Result<Vec<MetricRow>, AnalysisError> {
    let rate = metrics::success_rate(runs, n)?;
    let at_n: Vec<_> = runs.iter().filter(|r| r.n == n).collect();
    let mean = at_n.iter().map(|r| r.moves as f64).sum::<f64>() / at_n.len() as f64;
    Ok(vec![
        row(model_id, n, MetricName::SuccessRate, Some(rate)),
        row(model_id, n, MetricName::MeanMoves, Some(mean)),
    ])
}

fn row(model_id: &str, n: DiskCount, metric_name: MetricName, value: Option<f64>) -> MetricRow {
    MetricRow { model_id: model_id.to_owned(), n, metric_name, value }
}

/// JSD of the model's three-action-state policy against the optimal and
/// random references; `None` when the model never visited such a state.
pub fn policy_divergences(
    d: &TransitionDataset,
    n: DiskCount,
    dist: &DistanceMap,
) -> Result<Option<(f64, f64)>, AnalysisError> {
    let joint = estimate_joint_policy(d, n)?;
    let model = match restrict_to_three_action_states(&joint) {
        Ok(p) => p,
        Err(AnalysisError::EmptyRestriction(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let optimal = reference_from_policy(&model, ReferenceKind::Optimal, dist)?;
    let random = reference_from_policy(&model, ReferenceKind::Random, dist)?;
    Ok(Some((jsd(&model, &optimal), jsd(&model, &random))))
}

/// Every metric for one agentic (model, n) cell.
pub fn agentic_cell_metrics(
    model_id: &str,
    n: DiskCount,
    d: &TransitionDataset,
    runs: &[RunSummary],
    dist: &DistanceMap,
) -> Result<Vec<MetricRow>, AnalysisError> {
    let mut rows = success_and_moves(model_id, n, runs)?;
    let has_transitions = d.at(n).next().is_some();
    let (loops, divergences, k2, k3) = if has_transitions {
        (
            Some(loop_rate(d, n)?),
            policy_divergences(d, n, dist)?,
            unique_subsequence_proportion(d, n, 2)?,
            unique_subsequence_proportion(d, n, 3)?,
        )
    } else {
        (None, None, None, None)
    };
    rows.push(row(model_id, n, MetricName::LoopRate, loops));
    rows.push(row(model_id, n, MetricName::JsdVsOptimal, divergences.map(|d| d.0)));
    rows.push(row(model_id, n, MetricName::JsdVsRandom, divergences.map(|d| d.1)));
    rows.push(row(model_id, n, MetricName::UniqueSubseqK2, k2));
    rows.push(row(model_id, n, MetricName::UniqueSubseqK3, k3));
    Ok(rows)
}

/// Success rate and mean answer length for one one-shot (model, n) cell.
pub fn oneshot_cell_metrics(model_id: &str, n: DiskCount, runs: &[RunSummary]) -> Result<Vec<MetricRow>, AnalysisError> {
    success_and_moves(model_id, n, runs)
}
