//! Empirical joint policies estimated from transition datasets, and the
//! optimal / uniform-random reference policies built on the model's own
//! state-visitation marginal.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::divergence::Distribution;
use super::AnalysisError;
use crate::env::Trajectory;
use crate::puzzle::{valid_actions, DiskCount, MoveAction, PuzzleState};
use crate::search::{optimal_actions, DistanceMap};

pub type StateAction = (PuzzleState, MoveAction);

/// Probability mass over (state, action) pairs.
pub type JointPolicy = Distribution<StateAction>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: PuzzleState,
    pub action: MoveAction,
    pub next_state: PuzzleState,
    pub episode_id: String,
    pub step_index: u32,
    pub n: DiskCount,
    /// Index of the file (or trajectory) the record came from; with
    /// `episode_id` it identifies the episode.
    pub source: u32,
}

/// A multiset of realized transitions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransitionDataset {
    pub records: Vec<TransitionRecord>,
}

impl TransitionDataset {
    pub fn from_trajectories<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> Self {
        let mut records = Vec::new();
        for (source, t) in trajectories.into_iter().enumerate() {
            records.extend(t.transitions().map(|tr| TransitionRecord {
                state: tr.state,
                action: tr.action,
                next_state: tr.next_state,
                episode_id: t.episode_id.clone(),
                step_index: tr.step,
                n: t.n,
                source: source as u32,
            }));
        }
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn extend(&mut self, other: TransitionDataset) {
        self.records.extend(other.records);
    }

    pub fn at(&self, n: DiskCount) -> impl Iterator<Item = &TransitionRecord> + '_ {
        self.records.iter().filter(move |r| r.n == n)
    }

    /// Records at complexity `n` grouped per episode, in step order.
    pub fn episodes(&self, n: DiskCount) -> Vec<Vec<&TransitionRecord>> {
        let mut grouped: BTreeMap<(u32, &str), Vec<&TransitionRecord>> = BTreeMap::new();
        for r in self.at(n) {
            grouped.entry((r.source, r.episode_id.as_str())).or_default().push(r);
        }
        grouped
            .into_values()
            .map(|mut v| {
                v.sort_by_key(|r| r.step_index);
                v
            })
            .collect()
    }
}

/// mass(s, a) = count(s, a) / N over the records at complexity `n`.
pub fn estimate_joint_policy(d: &TransitionDataset, n: DiskCount) -> Result<JointPolicy, AnalysisError> {
    let mut counts: BTreeMap<StateAction, u64> = BTreeMap::new();
    let mut total = 0u64;
    for r in d.at(n) {
        *counts.entry((r.state, r.action)).or_insert(0) += 1;
        total += 1;
    }
    if total == 0 {
        return Err(AnalysisError::EmptyDataset(n));
    }
    let mass = counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect();
    Ok(JointPolicy::new(mass)?)
}

/// Restriction to states with exactly three valid actions, renormalized.
pub fn restrict_to_three_action_states(p: &JointPolicy) -> Result<JointPolicy, AnalysisError> {
    p.restrict(|(s, _)| valid_actions(*s).len() == 3)
        .map_err(|_| AnalysisError::EmptyRestriction(3))
}

/// Restriction to states with exactly two valid actions, renormalized.
pub fn restrict_to_two_action_states(p: &JointPolicy) -> Result<JointPolicy, AnalysisError> {
    p.restrict(|(s, _)| valid_actions(*s).len() == 2)
        .map_err(|_| AnalysisError::EmptyRestriction(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Optimal,
    Random,
}

/// State marginal of a joint policy.
pub fn state_marginal(p: &JointPolicy) -> BTreeMap<PuzzleState, f64> {
    let mut marginal = BTreeMap::new();
    for (&(s, _), m) in p.iter() {
        *marginal.entry(s).or_insert(0.0) += m;
    }
    marginal
}

/// Splits a joint policy into its state marginal and conditional pi(a | s).
pub fn to_conditional(p: &JointPolicy) -> (BTreeMap<PuzzleState, f64>, BTreeMap<StateAction, f64>) {
    let marginal = state_marginal(p);
    let conditional = p
        .iter()
        .map(|(&(s, a), m)| ((s, a), m / marginal[&s]))
        .collect();
    (marginal, conditional)
}

/// Inverse of [`to_conditional`].
pub fn from_conditional(
    marginal: &BTreeMap<PuzzleState, f64>,
    conditional: &BTreeMap<StateAction, f64>,
) -> Result<JointPolicy, AnalysisError> {
    let mass = conditional
        .iter()
        .map(|(&(s, a), c)| ((s, a), marginal.get(&s).copied().unwrap_or(0.0) * c))
        .collect();
    Ok(JointPolicy::new(mass)?)
}

/// mass(s, a) = m(s) * rho(a | s), where m is the state marginal of `p` and
/// rho is uniform over the optimal or the valid actions of `s`.
pub fn reference_from_policy(
    p: &JointPolicy,
    kind: ReferenceKind,
    dist: &DistanceMap,
) -> Result<JointPolicy, AnalysisError> {
    let marginal = state_marginal(p);
    if marginal.is_empty() {
        return Err(AnalysisError::EmptyMarginal);
    }
    let mut mass = BTreeMap::new();
    for (s, m) in marginal {
        let actions = match kind {
            ReferenceKind::Optimal => optimal_actions(s, dist)?,
            ReferenceKind::Random => valid_actions(s),
        };
        let share = m / actions.len() as f64;
        for a in &actions {
            mass.insert((s, a), share);
        }
    }
    Ok(JointPolicy::new(mass)?)
}

/// Reference policy over the model's visitation of three-action states.
pub fn reference_joint(
    d: &TransitionDataset,
    n: DiskCount,
    kind: ReferenceKind,
    dist: &DistanceMap,
) -> Result<JointPolicy, AnalysisError> {
    let model = restrict_to_three_action_states(&estimate_joint_policy(d, n)?)
        .map_err(|_| AnalysisError::EmptyMarginal)?;
    reference_from_policy(&model, kind, dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::{apply_move, initial_state};
    use crate::search::{canonical_solution, distance_to_goal};

    fn n(k: i64) -> DiskCount {
        DiskCount::new(k).unwrap()
    }

    fn st(text: &str) -> PuzzleState {
        text.parse().unwrap()
    }

    fn mv(f: i64, t: i64) -> MoveAction {
        MoveAction::new(f, t).unwrap()
    }

    fn record(s: PuzzleState, a: MoveAction, episode: &str, step: u32) -> TransitionRecord {
        TransitionRecord {
            state: s,
            action: a,
            next_state: apply_move(s, a).unwrap(),
            episode_id: episode.into(),
            step_index: step,
            n: s.disk_count(),
            source: 0,
        }
    }

    fn canonical_dataset(k: i64) -> TransitionDataset {
        let mut s = initial_state(n(k));
        let mut records = Vec::new();
        for (i, a) in canonical_solution(n(k)).into_iter().enumerate() {
            records.push(record(s, a, "opt", i as u32 + 1));
            s = apply_move(s, a).unwrap();
        }
        TransitionDataset { records }
    }

    #[test]
    fn estimator_examples() {
        let s = st("[[3, 2], [], [1]]");
        let d = TransitionDataset {
            records: vec![
                record(s, mv(0, 1), "e", 1),
                record(s, mv(0, 1), "e", 2),
                record(s, mv(2, 0), "e", 3),
                record(s, mv(2, 1), "e", 4),
            ],
        };
        let p = estimate_joint_policy(&d, n(3)).unwrap();
        assert_eq!(p.get(&(s, mv(0, 1))), 0.5);
        assert_eq!(p.get(&(s, mv(2, 0))), 0.25);
        assert_eq!(p.get(&(s, mv(2, 1))), 0.25);

        let single = TransitionDataset { records: vec![record(s, mv(0, 1), "e", 1)] };
        assert_eq!(estimate_joint_policy(&single, n(3)).unwrap().get(&(s, mv(0, 1))), 1.0);

        let opt = estimate_joint_policy(&canonical_dataset(3), n(3)).unwrap();
        assert_eq!(opt.len(), 7);
        assert!(opt.iter().all(|(_, m)| m == 1.0 / 7.0));

        assert!(matches!(
            estimate_joint_policy(&TransitionDataset::default(), n(3)),
            Err(AnalysisError::EmptyDataset(_))
        ));
        assert!(estimate_joint_policy(&canonical_dataset(3), n(4)).is_err());
    }

    #[test]
    fn restriction_examples() {
        let init = initial_state(n(3));
        let first_only = TransitionDataset { records: vec![record(init, mv(0, 2), "e", 1)] };
        let p = estimate_joint_policy(&first_only, n(3)).unwrap();
        assert!(matches!(
            restrict_to_three_action_states(&p),
            Err(AnalysisError::EmptyRestriction(3))
        ));
        assert_eq!(restrict_to_two_action_states(&p).unwrap(), p);

        let mixed = estimate_joint_policy(&canonical_dataset(3), n(3)).unwrap();
        let p3 = restrict_to_three_action_states(&mixed).unwrap();
        assert_eq!(p3.len(), 6);
        assert!((p3.total() - 1.0).abs() < 1e-12);
        let again = restrict_to_three_action_states(&p3).unwrap();
        assert_eq!(again.len(), p3.len());
        assert!(p3.iter().all(|(k, m)| (again.get(k) - m).abs() < 1e-15));
    }

    #[test]
    fn reference_examples() {
        let d3 = distance_to_goal(n(3));
        let a = st("[[3, 2], [], [1]]");
        let b = st("[[3], [2], [1]]");
        let only_a = JointPolicy::new(BTreeMap::from([((a, mv(0, 1)), 1.0)])).unwrap();
        let random = reference_from_policy(&only_a, ReferenceKind::Random, &d3).unwrap();
        assert_eq!(random.len(), 3);
        assert!(random.iter().all(|(_, m)| m == 1.0 / 3.0));

        let optimal = reference_from_policy(&only_a, ReferenceKind::Optimal, &d3).unwrap();
        assert_eq!(optimal.get(&(a, mv(0, 1))), 1.0);

        let split = JointPolicy::new(BTreeMap::from([((a, mv(0, 1)), 0.6), ((b, mv(2, 0)), 0.4)])).unwrap();
        let random = reference_from_policy(&split, ReferenceKind::Random, &d3).unwrap();
        for act in valid_actions(a).iter() {
            assert!((random.get(&(a, act)) - 0.2).abs() < 1e-15);
        }
        for act in valid_actions(b).iter() {
            assert!((random.get(&(b, act)) - 0.4 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn conditional_round_trip() {
        let p = estimate_joint_policy(&canonical_dataset(4), n(4)).unwrap();
        let (m, c) = to_conditional(&p);
        let back = from_conditional(&m, &c).unwrap();
        for (k, v) in p.iter() {
            assert!((back.get(k) - v).abs() < 1e-15);
        }
    }
}
