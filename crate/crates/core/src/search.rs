//! Exhaustive state-space search: enumeration, exact distance to goal,
//! optimal action sets and the recursive solution.

use std::collections::VecDeque;

use thiserror::Error;

use crate::puzzle::{
    apply_move, goal_state, initial_state, valid_actions, ActionSet, DiskCount, MoveAction,
    PuzzleState,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("no action to take from the goal state")]
    GoalState,
    #[error("distance map has no entry for {0}")]
    MissingDistance(PuzzleState),
    #[error("distance map built for {map} disks, state has {state}")]
    DiskCountMismatch { map: DiskCount, state: DiskCount },
}

/// All states reachable from the initial state, sorted by code.
pub fn enumerate_states(n: DiskCount) -> Vec<PuzzleState> {
    let mut seen = vec![false; n.state_count()];
    let start = initial_state(n);
    seen[start.code() as usize] = true;
    let mut queue = VecDeque::from([start]);
    let mut states = Vec::with_capacity(n.state_count());
    while let Some(s) = queue.pop_front() {
        states.push(s);
        for a in &valid_actions(s) {
            let next = apply_move(s, a).expect("valid action");
            let slot = &mut seen[next.code() as usize];
            if !*slot {
                *slot = true;
                queue.push_back(next);
            }
        }
    }
    states.sort();
    states
}

/// Exact shortest-path distance H*(s) from every state to the goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMap {
    n: DiskCount,
    dist: Vec<u32>,
}

const UNREACHED: u32 = u32::MAX;

impl DistanceMap {
    pub fn disk_count(&self) -> DiskCount {
        self.n
    }

    pub fn get(&self, s: PuzzleState) -> Option<u32> {
        if s.disk_count() != self.n {
            return None;
        }
        self.dist
            .get(s.code() as usize)
            .copied()
            .filter(|&d| d != UNREACHED)
    }

    /// Largest distance over all states.
    pub fn max_distance(&self) -> u32 {
        self.dist
            .iter()
            .copied()
            .filter(|&d| d != UNREACHED)
            .max()
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (PuzzleState, u32)> + '_ {
        self.dist
            .iter()
            .enumerate()
            .filter(|(_, &d)| d != UNREACHED)
            .map(|(code, &d)| (PuzzleState::from_code(self.n, code as u32).expect("code in range"), d))
    }

    /// Overwrites one entry. The verification suites use it to corrupt a map.
    pub fn set(&mut self, s: PuzzleState, d: u32) {
        if s.disk_count() == self.n {
            self.dist[s.code() as usize] = d;
        }
    }
}

/// Shortest-path distance to the goal for every state, by breadth-first
/// search outward from the goal.
pub fn distance_to_goal(n: DiskCount) -> DistanceMap {
    let mut dist = vec![UNREACHED; n.state_count()];
    let goal = goal_state(n);
    dist[goal.code() as usize] = 0;
    let mut queue = VecDeque::from([goal]);
    while let Some(s) = queue.pop_front() {
        let d = dist[s.code() as usize];
        for a in &valid_actions(s) {
            let next = apply_move(s, a).expect("valid action");
            let slot = &mut dist[next.code() as usize];
            if *slot == UNREACHED {
                *slot = d + 1;
                queue.push_back(next);
            }
        }
    }
    DistanceMap { n, dist }
}

/// Valid actions from `s` whose successor is closest to the goal.
pub fn optimal_actions(s: PuzzleState, d: &DistanceMap) -> Result<ActionSet, SearchError> {
    if s.disk_count() != d.disk_count() {
        return Err(SearchError::DiskCountMismatch {
            map: d.disk_count(),
            state: s.disk_count(),
        });
    }
    if d.get(s) == Some(0) {
        return Err(SearchError::GoalState);
    }
    let mut scored = Vec::with_capacity(3);
    for a in &valid_actions(s) {
        let next = apply_move(s, a).expect("valid action");
        let h = d.get(next).ok_or(SearchError::MissingDistance(next))?;
        scored.push((a, h));
    }
    let best = scored.iter().map(|&(_, h)| h).min().expect("at least two actions");
    Ok(scored
        .into_iter()
        .filter(|&(_, h)| h == best)
        .map(|(a, _)| a)
        .collect())
}

/// The classic recursive solution moving the tower from peg 0 to peg 2.
pub fn canonical_solution(n: DiskCount) -> Vec<MoveAction> {
    fn solve(k: u8, from: i64, to: i64, via: i64, out: &mut Vec<MoveAction>) {
        if k == 0 {
            return;
        }
        solve(k - 1, from, via, to, out);
        out.push(MoveAction::new(from, to).expect("distinct pegs"));
        solve(k - 1, via, to, from, out);
    }
    let mut moves = Vec::with_capacity(n.optimal_length() as usize);
    solve(n.get(), 0, 2, 1, &mut moves);
    moves
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::is_goal;
    use std::collections::{BTreeSet, HashMap};

    fn n(k: i64) -> DiskCount {
        DiskCount::new(k).unwrap()
    }

    fn st(text: &str) -> PuzzleState {
        text.parse().unwrap()
    }

    fn mv(f: i64, t: i64) -> MoveAction {
        MoveAction::new(f, t).unwrap()
    }

    /// Every placement of disks on pegs, built directly from peg lists.
    fn brute_force_states(k: u8) -> BTreeSet<PuzzleState> {
        let mut out = BTreeSet::new();
        for assignment in 0..3usize.pow(u32::from(k)) {
            let mut pegs: [Vec<u8>; 3] = Default::default();
            let mut rest = assignment;
            let mut placement = Vec::new();
            for _ in 0..k {
                placement.push(rest % 3);
                rest /= 3;
            }
            for disk in (1..=k).rev() {
                pegs[placement[disk as usize - 1]].push(disk);
            }
            out.insert(PuzzleState::from_pegs(&pegs).unwrap());
        }
        out
    }

    /// Textbook BFS keyed by rendered state strings, over all six peg pairs.
    fn string_bfs_distances(k: u8) -> HashMap<String, u32> {
        let goal = goal_state(n(i64::from(k)));
        let mut dist = HashMap::from([(goal.to_string(), 0)]);
        let mut queue = VecDeque::from([goal]);
        while let Some(s) = queue.pop_front() {
            let d = dist[&s.to_string()];
            for a in MoveAction::ALL {
                if let Ok(next) = apply_move(s, a) {
                    dist.entry(next.to_string()).or_insert_with(|| {
                        queue.push_back(next);
                        d + 1
                    });
                }
            }
        }
        dist
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for k in 1..=8u8 {
            let states = enumerate_states(n(i64::from(k)));
            let oracle = brute_force_states(k);
            assert_eq!(states.len(), oracle.len());
            assert_eq!(states.iter().copied().collect::<BTreeSet<_>>(), oracle);
        }
        assert_eq!(enumerate_states(n(1)).len(), 3);
        assert_eq!(enumerate_states(n(3)).len(), 27);
        assert_eq!(enumerate_states(n(8)).len(), 6561);
    }

    #[test]
    fn distances_match_string_bfs() {
        for k in 1..=6u8 {
            let d = distance_to_goal(n(i64::from(k)));
            let oracle = string_bfs_distances(k);
            assert_eq!(oracle.len(), d.iter().count());
            for (s, h) in d.iter() {
                assert_eq!(oracle[&s.to_string()], h, "{s}");
            }
        }
    }

    #[test]
    fn distance_examples() {
        for k in 1..=8 {
            let d = distance_to_goal(n(k));
            assert_eq!(d.get(goal_state(n(k))), Some(0));
            assert_eq!(d.get(initial_state(n(k))), Some((1 << k) - 1));
        }
        let d2 = distance_to_goal(n(2));
        assert_eq!(d2.get(st("[[2], [1], []]")), Some(2));
        assert_eq!(d2.get(st("[[2], [], [1]]")), Some(3));
        assert_eq!(distance_to_goal(n(3)).get(initial_state(n(3))), Some(7));
    }

    #[test]
    fn max_distance_argmax() {
        // Counts from an independent brute-force BFS: 2^n states sit at
        // distance 2^n - 1, both full stacks off the goal peg among them.
        for k in 2..=8 {
            let d = distance_to_goal(n(k));
            let max = d.max_distance();
            assert_eq!(max, (1 << k) - 1);
            let argmax: Vec<_> = d.iter().filter(|&(_, h)| h == max).map(|(s, _)| s).collect();
            assert_eq!(argmax.len(), 1 << k);
            let full: Vec<_> = argmax.iter().filter(|s| s.occupied_pegs() == 1).collect();
            assert_eq!(full.len(), 2);
            assert!(full.iter().all(|s| s.pegs()[2].is_empty()));
            assert!(argmax.iter().all(|s| s.peg_of(k as u8) != 2));
        }
    }

    #[test]
    fn optimal_action_examples() {
        let d2 = distance_to_goal(n(2));
        assert_eq!(
            optimal_actions(initial_state(n(2)), &d2).unwrap().as_slice(),
            &[mv(0, 1)]
        );
        assert_eq!(
            optimal_actions(st("[[1], [], [2]]"), &d2).unwrap().as_slice(),
            &[mv(0, 2)]
        );
        let d3 = distance_to_goal(n(3));
        assert_eq!(
            optimal_actions(st("[[3, 2], [], [1]]"), &d3).unwrap().as_slice(),
            &[mv(0, 1)]
        );
        assert_eq!(
            optimal_actions(goal_state(n(3)), &d3),
            Err(SearchError::GoalState)
        );
        assert!(matches!(
            optimal_actions(initial_state(n(2)), &d3),
            Err(SearchError::DiskCountMismatch { .. })
        ));
    }

    #[test]
    fn optimal_action_is_unique_everywhere() {
        for k in 1..=8 {
            let d = distance_to_goal(n(k));
            for s in enumerate_states(n(k)) {
                if is_goal(s, n(k)) {
                    continue;
                }
                assert_eq!(optimal_actions(s, &d).unwrap().len(), 1, "{s}");
            }
        }
    }

    #[test]
    fn canonical_solution_examples() {
        assert_eq!(
            canonical_solution(n(3)),
            vec![mv(0, 2), mv(0, 1), mv(2, 1), mv(0, 2), mv(1, 0), mv(1, 2), mv(0, 2)]
        );
        assert_eq!(canonical_solution(n(1)), vec![mv(0, 2)]);
        assert_eq!(canonical_solution(n(8)).len(), 255);
    }

    #[test]
    fn canonical_replay_visits_distinct_states() {
        for k in 1..=10 {
            let mut s = initial_state(n(k));
            let mut seen = BTreeSet::from([s]);
            for a in canonical_solution(n(k)) {
                s = apply_move(s, a).unwrap();
                assert!(seen.insert(s));
            }
            assert!(is_goal(s, n(k)));
            assert_eq!(seen.len(), 1 << k);
        }
    }

    #[test]
    fn bellman_consistency() {
        for k in 1..=8 {
            let d = distance_to_goal(n(k));
            for (s, h) in d.iter() {
                if h == 0 {
                    continue;
                }
                let best = valid_actions(s)
                    .iter()
                    .map(|a| d.get(apply_move(s, a).unwrap()).unwrap())
                    .min()
                    .unwrap();
                assert_eq!(best, h - 1);
            }
        }
    }
}
