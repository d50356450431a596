use proptest::prelude::*;

use toh_core::agents::{run_agentic_episode, RandomAgent};
use toh_core::analysis::divergence::{jsd, Distribution};
use toh_core::analysis::policy::{estimate_joint_policy, TransitionDataset};
use toh_core::storage::{load_dataset, write_trajectory, RunManifest, RunMode};
use toh_core::{apply_move, distance_to_goal, valid_actions, DiskCount, EpisodeConfig, PuzzleState};

fn any_state() -> impl Strategy<Value = PuzzleState> {
    (1u8..=8).prop_flat_map(|n| {
        let count = 3u32.pow(u32::from(n));
        (0..count).prop_map(move |code| PuzzleState::from_code(DiskCount::new(i64::from(n)).unwrap(), code).unwrap())
    })
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..10).prop_filter("some mass", |w| w.iter().sum::<f64>() > 1e-9)
}

proptest! {
    #[test]
    fn moves_are_reversible(s in any_state()) {
        for a in &valid_actions(s) {
            let next = apply_move(s, a).unwrap();
            prop_assert_eq!(apply_move(next, a.inverse()).unwrap(), s);
        }
    }

    #[test]
    fn action_set_is_bounded(s in any_state()) {
        let k = valid_actions(s).len();
        prop_assert!((2..=3).contains(&k));
        prop_assert_eq!(k == 2, s.occupied_pegs() == 1);
    }

    #[test]
    fn rendering_round_trips(s in any_state()) {
        let text = s.to_string();
        prop_assert_eq!(text.parse::<PuzzleState>().unwrap(), s);
        let json = serde_json::to_string(&s).unwrap();
        prop_assert_eq!(serde_json::from_str::<PuzzleState>(&json).unwrap(), s);
    }

    #[test]
    fn distances_change_by_at_most_one_per_move(s in any_state()) {
        let d = distance_to_goal(s.disk_count());
        let h = d.get(s).unwrap();
        for a in &valid_actions(s) {
            let h2 = d.get(apply_move(s, a).unwrap()).unwrap();
            prop_assert!(h.abs_diff(h2) <= 1);
        }
    }

    #[test]
    fn jsd_is_symmetric_and_bounded(p in weights(), q in weights()) {
        let p = Distribution::from_weights(p.into_iter().enumerate()).unwrap();
        let q = Distribution::from_weights(q.into_iter().enumerate()).unwrap();
        let (a, b) = (jsd(&p, &q), jsd(&q, &p));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert_eq!(jsd(&p, &p), 0.0);
    }

    #[test]
    fn estimated_masses_are_counts_over_n(seed in 0u64..1000, n in 1i64..=4) {
        let r = run_agentic_episode(&mut RandomAgent::new(seed), EpisodeConfig::new(n, "p").unwrap()).unwrap();
        let d = TransitionDataset::from_trajectories([&r.trajectory]);
        let total = d.len() as f64;
        let p = estimate_joint_policy(&d, r.trajectory.n).unwrap();
        prop_assert!((p.total() - 1.0).abs() <= 1e-12);
        for (_, m) in p.iter() {
            let count = m * total;
            prop_assert!((count - count.round()).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stored_trajectories_load_back(seed in 0u64..1000, n in 1i64..=4) {
        let dir = tempfile::tempdir().unwrap();
        let r = run_agentic_episode(&mut RandomAgent::new(seed), EpisodeConfig::new(n, "p").unwrap()).unwrap();
        let m = RunManifest::new("p", RunMode::Scripted, "random", r.trajectory.n);
        let path = write_trajectory(&r, &m, dir.path()).unwrap();
        prop_assert_eq!(load_dataset(&[path]).unwrap(), TransitionDataset::from_trajectories([&r.trajectory]));
    }
}
