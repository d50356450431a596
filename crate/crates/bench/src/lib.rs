//! Inputs shared by the benchmarks.

use toh_core::agents::{run_agentic_episode, RandomAgent};
use toh_core::analysis::policy::TransitionDataset;
use toh_core::EpisodeConfig;

/// Transitions from `episodes` seeded random-agent runs at `n` disks.
pub fn random_dataset(n: i64, episodes: u64) -> TransitionDataset {
    let trajectories: Vec<_> = (0..episodes)
        .map(|seed| {
            let cfg = EpisodeConfig::new(n, format!("bench-{seed}")).expect("valid n");
            let mut agent = RandomAgent::new(seed);
            run_agentic_episode(&mut agent, cfg).expect("episode runs").trajectory
        })
        .collect();
    TransitionDataset::from_trajectories(&trajectories)
}
