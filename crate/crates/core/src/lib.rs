//! Tower of Hanoi simulator, agent harness, tabular Q-learning and policy
//! analysis over recorded trajectories.

pub mod agents;
pub mod analysis;
pub mod env;
pub mod puzzle;
pub mod qlearn;
pub mod search;
pub mod storage;
pub mod verify;

pub use agents::{Agent, AgentDecision, AgentError, DecisionKind};
pub use analysis::{AnalysisError, MetricName, MetricRow, RunSummary};
pub use env::{create_episode, EnvError, Episode, EpisodeConfig, EpisodeResult, Observation, Outcome};
pub use puzzle::{
    apply_move, goal_state, initial_state, is_goal, valid_actions, DiskCount, MoveAction, MoveError,
    PuzzleError, PuzzleState,
};
pub use search::{canonical_solution, distance_to_goal, enumerate_states, DistanceMap};
