//! Interactive episode runtime exposing the `move_disk` / `end_game` tools.
//!
//! Illegal calls are blocked and answered with rejection feedback; they never
//! change the state and never enter the transition record. The goal is
//! absorbing: once it is reached the agent gets exactly one more call, and
//! the episode is sealed as solved whether or not that call is `end_game`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::puzzle::{
    apply_move, initial_state, is_goal, DiskCount, MoveAction, MoveError, PuzzleError,
    PuzzleState,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("invalid episode config: {0}")]
    Config(String),
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
    #[error("episode already terminated ({0})")]
    Terminated(Outcome),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub n: DiskCount,
    pub max_steps: u32,
    pub record_rejected_moves: bool,
    pub seed: Option<u64>,
    pub run_id: String,
}

impl EpisodeConfig {
    /// Config with the default step cap of 8 * (2^n - 1) tool calls.
    pub fn new(n: i64, run_id: impl Into<String>) -> Result<Self, EnvError> {
        let n = DiskCount::new(n)?;
        Ok(Self {
            n,
            max_steps: default_max_steps(n),
            record_rejected_moves: true,
            seed: None,
            run_id: run_id.into(),
        })
    }

    pub fn with_max_steps(mut self, max_steps: u32) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_record_rejected(mut self, record: bool) -> Self {
        self.record_rejected_moves = record;
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.max_steps == 0 {
            return Err(EnvError::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn default_max_steps(n: DiskCount) -> u32 {
    u32::try_from(8 * n.optimal_length()).unwrap_or(u32::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Solved,
    EndedUnsolved,
    StepLimit,
    AgentError,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Solved => "solved",
            Outcome::EndedUnsolved => "ended_unsolved",
            Outcome::StepLimit => "step_limit",
            Outcome::AgentError => "agent_error",
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    EmptySource,
    LargerOnSmaller,
    SamePeg,
    PegOutOfRange,
    GoalReached,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::EmptySource => "empty source",
            RejectReason::LargerOnSmaller => "larger on smaller",
            RejectReason::SamePeg => "same peg",
            RejectReason::PegOutOfRange => "peg out of range",
            RejectReason::GoalReached => "goal already reached",
        }
    }
}

impl From<MoveError> for RejectReason {
    fn from(e: MoveError) -> Self {
        match e {
            MoveError::EmptySource => RejectReason::EmptySource,
            MoveError::LargerOnSmaller => RejectReason::LargerOnSmaller,
            MoveError::SamePeg => RejectReason::SamePeg,
            MoveError::PegOutOfRange => RejectReason::PegOutOfRange,
        }
    }
}

/// Environment response to one `move_disk` call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFeedback {
    pub accepted: bool,
    pub message: String,
    pub new_state: PuzzleState,
    pub step_index: u32,
    pub is_goal: bool,
}

impl StepFeedback {
    /// One-line JSON rendering handed back to the agent.
    pub fn render(&self) -> String {
        serde_json::to_string(self).expect("feedback serializes")
    }
}

/// A realized state transition (s, a, s').
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub step: u32,
    pub state: PuzzleState,
    pub action: MoveAction,
    pub next_state: PuzzleState,
    pub rationale: Option<String>,
}

/// A blocked call, kept for diagnostics only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub step: u32,
    pub state: PuzzleState,
    pub from_peg: i64,
    pub to_peg: i64,
    pub reason: RejectReason,
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryEvent {
    Accepted(Transition),
    Rejected(Rejection),
}

impl TrajectoryEvent {
    pub fn step(&self) -> u32 {
        match self {
            TrajectoryEvent::Accepted(t) => t.step,
            TrajectoryEvent::Rejected(r) => r.step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode_id: String,
    pub n: DiskCount,
    pub events: Vec<TrajectoryEvent>,
}

impl Trajectory {
    pub fn transitions(&self) -> impl Iterator<Item = &Transition> + '_ {
        self.events.iter().filter_map(|e| match e {
            TrajectoryEvent::Accepted(t) => Some(t),
            TrajectoryEvent::Rejected(_) => None,
        })
    }

    pub fn rejections(&self) -> impl Iterator<Item = &Rejection> + '_ {
        self.events.iter().filter_map(|e| match e {
            TrajectoryEvent::Rejected(r) => Some(r),
            TrajectoryEvent::Accepted(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub outcome: Outcome,
    pub moves_taken: u32,
    pub final_state: PuzzleState,
    pub end_game_called: bool,
    /// Call index at which the goal was first reached.
    pub solved_at_step: Option<u32>,
    pub error: Option<String>,
    pub trajectory: Trajectory,
}

/// What the agent sees before each decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub n: DiskCount,
    pub state: PuzzleState,
    pub step: u32,
    pub goal_reached: bool,
    pub last_feedback: Option<StepFeedback>,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct Episode {
    cfg: EpisodeConfig,
    state: PuzzleState,
    calls: u32,
    moves_taken: u32,
    solved_at_step: Option<u32>,
    events: Vec<TrajectoryEvent>,
    last_feedback: Option<StepFeedback>,
    result: Option<EpisodeResult>,
}

pub fn create_episode(cfg: EpisodeConfig) -> Result<Episode, EnvError> {
    cfg.validate()?;
    Ok(Episode {
        state: initial_state(cfg.n),
        cfg,
        calls: 0,
        moves_taken: 0,
        solved_at_step: None,
        events: Vec::new(),
        last_feedback: None,
        result: None,
    })
}

impl Episode {
    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn state(&self) -> PuzzleState {
        self.state
    }

    pub fn steps(&self) -> u32 {
        self.calls
    }

    pub fn is_terminated(&self) -> bool {
        self.result.is_some()
    }

    pub fn result(&self) -> Option<&EpisodeResult> {
        self.result.as_ref()
    }

    fn ensure_live(&self) -> Result<(), EnvError> {
        match &self.result {
            Some(r) => Err(EnvError::Terminated(r.outcome)),
            None => Ok(()),
        }
    }

    /// The `move_disk(from_peg, to_peg)` tool.
    pub fn move_disk(
        &mut self,
        from_peg: i64,
        to_peg: i64,
        rationale: Option<String>,
    ) -> Result<StepFeedback, EnvError> {
        self.ensure_live()?;
        self.calls += 1;
        let step = self.calls;
        let before = self.state;

        let outcome = if self.solved_at_step.is_some() {
            Err(RejectReason::GoalReached)
        } else {
            MoveAction::new(from_peg, to_peg)
                .and_then(|a| apply_move(before, a).map(|next| (a, next)))
                .map_err(RejectReason::from)
        };

        let feedback = match outcome {
            Ok((action, next)) => {
                self.state = next;
                self.moves_taken += 1;
                let goal = is_goal(next, self.cfg.n);
                if goal {
                    self.solved_at_step = Some(step);
                }
                self.events.push(TrajectoryEvent::Accepted(Transition {
                    step,
                    state: before,
                    action,
                    next_state: next,
                    rationale,
                }));
                StepFeedback {
                    accepted: true,
                    message: "ok".into(),
                    new_state: next,
                    step_index: step,
                    is_goal: goal,
                }
            }
            Err(reason) => {
                if self.cfg.record_rejected_moves {
                    self.events.push(TrajectoryEvent::Rejected(Rejection {
                        step,
                        state: before,
                        from_peg,
                        to_peg,
                        reason,
                        rationale,
                    }));
                }
                StepFeedback {
                    accepted: false,
                    message: format!("rejected: {}", reason.as_str()),
                    new_state: before,
                    step_index: step,
                    is_goal: is_goal(before, self.cfg.n),
                }
            }
        };
        self.last_feedback = Some(feedback.clone());

        if !feedback.accepted && self.solved_at_step.is_some() {
            self.seal(Outcome::Solved, false, None);
        } else if self.calls >= self.cfg.max_steps {
            let outcome = if self.solved_at_step.is_some() {
                Outcome::Solved
            } else {
                Outcome::StepLimit
            };
            self.seal(outcome, false, None);
        }
        Ok(feedback)
    }

    /// The `end_game()` tool.
    pub fn end_game(&mut self) -> Result<EpisodeResult, EnvError> {
        self.ensure_live()?;
        let outcome = if is_goal(self.state, self.cfg.n) {
            Outcome::Solved
        } else {
            Outcome::EndedUnsolved
        };
        Ok(self.seal(outcome, true, None).clone())
    }

    /// Seals a live episode after an agent failure.
    pub fn abort(&mut self, error: impl Into<String>) -> Result<EpisodeResult, EnvError> {
        self.ensure_live()?;
        Ok(self.seal(Outcome::AgentError, false, Some(error.into())).clone())
    }

    fn seal(&mut self, outcome: Outcome, end_game_called: bool, error: Option<String>) -> &EpisodeResult {
        let result = EpisodeResult {
            outcome,
            moves_taken: self.moves_taken,
            final_state: self.state,
            end_game_called,
            solved_at_step: self.solved_at_step,
            error,
            trajectory: Trajectory {
                episode_id: self.cfg.run_id.clone(),
                n: self.cfg.n,
                events: std::mem::take(&mut self.events),
            },
        };
        self.result.insert(result)
    }

    /// Current state plus the complete move history, as shown to the agent.
    pub fn observation(&self) -> Observation {
        let events = match &self.result {
            Some(r) => &r.trajectory.events,
            None => &self.events,
        };
        let mut text = String::new();
        let _ = writeln!(text, "Current state: {}", self.state);
        let accepted: Vec<_> = events
            .iter()
            .filter_map(|e| match e {
                TrajectoryEvent::Accepted(t) => Some(t),
                _ => None,
            })
            .collect();
        let _ = writeln!(text, "Moves so far ({}):", accepted.len());
        if accepted.is_empty() {
            text.push_str("(none)\n");
        }
        for (i, t) in accepted.iter().enumerate() {
            let _ = writeln!(text, "{}. {}", i + 1, t.action);
        }
        if self.cfg.record_rejected_moves {
            let rejected: Vec<_> = events
                .iter()
                .filter_map(|e| match e {
                    TrajectoryEvent::Rejected(r) => Some(r),
                    _ => None,
                })
                .collect();
            let _ = writeln!(text, "Rejected attempts ({}):", rejected.len());
            if rejected.is_empty() {
                text.push_str("(none)\n");
            }
            for r in rejected {
                let _ = writeln!(
                    text,
                    "- call {}: move_disk({}, {}) rejected ({})",
                    r.step,
                    r.from_peg,
                    r.to_peg,
                    r.reason.as_str()
                );
            }
        }
        if let Some(fb) = &self.last_feedback {
            let _ = writeln!(text, "Last feedback: {}", fb.render());
        }
        Observation {
            n: self.cfg.n,
            state: self.state,
            step: self.calls,
            goal_reached: self.solved_at_step.is_some(),
            last_feedback: self.last_feedback.clone(),
            text,
        }
    }
}

/// Replays every accepted transition from the initial state and checks each
/// recorded successor.
pub fn validate_trajectory(t: &Trajectory) -> Result<(), String> {
    let mut s = initial_state(t.n);
    for tr in t.transitions() {
        if tr.state != s {
            return Err(format!("step {}: expected state {s}, recorded {}", tr.step, tr.state));
        }
        let next = apply_move(s, tr.action)
            .map_err(|e| format!("step {}: illegal {} ({e})", tr.step, tr.action))?;
        if next != tr.next_state {
            return Err(format!(
                "step {}: {} yields {next}, recorded {}",
                tr.step, tr.action, tr.next_state
            ));
        }
        s = next;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::goal_state;
    use crate::search::canonical_solution;

    fn episode(n: i64) -> Episode {
        create_episode(EpisodeConfig::new(n, "t").unwrap()).unwrap()
    }

    #[test]
    fn fresh_episode() {
        let ep = episode(3);
        assert_eq!(ep.state().to_string(), "[[3, 2, 1], [], []]");
        assert_eq!(ep.steps(), 0);
        assert!(EpisodeConfig::new(0, "t").is_err());
        let one = EpisodeConfig::new(1, "t").unwrap().with_max_steps(1);
        let mut ep = create_episode(one).unwrap();
        assert!(ep.move_disk(0, 2, None).unwrap().accepted);
        assert_eq!(ep.result().unwrap().outcome, Outcome::Solved);
        assert!(create_episode(EpisodeConfig::new(1, "t").unwrap().with_max_steps(0)).is_err());
    }

    #[test]
    fn accepted_and_rejected_moves() {
        let mut ep = episode(3);
        let fb = ep.move_disk(0, 2, None).unwrap();
        assert!(fb.accepted);
        assert_eq!(fb.new_state.to_string(), "[[3, 2], [], [1]]");

        let mut ep = episode(3);
        let fb = ep.move_disk(1, 2, None).unwrap();
        assert!(!fb.accepted);
        assert_eq!(fb.message, "rejected: empty source");
        assert_eq!(fb.new_state, initial_state(ep.config().n));

        let mut ep = episode(2);
        ep.move_disk(0, 1, None).unwrap();
        let fb = ep.move_disk(0, 1, None).unwrap();
        assert_eq!(fb.message, "rejected: larger on smaller");
        assert_eq!(fb.new_state.to_string(), "[[2], [1], []]");

        let fb = ep.move_disk(7, -1, None).unwrap();
        assert_eq!(fb.message, "rejected: peg out of range");
        let fb = ep.move_disk(2, 2, None).unwrap();
        assert_eq!(fb.message, "rejected: same peg");
    }

    #[test]
    fn end_game_outcomes() {
        let mut ep = episode(3);
        for a in canonical_solution(ep.config().n) {
            ep.move_disk(i64::from(a.from_peg()), i64::from(a.to_peg()), None)
                .unwrap();
        }
        let r = ep.end_game().unwrap();
        assert_eq!(r.outcome, Outcome::Solved);
        assert!(r.end_game_called);
        assert_eq!(r.moves_taken, 7);
        assert!(matches!(ep.end_game(), Err(EnvError::Terminated(Outcome::Solved))));
        assert!(ep.move_disk(0, 1, None).is_err());

        let mut ep = episode(3);
        assert_eq!(ep.end_game().unwrap().outcome, Outcome::EndedUnsolved);
    }

    #[test]
    fn step_limit_seals() {
        let cfg = EpisodeConfig::new(3, "t").unwrap().with_max_steps(2);
        let mut ep = create_episode(cfg).unwrap();
        ep.move_disk(0, 2, None).unwrap();
        assert!(!ep.is_terminated());
        ep.move_disk(1, 0, None).unwrap();
        let r = ep.result().unwrap();
        assert_eq!(r.outcome, Outcome::StepLimit);
        assert_eq!(r.moves_taken, 1);
        assert!(matches!(ep.end_game(), Err(EnvError::Terminated(Outcome::StepLimit))));
    }

    #[test]
    fn goal_is_absorbing() {
        let mut ep = episode(1);
        let fb = ep.move_disk(0, 2, None).unwrap();
        assert!(fb.is_goal);
        assert!(!ep.is_terminated());
        let fb = ep.move_disk(2, 0, None).unwrap();
        assert!(!fb.accepted);
        assert_eq!(fb.message, "rejected: goal already reached");
        let r = ep.result().unwrap();
        assert_eq!(r.outcome, Outcome::Solved);
        assert!(!r.end_game_called);
        assert_eq!(r.final_state, goal_state(r.trajectory.n));
        assert_eq!(r.solved_at_step, Some(1));
    }

    #[test]
    fn observation_rendering() {
        let mut ep = episode(3);
        let text = ep.observation().text;
        assert_eq!(
            text,
            "Current state: [[3, 2, 1], [], []]\nMoves so far (0):\n(none)\nRejected attempts (0):\n(none)\n"
        );
        ep.move_disk(0, 2, None).unwrap();
        let text = ep.observation().text;
        assert_eq!(text.matches("move_disk(0, 2)").count(), 1);
        assert_eq!(
            text,
            "Current state: [[3, 2], [], [1]]\nMoves so far (1):\n1. move_disk(0, 2)\n\
             Rejected attempts (0):\n(none)\n\
             Last feedback: {\"accepted\":true,\"message\":\"ok\",\"new_state\":\"[[3, 2], [], [1]]\",\"step_index\":1,\"is_goal\":false}\n"
        );

        let cfg = EpisodeConfig::new(3, "t").unwrap().with_record_rejected(false);
        let mut ep = create_episode(cfg).unwrap();
        ep.move_disk(0, 2, None).unwrap();
        let before = ep.observation().text;
        ep.move_disk(1, 0, None).unwrap();
        let after = ep.observation().text;
        let history = |t: &str| t.lines().take_while(|l| !l.starts_with("Last")).collect::<Vec<_>>().join("\n");
        assert_eq!(history(&before), history(&after));
        assert!(!after.contains("Rejected"));
    }

    #[test]
    fn rejected_moves_stay_out_of_transitions() {
        let mut ep = episode(2);
        ep.move_disk(1, 0, Some("oops".into())).unwrap();
        ep.move_disk(0, 1, None).unwrap();
        let r = ep.end_game().unwrap();
        assert_eq!(r.trajectory.transitions().count(), 1);
        assert_eq!(r.trajectory.rejections().count(), 1);
        assert_eq!(r.moves_taken, 1);
        validate_trajectory(&r.trajectory).unwrap();
    }
}
