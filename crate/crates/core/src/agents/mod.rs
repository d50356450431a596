//! Agent contract, scripted agents, the model-backed agent and the episode
//! driver.

pub mod gateway;
pub mod oneshot;
pub mod prompts;

use std::collections::{HashMap, VecDeque};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::env::{create_episode, EnvError, EpisodeConfig, EpisodeResult, Observation};
use crate::puzzle::{is_goal, valid_actions, DiskCount};
use crate::search::{distance_to_goal, optimal_actions, DistanceMap};
use gateway::{ChatMessage, GatewayClient, GatewayError, ModelReply, TokenUsage};
use prompts::{build_prompts, tool_schema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionKind {
    /// Raw peg indices as issued; the environment rejects out-of-range pegs.
    Move { from_peg: i64, to_peg: i64 },
    EndGame,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDecision {
    #[serde(flatten)]
    pub kind: DecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale_text: Option<String>,
}

impl AgentDecision {
    pub fn move_disk(from_peg: i64, to_peg: i64) -> Self {
        Self { kind: DecisionKind::Move { from_peg, to_peg }, rationale_text: None }
    }

    pub fn end_game() -> Self {
        Self { kind: DecisionKind::EndGame, rationale_text: None }
    }

    pub fn with_rationale(mut self, text: Option<String>) -> Self {
        self.rationale_text = text;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("gateway {cat}: {0}", cat = .0.category())]
    Gateway(#[from] GatewayError),
    #[error("malformed tool call after reprompt: {0}")]
    MalformedToolCall(String),
    #[error("replay exhausted after {0} decisions")]
    ReplayExhausted(usize),
    #[error("{0}")]
    Other(String),
}

pub trait Agent {
    /// Label used as the model id in manifests and metric rows.
    fn label(&self) -> String;

    fn next_decision(&mut self, observation: &Observation) -> Result<AgentDecision, AgentError>;
}

/// Always plays the unique distance-minimizing move.
#[derive(Debug, Default)]
pub struct OptimalAgent {
    maps: HashMap<DiskCount, DistanceMap>,
}

impl OptimalAgent {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Agent for OptimalAgent {
    fn label(&self) -> String {
        "optimal".into()
    }

    fn next_decision(&mut self, obs: &Observation) -> Result<AgentDecision, AgentError> {
        if obs.goal_reached || is_goal(obs.state, obs.n) {
            return Ok(AgentDecision::end_game());
        }
        let map = self.maps.entry(obs.n).or_insert_with(|| distance_to_goal(obs.n));
        let best = optimal_actions(obs.state, map).map_err(|e| AgentError::Other(e.to_string()))?;
        let a = best.iter().next().expect("non-goal state has an optimal action");
        Ok(AgentDecision::move_disk(i64::from(a.from_peg()), i64::from(a.to_peg())))
    }
}

/// Samples uniformly from the valid actions; ends the game at the goal.
#[derive(Debug)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Agent for RandomAgent {
    fn label(&self) -> String {
        "random".into()
    }

    fn next_decision(&mut self, obs: &Observation) -> Result<AgentDecision, AgentError> {
        if obs.goal_reached || is_goal(obs.state, obs.n) {
            return Ok(AgentDecision::end_game());
        }
        let actions = valid_actions(obs.state);
        let a = *actions.as_slice().choose(&mut self.rng).expect("at least two actions");
        Ok(AgentDecision::move_disk(i64::from(a.from_peg()), i64::from(a.to_peg())))
    }
}

/// Plays back a fixed decision list.
#[derive(Debug, Clone)]
pub struct ReplayAgent {
    label: String,
    decisions: VecDeque<AgentDecision>,
    served: usize,
}

impl ReplayAgent {
    pub fn new(label: impl Into<String>, decisions: impl IntoIterator<Item = AgentDecision>) -> Self {
        Self { label: label.into(), decisions: decisions.into_iter().collect(), served: 0 }
    }

    /// Parses one JSON decision per line, e.g. `{"kind":"move","from_peg":0,"to_peg":2}`.
    pub fn from_jsonl(label: impl Into<String>, text: &str) -> Result<Self, AgentError> {
        let decisions = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| AgentError::Other(format!("decision line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(label, decisions))
    }
}

impl Agent for ReplayAgent {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn next_decision(&mut self, _obs: &Observation) -> Result<AgentDecision, AgentError> {
        let d = self.decisions.pop_front().ok_or(AgentError::ReplayExhausted(self.served))?;
        self.served += 1;
        Ok(d)
    }
}

/// Model-backed agent. Each turn sends the system prompt, the user prompt and
/// a rendering of the full move history, then decodes the first tool call.
pub struct GatewayAgent {
    client: GatewayClient,
    usage: TokenUsage,
    tools: Value,
}

impl GatewayAgent {
    pub fn new(client: GatewayClient) -> Self {
        Self { client, usage: TokenUsage::default(), tools: tool_schema() }
    }

    pub fn usage(&self) -> TokenUsage {
        self.usage
    }

    fn messages(obs: &Observation) -> Vec<ChatMessage> {
        let prompts = build_prompts(obs.n).with_history(obs.text.clone());
        vec![
            ChatMessage::system(prompts.system_text),
            ChatMessage::user(prompts.user_text),
            ChatMessage::user(prompts.history_rendering),
        ]
    }
}

/// Maps a model reply onto a decision, or explains why it cannot.
pub fn decode_tool_call(reply: &ModelReply) -> Result<AgentDecision, String> {
    let call = reply.tool_calls.first().ok_or("reply contains no tool call")?;
    let decision = match call.name.as_str() {
        "move_disk" => {
            let args: Value = serde_json::from_str(&call.arguments)
                .map_err(|e| format!("move_disk arguments are not JSON: {e}"))?;
            let peg = |key: &str| {
                args.get(key)
                    .and_then(|v| v.as_i64().or_else(|| v.as_str().and_then(|s| s.trim().parse().ok())))
                    .ok_or_else(|| format!("move_disk is missing integer argument {key}"))
            };
            AgentDecision::move_disk(peg("from_peg")?, peg("to_peg")?)
        }
        "end_game" => AgentDecision::end_game(),
        other => return Err(format!("unknown tool {other:?}")),
    };
    Ok(decision.with_rationale(reply.content.clone()))
}

impl Agent for GatewayAgent {
    fn label(&self) -> String {
        self.client.config().model_name.clone()
    }

    fn next_decision(&mut self, obs: &Observation) -> Result<AgentDecision, AgentError> {
        let mut messages = Self::messages(obs);
        let reply = self.client.call(&messages, Some(&self.tools))?;
        self.usage += reply.usage;
        let problem = match decode_tool_call(&reply) {
            Ok(d) => return Ok(d),
            Err(problem) => problem,
        };
        messages.push(ChatMessage::assistant(reply.content.unwrap_or_default()));
        messages.push(ChatMessage::user(format!(
            "Your previous reply was not a valid tool call ({problem}). \
             Call move_disk(from_peg, to_peg) or end_game()."
        )));
        let retry = self.client.call(&messages, Some(&self.tools))?;
        self.usage += retry.usage;
        decode_tool_call(&retry).map_err(AgentError::MalformedToolCall)
    }
}

/// Drives one episode to termination.
pub fn run_agentic_episode(agent: &mut dyn Agent, cfg: EpisodeConfig) -> Result<EpisodeResult, EnvError> {
    let mut ep = create_episode(cfg)?;
    while !ep.is_terminated() {
        let obs = ep.observation();
        match agent.next_decision(&obs) {
            Ok(AgentDecision { kind: DecisionKind::Move { from_peg, to_peg }, rationale_text }) => {
                ep.move_disk(from_peg, to_peg, rationale_text)?;
            }
            Ok(AgentDecision { kind: DecisionKind::EndGame, .. }) => {
                ep.end_game()?;
            }
            Err(e) => {
                ep.abort(e.to_string())?;
            }
        }
    }
    Ok(ep.result().cloned().expect("terminated episode has a result"))
}

#[cfg(test)]
mod tests {
    use super::gateway::{reply_body, GatewayConfig, HttpReply, ReplayTransport};
    use super::*;
    use crate::env::Outcome;
    use crate::puzzle::{initial_state, goal_state};
    use serde_json::json;

    fn obs_at(n: i64, state: crate::puzzle::PuzzleState) -> Observation {
        Observation {
            n: DiskCount::new(n).unwrap(),
            state,
            step: 0,
            goal_reached: false,
            last_feedback: None,
            text: String::new(),
        }
    }

    fn gateway_agent(bodies: Vec<String>) -> GatewayAgent {
        let transport = ReplayTransport::from_replies(bodies.into_iter().map(|body| HttpReply { status: 200, body }));
        GatewayAgent::new(GatewayClient::new(GatewayConfig::default(), Box::new(transport)))
    }

    #[test]
    fn optimal_agent_decisions() {
        let n2 = DiskCount::new(2).unwrap();
        let mut agent = OptimalAgent::new();
        assert_eq!(
            agent.next_decision(&obs_at(2, initial_state(n2))).unwrap(),
            AgentDecision::move_disk(0, 1)
        );
        assert_eq!(
            agent.next_decision(&obs_at(2, goal_state(n2))).unwrap(),
            AgentDecision::end_game()
        );
    }

    #[test]
    fn optimal_agent_solves_in_minimum_moves() {
        for n in 1..=10 {
            let r = run_agentic_episode(&mut OptimalAgent::new(), EpisodeConfig::new(n, "opt").unwrap()).unwrap();
            assert_eq!(r.outcome, Outcome::Solved);
            assert_eq!(u64::from(r.moves_taken), (1u64 << n) - 1);
            assert_eq!(r.trajectory.rejections().count(), 0);
            assert!(r.end_game_called);
        }
    }

    #[test]
    fn random_agent_first_move_is_fair() {
        let n3 = DiskCount::new(3).unwrap();
        let mut count_02 = 0;
        let trials = 4000;
        for seed in 0..trials {
            let d = RandomAgent::new(seed).next_decision(&obs_at(3, initial_state(n3))).unwrap();
            match d.kind {
                DecisionKind::Move { from_peg: 0, to_peg: 2 } => count_02 += 1,
                DecisionKind::Move { from_peg: 0, to_peg: 1 } => {}
                other => panic!("unexpected {other:?}"),
            }
        }
        let freq = f64::from(count_02) / trials as f64;
        assert!((freq - 0.5).abs() < 0.03, "{freq}");
    }

    #[test]
    fn replay_agent_exhausts() {
        let mut agent = ReplayAgent::new("r", [AgentDecision::move_disk(0, 2)]);
        let r = run_agentic_episode(&mut agent, EpisodeConfig::new(2, "r").unwrap()).unwrap();
        assert_eq!(r.outcome, Outcome::AgentError);
        assert_eq!(r.moves_taken, 1);
        assert!(r.error.unwrap().contains("replay exhausted"));
    }

    #[test]
    fn replay_agent_parses_jsonl() {
        let text = "{\"kind\":\"move\",\"from_peg\":0,\"to_peg\":2}\n\n{\"kind\":\"end_game\"}\n";
        let mut agent = ReplayAgent::from_jsonl("r", text).unwrap();
        let r = run_agentic_episode(&mut agent, EpisodeConfig::new(1, "r").unwrap()).unwrap();
        assert_eq!(r.outcome, Outcome::Solved);
        assert!(ReplayAgent::from_jsonl("r", "{bad").is_err());
    }

    #[test]
    fn gateway_agent_decodes_tool_calls() {
        let n3 = DiskCount::new(3).unwrap();
        let mut agent = gateway_agent(vec![
            reply_body(Some("smallest disk to the goal peg"), Some(("move_disk", json!({"from_peg": 0, "to_peg": 2})))),
            reply_body(None, Some(("end_game", json!({})))),
        ]);
        let d = agent.next_decision(&obs_at(3, initial_state(n3))).unwrap();
        assert_eq!(d.kind, DecisionKind::Move { from_peg: 0, to_peg: 2 });
        assert_eq!(d.rationale_text.as_deref(), Some("smallest disk to the goal peg"));
        let d = agent.next_decision(&obs_at(3, initial_state(n3))).unwrap();
        assert_eq!(d.kind, DecisionKind::EndGame);
        assert_eq!(agent.usage().prompt_tokens, 200);
    }

    #[test]
    fn gateway_agent_reprompts_once() {
        let n3 = DiskCount::new(3).unwrap();
        let mut agent = gateway_agent(vec![
            reply_body(Some("thinking"), Some(("move_disk", json!({"from": 0})))),
            reply_body(None, Some(("move_disk", json!({"from_peg": 0, "to_peg": 1})))),
        ]);
        let d = agent.next_decision(&obs_at(3, initial_state(n3))).unwrap();
        assert_eq!(d.kind, DecisionKind::Move { from_peg: 0, to_peg: 1 });

        let mut agent = gateway_agent(vec![
            reply_body(Some("no tools for me"), None),
            reply_body(None, Some(("fly_away", json!({})))),
            reply_body(None, Some(("end_game", json!({})))),
        ]);
        let err = agent.next_decision(&obs_at(3, initial_state(n3))).unwrap_err();
        assert!(matches!(err, AgentError::MalformedToolCall(_)));
    }

    #[test]
    fn gateway_failure_becomes_agent_error_outcome() {
        let transport = ReplayTransport::from_replies([HttpReply { status: 401, body: "denied".into() }]);
        let mut agent = GatewayAgent::new(GatewayClient::new(GatewayConfig::default(), Box::new(transport)));
        let r = run_agentic_episode(&mut agent, EpisodeConfig::new(3, "g").unwrap()).unwrap();
        assert_eq!(r.outcome, Outcome::AgentError);
        assert!(r.error.unwrap().starts_with("gateway auth"));
    }

    #[test]
    fn string_pegs_are_accepted() {
        let reply = ModelReply {
            content: None,
            tool_calls: vec![gateway::ToolCall {
                id: None,
                name: "move_disk".into(),
                arguments: r#"{"from_peg":"2","to_peg":1}"#.into(),
            }],
            usage: TokenUsage::default(),
        };
        assert_eq!(decode_tool_call(&reply).unwrap(), AgentDecision::move_disk(2, 1));
    }
}
