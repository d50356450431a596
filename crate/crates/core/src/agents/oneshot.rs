//! Single-pass baseline: ask for a full move list, parse it, simulate it.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gateway::{ChatMessage, GatewayClient, GatewayError, TokenUsage};
use super::prompts::build_oneshot_prompts;
use crate::puzzle::{apply_move, initial_state, is_goal, DiskCount, MoveAction};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no move_disk(from, to) calls found")]
    NoMoves,
    #[error("move {index}: move_disk({from}, {to}) is not a peg pair")]
    BadPegs { index: usize, from: i64, to: i64 },
}

fn move_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r"move_disk\s*\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)").expect("pattern compiles")
    })
}

/// Extracts `move_disk(f, t)` occurrences in order, ignoring surrounding text.
pub fn parse_move_list(text: &str) -> Result<Vec<MoveAction>, ParseError> {
    let mut moves = Vec::new();
    for (index, caps) in move_pattern().captures_iter(text).enumerate() {
        let from: i64 = caps[1].parse().unwrap_or(i64::MAX);
        let to: i64 = caps[2].parse().unwrap_or(i64::MAX);
        let action =
            MoveAction::new(from, to).map_err(|_| ParseError::BadPegs { index: index + 1, from, to })?;
        moves.push(action);
    }
    if moves.is_empty() {
        return Err(ParseError::NoMoves);
    }
    Ok(moves)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneShotResult {
    pub n: DiskCount,
    pub raw_text: String,
    pub parsed_moves: Option<Vec<MoveAction>>,
    pub diagnostic: Option<String>,
    pub valid: bool,
    pub reached_goal: bool,
    pub optimal: bool,
    pub move_count: usize,
    pub token_usage: TokenUsage,
}

/// Parses and simulates a baseline answer.
pub fn evaluate_oneshot(raw_text: &str, n: DiskCount, token_usage: TokenUsage) -> OneShotResult {
    let mut result = OneShotResult {
        n,
        raw_text: raw_text.to_owned(),
        parsed_moves: None,
        diagnostic: None,
        valid: false,
        reached_goal: false,
        optimal: false,
        move_count: 0,
        token_usage,
    };
    let moves = match parse_move_list(raw_text) {
        Ok(m) => m,
        Err(e) => {
            result.diagnostic = Some(format!("parse failure: {e}"));
            return result;
        }
    };
    result.move_count = moves.len();
    let mut state = initial_state(n);
    let mut valid = true;
    for (i, &a) in moves.iter().enumerate() {
        match apply_move(state, a) {
            Ok(next) => state = next,
            Err(e) => {
                result.diagnostic = Some(format!("move {}: {a} is illegal ({e}) at {state}", i + 1));
                valid = false;
                break;
            }
        }
    }
    result.valid = valid;
    result.reached_goal = valid && is_goal(state, n);
    result.optimal = result.reached_goal && moves.len() as u64 == n.optimal_length();
    result.parsed_moves = Some(moves);
    result
}

/// Requests a complete solution in one generation and scores it.
pub fn run_oneshot(client: &mut GatewayClient, n: DiskCount) -> Result<OneShotResult, GatewayError> {
    let prompts = build_oneshot_prompts(n);
    let messages = [
        ChatMessage::system(prompts.system_text),
        ChatMessage::user(prompts.user_text),
    ];
    let reply = client.call(&messages, None)?;
    let text = reply.content.unwrap_or_default();
    Ok(evaluate_oneshot(&text, n, reply.usage))
}
