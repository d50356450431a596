//! Prompt templates for the agentic protocol and the one-shot baseline.

use serde_json::{json, Value};

use crate::puzzle::{goal_state, initial_state, DiskCount};

const SYSTEM_TEMPLATE: &str = include_str!("templates/system.txt");
const USER_TEMPLATE: &str = include_str!("templates/user.txt");

const AGENTIC_STRATEGY: &str = "        Solution Strategy:
            1. Make moves using move_disk(from_peg, to_peg) until you reach the goal state
            2. When you think you've reached the goal state, end the game using end_game().
";
const ONESHOT_STRATEGY: &str = "        Solution Strategy:
            1. Write out the complete solution in a single response, one move per line.
            2. Number every move and write it as move_disk(from_peg, to_peg).
";
const AGENTIC_CLOSING: &str =
    "Solve the puzzle using the available tools. Move step by step until you reach the goal.";
const ONESHOT_CLOSING: &str =
    "Write the complete list of moves that solves the puzzle, from the initial state to the goal.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub history_rendering: String,
}

impl PromptBundle {
    pub fn with_history(mut self, history: impl Into<String>) -> Self {
        self.history_rendering = history.into();
        self
    }
}

fn fill_user(template: &str, n: DiskCount) -> String {
    template
        .replace("{num_disks}", &n.to_string())
        .replace("{initial_state}", &initial_state(n).to_string())
        .replace("{goal_state}", &goal_state(n).to_string())
}

/// Agentic prompts: the system text verbatim and the user text with the
/// disk count and boundary states substituted.
pub fn build_prompts(n: DiskCount) -> PromptBundle {
    PromptBundle {
        system_text: SYSTEM_TEMPLATE.to_owned(),
        user_text: fill_user(USER_TEMPLATE, n),
        history_rendering: String::new(),
    }
}

/// Prompts for the single-pass baseline. Derived from the agentic templates
/// by swapping the tool-use instructions for an answer-format instruction.
pub fn build_oneshot_prompts(n: DiskCount) -> PromptBundle {
    let system = SYSTEM_TEMPLATE
        .replace(" using the provided tools", "")
        .replace(AGENTIC_STRATEGY, ONESHOT_STRATEGY);
    let user = fill_user(USER_TEMPLATE, n).replace(AGENTIC_CLOSING, ONESHOT_CLOSING);
    PromptBundle {
        system_text: system,
        user_text: user,
        history_rendering: String::new(),
    }
}

/// Chat-completions tool declarations for `move_disk` and `end_game`.
pub fn tool_schema() -> Value {
    json!([
        {
            "type": "function",
            "function": {
                "name": "move_disk",
                "description": "Move the top disk from one peg to another. Invalid moves are blocked.",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "from_peg": {"type": "integer", "description": "Source peg (0, 1 or 2)"},
                        "to_peg": {"type": "integer", "description": "Destination peg (0, 1 or 2)"}
                    },
                    "required": ["from_peg", "to_peg"]
                }
            }
        },
        {
            "type": "function",
            "function": {
                "name": "end_game",
                "description": "Terminate the run.",
                "parameters": {"type": "object", "properties": {}}
            }
        }
    ])
}
