//! Agent system prompts and prompt rendering for the reference agent.

use crate::model::Domain;

use super::{AgentContext, Role};

pub const SHOP_AGENT_PROMPT: &str = "You are web shopping.
I will give you instructions about what to do.
You have to follow the instructions.
Every round I will give you an observation and a list of available actions, you have to respond an action based on the state and instruction.
You can use search action if search is available.
You can click one of the buttons in clickables.
An action should be of the following structure:
search[keywords]
click[value]
If the action is not valid, perform nothing.
Keywords in search are up to you, but the value in click must be a value in the list of available actions.
Remember that your keywords in search should be carefully designed.
Your response should use the following format:

Thought:
I think ...

Action:
click[something]";

pub const ADVENTURE_AGENT_PROMPT: &str = "You are playing a text-based interactive fiction game (TextWorld).
You will receive observations describing the current state.
When available, a list of admissible actions may be provided.
Always output strictly in the following format:

\"Thought:
<your reasoning>

Action:
<the single action to take>\"

Guidelines:
- Prefer actions from admissible commands when provided.
- If no list is provided, issue a valid single command (e.g., \"look\", \"inventory\", \"open door\", \"go north\", \"take key\").
- Avoid invalid or multiple actions in one step.";

/// Appended as the start of the scored assistant turn so only action tokens count.
pub const ACTION_PREFIX: &str = "Action:\n";

pub fn agent_system_prompt(domain: Domain) -> &'static str {
    match domain {
        Domain::Shop => SHOP_AGENT_PROMPT,
        Domain::Adventure => ADVENTURE_AGENT_PROMPT,
    }
}

/// ChatML rendering of a context, ending with an open assistant turn that
/// starts with [`ACTION_PREFIX`]. Returns the prompt; the action text is
/// appended directly after it by the caller.
///
/// With `empty_think_block` the assistant turn opens with an empty reasoning
/// block, which is how chat templates render a turn with thinking disabled.
pub fn render_chatml(ctx: &AgentContext, empty_think_block: bool) -> String {
    let mut out = format!("<|im_start|>system\n{}<|im_end|>\n", ctx.system_prompt);
    for t in &ctx.turns {
        match t.role {
            Role::User => out.push_str(&format!("<|im_start|>user\n{}<|im_end|>\n", t.text)),
            Role::Assistant => out.push_str(&format!("<|im_start|>assistant\n{ACTION_PREFIX}{}<|im_end|>\n", t.text)),
        }
    }
    out.push_str("<|im_start|>assistant\n");
    if empty_think_block {
        out.push_str("<think>\n\n</think>\n\n");
    }
    out.push_str(ACTION_PREFIX);
    out
}
