//! Frozen reference agent: mean per-token log-likelihood of an action given an
//! agent-perspective context.

pub mod cache;
pub mod prompts;
pub mod remote;
pub mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, Domain, Observation, TransitionTuple, TrajectoryPrefix};
use crate::openai::ClientError;

pub use cache::{cached_real_logprob, CountingBackend, LogprobCache};
pub use remote::{LogprobStyle, RemoteScorer};
pub use scripted::{ScriptedScorer, ScriptedScorerConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    /// Worth retrying: network trouble or an overloaded server.
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid input: {0}")]
    Input(String),
}

impl ScorerError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ScorerError::Transport(_))
    }
}

impl From<ClientError> for ScorerError {
    fn from(e: ClientError) -> Self {
        if e.is_retriable() {
            ScorerError::Transport(e.to_string())
        } else {
            ScorerError::Protocol(e.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

/// What the reference agent sees: its system prompt, observations as user
/// turns, its own past actions as assistant turns, and the candidate state as
/// the final user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentContext {
    pub domain: Domain,
    pub system_prompt: String,
    pub turns: Vec<Turn>,
}

impl AgentContext {
    pub fn final_state(&self) -> &str {
        &self.turns.last().expect("context always ends with a state").text
    }
}

/// Mean natural-log probability per action token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanLogProb {
    pub value: f64,
    pub token_count: usize,
}

impl MeanLogProb {
    pub fn new(value: f64, token_count: usize) -> Result<Self, ScorerError> {
        if token_count == 0 {
            return Err(ScorerError::Protocol("zero action tokens".into()));
        }
        if !value.is_finite() || value > 0.0 {
            return Err(ScorerError::Protocol(format!("log-probability {value} is not a finite value <= 0")));
        }
        Ok(Self { value, token_count })
    }
}

pub trait ScorerBackend: Send + Sync {
    /// Identifies the configuration; part of every cache key.
    fn id(&self) -> String;
    fn mean_logprob(&self, context: &AgentContext, action: &Action) -> Result<MeanLogProb, ScorerError>;
}

impl<T: ScorerBackend + ?Sized> ScorerBackend for std::sync::Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn mean_logprob(&self, context: &AgentContext, action: &Action) -> Result<MeanLogProb, ScorerError> {
        (**self).mean_logprob(context, action)
    }
}

impl<T: ScorerBackend + ?Sized> ScorerBackend for &T {
    fn id(&self) -> String {
        (**self).id()
    }
    fn mean_logprob(&self, context: &AgentContext, action: &Action) -> Result<MeanLogProb, ScorerError> {
        (**self).mean_logprob(context, action)
    }
}

pub fn build_agent_context(history: &TrajectoryPrefix, candidate_state: &Observation, domain: Domain) -> AgentContext {
    let mut turns = Vec::with_capacity(2 * history.t() + 1);
    turns.push(Turn {
        role: Role::User,
        text: history.initial_obs.text().to_string(),
    });
    for s in &history.steps {
        turns.push(Turn {
            role: Role::Assistant,
            text: s.action.as_str().to_string(),
        });
        turns.push(Turn {
            role: Role::User,
            text: s.obs.text().to_string(),
        });
    }
    turns.push(Turn {
        role: Role::Assistant,
        text: history.action.as_str().to_string(),
    });
    turns.push(Turn {
        role: Role::User,
        text: candidate_state.text().to_string(),
    });
    AgentContext {
        domain,
        system_prompt: prompts::agent_system_prompt(domain).to_string(),
        turns,
    }
}

/// Pulls the command out of a ReAct-style reply (`Thought: ... Action:\n<cmd>`),
/// ignoring any reasoning spans.
pub fn extract_action(response: &str) -> Result<Action, ScorerError> {
    let cleaned = crate::openai::strip_think(response);
    let tail = match cleaned.rfind("Action:") {
        Some(i) => &cleaned[i + "Action:".len()..],
        None => cleaned.as_str(),
    };
    Action::from_model_output(tail).map_err(|e| ScorerError::Input(e.to_string()))
}

/// `(l_pred, l_real)` for the expert's next action under the candidate and the real state.
pub fn score_pair(
    tuple: &TransitionTuple,
    candidate_state: &Observation,
    backend: &dyn ScorerBackend,
) -> Result<(MeanLogProb, MeanLogProb), ScorerError> {
    let pred = build_agent_context(&tuple.history, candidate_state, tuple.domain);
    let real = build_agent_context(&tuple.history, &tuple.real_next_state, tuple.domain);
    Ok((
        backend.mean_logprob(&pred, &tuple.expert_next_action)?,
        backend.mean_logprob(&real, &tuple.expert_next_action)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Step;

    fn obs(s: &str) -> Observation {
        Observation::new(s).unwrap()
    }

    #[test]
    fn smallest_context_turn_count() {
        let h = TrajectoryPrefix::new(obs("s0"), vec![], Action::new("look").unwrap());
        let ctx = build_agent_context(&h, &obs("s1"), Domain::Adventure);
        let users = ctx.turns.iter().filter(|t| t.role == Role::User).count();
        let assistants = ctx.turns.iter().filter(|t| t.role == Role::Assistant).count();
        assert_eq!((users, assistants), (2, 1));
        assert_eq!(ctx.final_state(), "s1");
        assert!(ctx.system_prompt.starts_with("You are playing a text-based interactive fiction game"));
    }

    #[test]
    fn contexts_differ_only_in_final_turn() {
        let h = TrajectoryPrefix::new(
            obs("s0"),
            vec![Step::new(Action::new("a1").unwrap(), obs("s1"))],
            Action::new("a2").unwrap(),
        );
        let a = build_agent_context(&h, &obs("x"), Domain::Shop);
        let b = build_agent_context(&h, &obs("y"), Domain::Shop);
        assert_eq!(a.turns[..a.turns.len() - 1], b.turns[..b.turns.len() - 1]);
        assert_ne!(a.final_state(), b.final_state());
        assert!(a.system_prompt.starts_with("You are web shopping."));
    }

    #[test]
    fn action_extraction() {
        let a = extract_action("Thought:\nI think the trunk.\n\nAction:\nopen antique trunk").unwrap();
        assert_eq!(a.as_str(), "open antique trunk");
        let b = extract_action("<think>x</think>click[buy now]").unwrap();
        assert_eq!(b.as_str(), "click[buy now]");
    }
}
