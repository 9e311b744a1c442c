//! Agents that act in an environment or a world model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envsim::policy::{self, PolicyView};
use crate::envsim::shop::BUY_NOW;
use crate::model::{Action, Domain, HistoryView};
use crate::openai::{ChatMessage, ClientError, OpenAiClient};
use crate::perturb::page::PageType;
use crate::scorer::prompts::{agent_system_prompt, ACTION_PREFIX};
use crate::scorer::extract_action;
use crate::util::seeded_unit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("agent backend: {0}")]
    Backend(#[from] ClientError),
    #[error("could not read an action from the reply: {0}")]
    Parse(String),
    #[error("agent has no action to offer in this state")]
    Stuck,
}

/// `pi(a_t | h_t)`: picks the next action from the interaction so far.
pub trait AgentHandle: Send + Sync {
    fn name(&self) -> String;
    fn act(&self, history: &HistoryView<'_>) -> Result<Action, AgentError>;
}

impl<T: AgentHandle + ?Sized> AgentHandle for std::sync::Arc<T> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn act(&self, history: &HistoryView<'_>) -> Result<Action, AgentError> {
        (**self).act(history)
    }
}

/// Follows the goal-advancing action with probability `skill`, otherwise
/// makes a seeded mistake. Mistakes are a pure function of
/// `(seed, task, step)`, so replaying an interaction reproduces them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedAgent {
    pub skill: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ScriptedAgent {
    fn default() -> Self {
        Self { skill: 1.0, seed: 0 }
    }
}

impl ScriptedAgent {
    pub fn new(skill: f64, seed: u64) -> Self {
        Self {
            skill: skill.clamp(0.0, 1.0),
            seed,
        }
    }

    fn draw(&self, history: &HistoryView<'_>, salt: &str) -> f64 {
        let step = history.steps.len().to_string();
        seeded_unit(self.seed, &[history.task_id, &step, salt])
    }

    fn mistake(&self, history: &HistoryView<'_>, view: &PolicyView<'_>, goal: &str) -> Option<String> {
        let allowed = policy::admissible(view);
        // shoppers tend to buy before choosing every option
        if history.domain == Domain::Shop
            && history.current_obs().page().is_some_and(|p| p.page_type == PageType::ItemDetail)
            && goal != BUY_NOW
            && allowed.iter().any(|a| a == BUY_NOW)
        {
            return Some(BUY_NOW.to_string());
        }
        let others: Vec<&String> = allowed.iter().filter(|a| *a != goal).collect();
        if others.is_empty() {
            return None;
        }
        let i = (self.draw(history, "pick") * others.len() as f64) as usize;
        Some(others[i.min(others.len() - 1)].clone())
    }

    /// The action without mistakes: goal-advancing when known, else the fallback rule.
    pub fn best_action(history: &HistoryView<'_>) -> String {
        let view = PolicyView::from_history(history);
        policy::goal_action(&view).unwrap_or_else(|| policy::fallback_action(&view))
    }
}

impl AgentHandle for ScriptedAgent {
    fn name(&self) -> String {
        format!("scripted(skill={},seed={})", self.skill, self.seed)
    }

    fn act(&self, history: &HistoryView<'_>) -> Result<Action, AgentError> {
        let view = PolicyView::from_history(history);
        let text = match policy::goal_action(&view) {
            Some(goal) if self.draw(history, "slip") >= self.skill => {
                self.mistake(history, &view, &goal).unwrap_or(goal)
            }
            Some(goal) => goal,
            None => policy::fallback_action(&view),
        };
        Action::new(text).map_err(|e| AgentError::Parse(e.to_string()))
    }
}

/// Chat-completions agent at temperature 0, prompted with the domain's
/// ReAct-style system prompt.
#[derive(Debug, Clone)]
pub struct RemoteChatAgent {
    client: OpenAiClient,
}

impl RemoteChatAgent {
    pub fn new(client: OpenAiClient) -> Self {
        Self { client }
    }

    pub fn messages(history: &HistoryView<'_>) -> Vec<ChatMessage> {
        let mut msgs = vec![
            ChatMessage::new("system", agent_system_prompt(history.domain)),
            ChatMessage::new("user", history.initial_obs.text()),
        ];
        for s in history.steps {
            msgs.push(ChatMessage::new("assistant", format!("{ACTION_PREFIX}{}", s.action)));
            msgs.push(ChatMessage::new("user", s.obs.text()));
        }
        msgs
    }
}

impl AgentHandle for RemoteChatAgent {
    fn name(&self) -> String {
        format!("remote:{}", self.client.config().model)
    }

    fn act(&self, history: &HistoryView<'_>) -> Result<Action, AgentError> {
        let reply = self.client.chat(&Self::messages(history))?;
        extract_action(&reply).map_err(|e| AgentError::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::generate::shop_spec;
    use crate::envsim::{Environment, ShopEnv};
    use crate::model::Step;

    #[test]
    fn perfect_agent_follows_optimal_script() {
        let spec = shop_spec(5, 0);
        let script = spec.optimal_script();
        let mut env = ShopEnv::new(spec.clone()).unwrap();
        let s0 = env.reset(&spec.task_id).unwrap();
        let agent = ScriptedAgent::default();
        let mut steps: Vec<Step> = Vec::new();
        for expected in &script {
            let view = HistoryView {
                task_id: &spec.task_id,
                domain: Domain::Shop,
                initial_obs: &s0,
                steps: &steps,
            };
            let a = agent.act(&view).unwrap();
            assert_eq!(&a, expected);
            let out = env.step(&a).unwrap();
            steps.push(Step::new(a, out.obs));
        }
    }

    #[test]
    fn mistakes_are_reproducible() {
        let spec = shop_spec(5, 1);
        let mut env = ShopEnv::new(spec.clone()).unwrap();
        let s0 = env.reset(&spec.task_id).unwrap();
        let view = HistoryView {
            task_id: &spec.task_id,
            domain: Domain::Shop,
            initial_obs: &s0,
            steps: &[],
        };
        let a = ScriptedAgent::new(0.0, 9);
        assert_eq!(a.act(&view).unwrap(), a.act(&view).unwrap());
    }
}
