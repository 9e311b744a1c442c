//! One-step lookahead: propose K actions, simulate each with the world model,
//! then pick one given the predicted outcomes. Costs K + 2 model calls per step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::{AgentError, AgentHandle, ScriptedAgent};
use super::episodes::RunConfig;
use crate::envsim::adventure::{is_rejection, THE_END};
use crate::envsim::policy::{self, PolicyView};
use crate::envsim::{TaskSpec, WorldModel, INVALID_ACTION};
use crate::model::{Action, EpisodeRecord, HistoryView, Observation, Pipeline, Step, Termination, TrajectoryPrefix};
use crate::openai::{strip_think, ChatMessage, OpenAiClient};
use crate::scorer::prompts::agent_system_prompt;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_PREVIEW_CHARS: usize = 800;

pub const SELECT_SYSTEM_PROMPT: &str = "You are a decision-making assistant. You will be given a current state and multiple action options with their predicted outcomes. Select the BEST option.";

#[derive(Debug, Error)]
pub enum LookaheadError {
    #[error("no admissible actions")]
    NoAdmissible,
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Planner(#[from] AgentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookaheadConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_preview")]
    pub preview_chars: usize,
}

fn default_k() -> usize {
    DEFAULT_K
}
fn default_preview() -> usize {
    DEFAULT_PREVIEW_CHARS
}

impl Default for LookaheadConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            preview_chars: DEFAULT_PREVIEW_CHARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadOption {
    pub action: Action,
    pub preview: String,
}

/// The model behind stages 1 and 3. Each method is one model call.
pub trait Planner: Send + Sync {
    fn name(&self) -> String;
    /// Up to `k` actions, best first. Extra or inadmissible entries are tolerated.
    fn propose(&self, history: &HistoryView<'_>, admissible: &[Action], k: usize) -> Result<Vec<String>, AgentError>;
    /// The raw selection reply: an option number or an action text.
    fn select(&self, history: &HistoryView<'_>, options: &[LookaheadOption]) -> Result<String, AgentError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadStep {
    pub action: Action,
    pub options: Vec<LookaheadOption>,
    /// Planner plus world-model calls made for this step.
    pub calls: usize,
    /// The selection was unusable and the top proposal was taken instead.
    pub fallback: bool,
}

fn truncate_chars(s: &str, n: usize) -> String {
    match s.char_indices().nth(n) {
        Some((i, _)) => s[..i].to_string(),
        None => s.to_string(),
    }
}

/// Stage 1 user prompt.
pub fn proposal_prompt(observation: &str, admissible: &[Action], k: usize) -> String {
    let list: Vec<String> = admissible
        .iter()
        .enumerate()
        .map(|(i, a)| format!("{}. {a}", i + 1))
        .collect();
    format!(
        "You are currently in this state:\n{observation}\n\nAll admissible actions:\n{}\n\n\
         Your task is described in the instruction above.\n\
         From the admissible actions, select the {k} actions that are MOST LIKELY to help you complete the task successfully.\n\n\
         Output EXACTLY {k} actions, one per line, in the format:\n1. action_here\n2. action_here\n...\n\
         Only output the numbered list, nothing else.",
        list.join("\n")
    )
}

/// Stage 3 user prompt.
pub fn selection_prompt(observation: &str, options: &[LookaheadOption]) -> String {
    let mut s = format!("CURRENT STATE:\n{observation}\n\nAVAILABLE OPTIONS (with predicted outcomes from a world model):\n\n");
    for (i, o) in options.iter().enumerate() {
        s.push_str(&format!("Option {}: {}\n  Predicted next state: {}\n\n", i + 1, o.action, o.preview));
    }
    s.push_str("Select the option that best advances the task goal.\nReply with ONLY the option number (e.g., 1 or 3).");
    s
}

/// Entries of a numbered list (`1. x`, `2) y`), in order.
pub fn parse_numbered_list(reply: &str) -> Vec<String> {
    strip_think(reply)
        .lines()
        .filter_map(|l| {
            let l = l.trim();
            let digits = l.find(|c: char| !c.is_ascii_digit())?;
            if digits == 0 {
                return None;
            }
            let rest = l[digits..].strip_prefix('.').or_else(|| l[digits..].strip_prefix(')'))?;
            let item = rest.trim();
            (!item.is_empty()).then(|| item.to_string())
        })
        .collect()
}

/// Option index (0-based) named by a selection reply, by number or by exact action text.
pub fn parse_selection(reply: &str, options: &[LookaheadOption]) -> Option<usize> {
    let cleaned = strip_think(reply);
    let r = cleaned.trim();
    let numbered = r
        .strip_prefix("Option")
        .or_else(|| r.strip_prefix("option"))
        .unwrap_or(r);
    let lead: String = numbered
        .trim_start_matches(|c: char| !c.is_ascii_alphanumeric())
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    if let Ok(n) = lead.parse::<usize>() {
        return (1..=options.len()).contains(&n).then(|| n - 1);
    }
    let wanted = r.trim_end_matches('.').trim();
    options.iter().position(|o| o.action.as_str().eq_ignore_ascii_case(wanted))
}

/// One lookahead decision. `k` is clamped to the number of admissible actions;
/// short or inadmissible proposals are topped up from `admissible` in order, so
/// exactly `k` world-model calls are made.
pub fn lookahead_step(
    history: &HistoryView<'_>,
    admissible: &[Action],
    planner: &dyn Planner,
    wm: &dyn WorldModel,
    cfg: &LookaheadConfig,
) -> Result<LookaheadStep, LookaheadError> {
    if admissible.is_empty() {
        return Err(LookaheadError::NoAdmissible);
    }
    if cfg.k == 0 {
        return Err(LookaheadError::ZeroK);
    }
    let k = cfg.k.min(admissible.len());
    let mut calls = 1;
    let proposed = planner.propose(history, admissible, k)?;
    let mut candidates: Vec<Action> = Vec::with_capacity(k);
    for p in proposed.iter().map(|p| p.trim()) {
        if let Some(a) = admissible.iter().find(|a| a.as_str() == p) {
            if !candidates.contains(a) && candidates.len() < k {
                candidates.push(a.clone());
            }
        }
    }
    for a in admissible {
        if candidates.len() == k {
            break;
        }
        if !candidates.contains(a) {
            candidates.push(a.clone());
        }
    }

    let options: Vec<LookaheadOption> = candidates
        .iter()
        .map(|a| {
            calls += 1;
            let prefix = TrajectoryPrefix::new(history.initial_obs.clone(), history.steps.to_vec(), a.clone());
            let preview = match wm.predict(history.task_id, &prefix) {
                Ok(step) => truncate_chars(step.obs.text(), cfg.preview_chars),
                Err(e) => {
                    tracing::debug!(action = %a, error = %e, "no prediction for candidate");
                    String::from("(no prediction)")
                }
            };
            LookaheadOption {
                action: a.clone(),
                preview,
            }
        })
        .collect();

    calls += 1;
    let reply = planner.select(history, &options)?;
    let (action, fallback) = match parse_selection(&reply, &options) {
        Some(i) => (options[i].action.clone(), false),
        None => {
            tracing::debug!(reply = %reply, "unusable selection; taking the top proposal");
            (options[0].action.clone(), true)
        }
    };
    Ok(LookaheadStep {
        action,
        options,
        calls,
        fallback,
    })
}

/// Proposes with a (possibly fallible) scripted agent and selects by reading
/// the predicted outcomes: completions beat neutral states, which beat
/// failures and rejected actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedPlanner {
    pub agent: ScriptedAgent,
}

impl ScriptedPlanner {
    pub fn new(agent: ScriptedAgent) -> Self {
        Self { agent }
    }

    fn outcome_score(preview: &str) -> u8 {
        if preview.contains("Outcome: success") || preview.contains(THE_END) {
            2
        } else if preview.contains("Outcome: failure")
            || preview.starts_with(INVALID_ACTION)
            || is_rejection(preview)
            || preview == "(no prediction)"
        {
            0
        } else {
            1
        }
    }
}

impl Planner for ScriptedPlanner {
    fn name(&self) -> String {
        format!("lookahead[{}]", self.agent.name())
    }

    fn propose(&self, history: &HistoryView<'_>, admissible: &[Action], k: usize) -> Result<Vec<String>, AgentError> {
        let mut out = vec![self.agent.act(history)?.as_str().to_string()];
        out.push(ScriptedAgent::best_action(history));
        out.extend(admissible.iter().map(|a| a.as_str().to_string()));
        out.dedup();
        let mut seen = Vec::new();
        out.retain(|a| {
            let fresh = !seen.contains(a);
            seen.push(a.clone());
            fresh
        });
        out.truncate(k);
        Ok(out)
    }

    fn select(&self, _history: &HistoryView<'_>, options: &[LookaheadOption]) -> Result<String, AgentError> {
        let best = options
            .iter()
            .enumerate()
            .max_by_key(|(i, o)| (Self::outcome_score(&o.preview), std::cmp::Reverse(*i)))
            .map(|(i, _)| i)
            .ok_or(AgentError::Stuck)?;
        Ok((best + 1).to_string())
    }
}

#[derive(Debug, Clone)]
pub struct RemotePlanner {
    client: OpenAiClient,
}

impl RemotePlanner {
    pub fn new(client: OpenAiClient) -> Self {
        Self { client }
    }
}

impl Planner for RemotePlanner {
    fn name(&self) -> String {
        format!("lookahead[remote:{}]", self.client.config().model)
    }

    fn propose(&self, history: &HistoryView<'_>, admissible: &[Action], k: usize) -> Result<Vec<String>, AgentError> {
        let msgs = [
            ChatMessage::new("system", agent_system_prompt(history.domain)),
            ChatMessage::new("user", proposal_prompt(history.current_obs().text(), admissible, k)),
        ];
        Ok(parse_numbered_list(&self.client.chat(&msgs)?))
    }

    fn select(&self, history: &HistoryView<'_>, options: &[LookaheadOption]) -> Result<String, AgentError> {
        let msgs = [
            ChatMessage::new("system", SELECT_SYSTEM_PROMPT),
            ChatMessage::new("user", selection_prompt(history.current_obs().text(), options)),
        ];
        Ok(self.client.chat(&msgs)?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookaheadStats {
    pub steps: usize,
    pub calls: usize,
    pub fallbacks: usize,
    /// Steps whose call count differed from `k_effective + 2`; always 0.
    pub irregular_steps: usize,
}

/// A real-environment episode where every action comes from [`lookahead_step`].
pub fn run_lookahead(
    planner: &dyn Planner,
    wm: &dyn WorldModel,
    spec: &TaskSpec,
    run: &RunConfig,
    cfg: &LookaheadConfig,
) -> (EpisodeRecord, LookaheadStats) {
    let mut env = spec.make_env(run.max_steps);
    let initial: Observation = env.reset(spec.task_id()).expect("fresh env accepts its own task");
    let mut steps: Vec<Step> = Vec::new();
    let mut stats = LookaheadStats::default();
    let finish = |steps: Vec<Step>, success, by| {
        let mut observations = vec![initial.clone()];
        let mut actions = Vec::new();
        for s in steps {
            actions.push(s.action);
            observations.push(s.obs);
        }
        EpisodeRecord {
            task_id: spec.task_id().to_string(),
            pipeline: Pipeline::Real,
            steps: actions.len(),
            actions,
            observations,
            success,
            terminated_by: by,
        }
    };
    for _ in 0..run.max_steps {
        let view = HistoryView {
            task_id: spec.task_id(),
            domain: spec.domain(),
            initial_obs: &initial,
            steps: &steps,
        };
        let admissible: Vec<Action> = policy::admissible(&PolicyView::from_history(&view))
            .into_iter()
            .filter_map(|a| Action::new(a).ok())
            .collect();
        let step = match lookahead_step(&view, &admissible, planner, wm, cfg) {
            Ok(s) => s,
            Err(e) => {
                tracing::warn!(task = spec.task_id(), error = %e, "lookahead failed; ending episode");
                return (finish(steps, false, Termination::InvalidAction), stats);
            }
        };
        stats.steps += 1;
        stats.calls += step.calls;
        stats.fallbacks += step.fallback as usize;
        if step.calls != cfg.k.min(admissible.len()) + 2 {
            stats.irregular_steps += 1;
        }
        let out = env.step(&step.action).expect("env is live until done");
        steps.push(Step::new(step.action, out.obs));
        if out.done {
            let by = if out.success { Termination::Goal } else { Termination::EnvEnd };
            return (finish(steps, out.success, by), stats);
        }
    }
    (finish(steps, false, Termination::MaxSteps), stats)
}
