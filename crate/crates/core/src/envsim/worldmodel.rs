//! World-model handles: the ground-truth oracle, seeded corruptions of it, and
//! a remote chat model.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adventure::THE_END;
use super::shop::ShopDynamics;
use super::{EnvError, Environment, ShopEnv, AdventureEnv, TaskSpec, TaskSuite};
use crate::model::{Domain, Observation, TrajectoryPrefix};
use crate::openai::{ChatMessage, ClientError, OpenAiClient};
use crate::perturb::page::PageType;
use crate::util::seeded_unit;

/// Next observation plus the completion signal.
#[derive(Debug, Clone, PartialEq)]
pub struct WmStep {
    pub obs: Observation,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WmError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("history diverges from the simulated dynamics at step {step}")]
    Divergence { step: usize },
    #[error("corruption {kind} does not apply to the {domain} domain")]
    Unsupported { kind: CorruptionKind, domain: Domain },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("remote world model: {0}")]
    Remote(#[from] ClientError),
    #[error("remote world model returned an empty observation")]
    Empty,
}

/// `predict(h_t) -> (s_{t+1}, done)`: a stateless map from a history ending in
/// an action to the next observation.
pub trait WorldModel: Send + Sync {
    fn name(&self) -> String;
    fn predict(&self, task_id: &str, history: &TrajectoryPrefix) -> Result<WmStep, WmError>;
}

/// Replays `history` through `env`, insisting that every recorded observation
/// matches, then executes the trailing action.
fn replay(mut env: Box<dyn Environment>, task_id: &str, history: &TrajectoryPrefix) -> Result<WmStep, WmError> {
    // s_0 always comes from the real environment, so a corrupted copy may
    // render it differently; only simulated observations are checked
    env.reset(task_id)?;
    for (i, step) in history.steps.iter().enumerate() {
        let out = env.step(&step.action).map_err(|_| WmError::Divergence { step: i + 1 })?;
        if out.obs != step.obs || out.done {
            return Err(WmError::Divergence { step: i + 1 });
        }
    }
    let out = env.step(&history.action)?;
    Ok(WmStep {
        obs: out.obs,
        done: out.done,
        success: out.success,
    })
}

/// The true dynamics, recomputed from the history on every call.
#[derive(Debug, Clone)]
pub struct OracleWm {
    suite: Arc<TaskSuite>,
}

impl OracleWm {
    pub fn new(suite: Arc<TaskSuite>) -> Self {
        Self { suite }
    }
}

impl WorldModel for OracleWm {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, task_id: &str, history: &TrajectoryPrefix) -> Result<WmStep, WmError> {
        let spec = self
            .suite
            .get(task_id)
            .ok_or_else(|| WmError::UnknownTask(task_id.to_string()))?;
        replay(spec.make_env(usize::MAX), task_id, history)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    /// Shop: the target never appears in results and any purchase counts as success.
    DropTargetPages,
    /// Adventure: the exit the walkthrough needs first is missing.
    BreakConnectivity,
    /// Both: after step `k` the observation freezes and the episode never ends.
    DriftAfterStepK,
}

impl CorruptionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorruptionKind::DropTargetPages => "drop_target_pages",
            CorruptionKind::BreakConnectivity => "break_connectivity",
            CorruptionKind::DriftAfterStepK => "drift_after_step_k",
        }
    }

    pub fn applies_to(&self, domain: Domain) -> bool {
        match self {
            CorruptionKind::DropTargetPages => domain == Domain::Shop,
            CorruptionKind::BreakConnectivity => domain == Domain::Adventure,
            CorruptionKind::DriftAfterStepK => true,
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorruptionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop_target_pages" => Ok(CorruptionKind::DropTargetPages),
            "break_connectivity" => Ok(CorruptionKind::BreakConnectivity),
            "drift_after_step_k" => Ok(CorruptionKind::DriftAfterStepK),
            other => Err(format!("unknown corruption {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corruption {
    pub kind: CorruptionKind,
    /// Fraction of tasks affected, chosen per task from the seed. 0 disables.
    #[serde(default = "default_rate")]
    pub rate: f64,
    /// Step after which `drift_after_step_k` freezes.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_rate() -> f64 {
    1.0
}
fn default_k() -> usize {
    3
}

impl Corruption {
    pub fn new(kind: CorruptionKind) -> Self {
        Self {
            kind,
            rate: default_rate(),
            k: default_k(),
            seed: 0,
        }
    }

    pub fn affects(&self, task_id: &str) -> bool {
        self.rate > 0.0 && seeded_unit(self.seed, &["corruption", self.kind.as_str(), task_id]) < self.rate
    }
}

/// The oracle with one deterministic corruption injected on a seeded subset of tasks.
#[derive(Debug, Clone)]
pub struct CorruptedWm {
    suite: Arc<TaskSuite>,
    corruption: Corruption,
}

impl CorruptedWm {
    pub fn new(suite: Arc<TaskSuite>, corruption: Corruption) -> Self {
        Self { suite, corruption }
    }

    pub fn corruption(&self) -> &Corruption {
        &self.corruption
    }
}

impl WorldModel for CorruptedWm {
    fn name(&self) -> String {
        format!("corrupted:{}", self.corruption.kind)
    }

    fn predict(&self, task_id: &str, history: &TrajectoryPrefix) -> Result<WmStep, WmError> {
        let spec = self
            .suite
            .get(task_id)
            .ok_or_else(|| WmError::UnknownTask(task_id.to_string()))?;
        let kind = self.corruption.kind;
        if !kind.applies_to(spec.domain()) {
            return Err(WmError::Unsupported {
                kind,
                domain: spec.domain(),
            });
        }
        if !self.corruption.affects(task_id) {
            return replay(spec.make_env(usize::MAX), task_id, history);
        }
        match (kind, spec) {
            (CorruptionKind::DropTargetPages, TaskSpec::Shop(s)) => {
                let env = ShopEnv::new(s.clone()).expect("validated").with_dynamics(ShopDynamics {
                    hide_target_in_results: true,
                    accept_any_purchase: true,
                });
                replay(Box::new(env), task_id, history)
            }
            (CorruptionKind::BreakConnectivity, TaskSpec::Adventure(s)) => {
                let env = AdventureEnv::new(s.without_first_plan_exit()).expect("removing an exit keeps a spec valid");
                replay(Box::new(env), task_id, history)
            }
            (CorruptionKind::DriftAfterStepK, spec) => {
                let k = self.corruption.k;
                if history.t() <= k {
                    return replay(spec.make_env(usize::MAX), task_id, history);
                }
                // t > k, so the history already holds the k-th observation
                let frozen = match k {
                    0 => history.initial_obs.clone(),
                    k => history.steps[k - 1].obs.clone(),
                };
                Ok(WmStep {
                    obs: frozen,
                    done: false,
                    success: false,
                })
            }
            _ => unreachable!("applies_to checked above"),
        }
    }
}

/// A chat model prompted in the simulator convention: the initial observation
/// is the system turn, actions are user turns, observations assistant turns.
#[derive(Debug, Clone)]
pub struct RemoteWm {
    client: OpenAiClient,
    domain: Domain,
}

impl RemoteWm {
    pub fn new(client: OpenAiClient, domain: Domain) -> Self {
        Self { client, domain }
    }

    pub fn messages(history: &TrajectoryPrefix) -> Vec<ChatMessage> {
        let mut msgs = vec![ChatMessage::new("system", history.initial_obs.text())];
        for s in &history.steps {
            msgs.push(ChatMessage::new("user", s.action.as_str()));
            msgs.push(ChatMessage::new("assistant", s.obs.text()));
        }
        msgs.push(ChatMessage::new("user", history.action.as_str()));
        msgs
    }
}

/// Reads the completion signal out of generated observation text.
pub fn completion_signal(domain: Domain, obs: &Observation) -> (bool, bool) {
    match domain {
        Domain::Shop => match obs.page() {
            Some(p) if p.page_type == PageType::Done => (true, p.details.iter().any(|d| d == "Outcome: success")),
            _ => (false, false),
        },
        Domain::Adventure => {
            let end = obs.text().contains(THE_END);
            (end, end)
        }
    }
}

impl WorldModel for RemoteWm {
    fn name(&self) -> String {
        format!("remote:{}", self.client.config().model)
    }

    fn predict(&self, _task_id: &str, history: &TrajectoryPrefix) -> Result<WmStep, WmError> {
        let text = self.client.chat(&Self::messages(history))?;
        let obs = Observation::new(text).map_err(|_| WmError::Empty)?;
        let (done, success) = completion_signal(self.domain, &obs);
        Ok(WmStep { obs, done, success })
    }
}
