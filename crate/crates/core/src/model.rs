//! Trajectories, transitions and episode records shared by every other module.
//!
//! Observations keep the raw environment text as ground truth. A shop page
//! parse ([`PageState`]) is derived from that text on construction and is never
//! serialized on its own.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perturb::PageState;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("observation text must not be empty")]
    EmptyObservation,
    #[error("invalid action {0:?}: must be a single non-empty line without surrounding whitespace")]
    InvalidAction(String),
    #[error("prefix index {t} out of range for trajectory with {len} steps")]
    PrefixOutOfRange { t: usize, len: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Jsonl {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Which toy domain a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Shop,
    Adventure,
}

impl Domain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Shop => "shop",
            Domain::Adventure => "adventure",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Domain {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shop" | "webshop" => Ok(Domain::Shop),
            "adventure" | "textworld" => Ok(Domain::Adventure),
            other => Err(format!("unknown domain {other:?}")),
        }
    }
}

/// A textual observation. Serializes as a bare JSON string.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Observation {
    text: String,
    structured: Option<PageState>,
}

impl Observation {
    pub fn new(text: impl Into<String>) -> Result<Self, ModelError> {
        let text = text.into();
        if text.is_empty() {
            return Err(ModelError::EmptyObservation);
        }
        let structured = PageState::parse(&text).ok();
        Ok(Self { text, structured })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// The shop-page parse of this observation, when the text is a toy shop page.
    pub fn page(&self) -> Option<&PageState> {
        self.structured.as_ref()
    }
}

impl fmt::Debug for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Observation").field(&self.text).finish()
    }
}

impl TryFrom<String> for Observation {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Observation::new(value)
    }
}

impl From<Observation> for String {
    fn from(value: Observation) -> Self {
        value.text
    }
}

/// A single agent command such as `click[buy now]` or `open antique trunk`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Action(String);

impl Action {
    pub fn new(text: impl Into<String>) -> Result<Self, ModelError> {
        let text = text.into();
        if text.is_empty() || text.trim() != text || text.contains('\n') || text.contains('\r') {
            return Err(ModelError::InvalidAction(text));
        }
        Ok(Self(text))
    }

    /// Takes the first non-empty line of free model output and trims it.
    pub fn from_model_output(raw: &str) -> Result<Self, ModelError> {
        let line = raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
        Action::new(line)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Leading verb: `search`/`click` for shop actions, the first word otherwise.
    pub fn verb(&self) -> &str {
        if let Some(idx) = self.0.find('[') {
            return &self.0[..idx];
        }
        self.0.split_whitespace().next().unwrap_or("")
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Action {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Action::new(value)
    }
}

impl From<Action> for String {
    fn from(value: Action) -> Self {
        value.0
    }
}

/// One (action, resulting observation) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: Action,
    pub obs: Observation,
}

impl Step {
    pub fn new(action: Action, obs: Observation) -> Self {
        Self { action, obs }
    }
}

/// A full interaction trajectory in the JSONL interchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub task_id: String,
    pub initial_obs: Observation,
    pub steps: Vec<Step>,
    pub success: bool,
    #[serde(rename = "reward")]
    pub reward_scalar: f64,
}

/// Borrowed view of an in-progress interaction, handed to agents.
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a> {
    pub task_id: &'a str,
    pub domain: Domain,
    pub initial_obs: &'a Observation,
    pub steps: &'a [Step],
}

impl<'a> HistoryView<'a> {
    pub fn current_obs(&self) -> &'a Observation {
        self.steps.last().map(|s| &s.obs).unwrap_or(self.initial_obs)
    }

    pub fn observations(&self) -> impl Iterator<Item = &'a Observation> + 'a {
        std::iter::once(self.initial_obs).chain(self.steps.iter().map(|s| &s.obs))
    }
}

/// The history `s_0, a_1, s_1, ..., a_t`: it always ends with an action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPrefix {
    pub initial_obs: Observation,
    pub steps: Vec<Step>,
    pub action: Action,
}

impl TrajectoryPrefix {
    pub fn new(initial_obs: Observation, steps: Vec<Step>, action: Action) -> Self {
        Self {
            initial_obs,
            steps,
            action,
        }
    }

    /// All actions in order, including the trailing one.
    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|s| &s.action).chain(std::iter::once(&self.action))
    }

    /// Index `t` of the trailing action (1-based).
    pub fn t(&self) -> usize {
        self.steps.len() + 1
    }
}

impl Trajectory {
    pub fn view(&self, domain: Domain) -> HistoryView<'_> {
        HistoryView {
            task_id: &self.task_id,
            domain,
            initial_obs: &self.initial_obs,
            steps: &self.steps,
        }
    }

    /// Prefix ending with action `t` (1-based).
    pub fn history_prefix(&self, t: usize) -> Result<TrajectoryPrefix, ModelError> {
        if t == 0 || t > self.steps.len() {
            return Err(ModelError::PrefixOutOfRange {
                t,
                len: self.steps.len(),
            });
        }
        Ok(TrajectoryPrefix {
            initial_obs: self.initial_obs.clone(),
            steps: self.steps[..t - 1].to_vec(),
            action: self.steps[t - 1].action.clone(),
        })
    }

    /// One transition tuple per `t` in `1..steps`; fewer than two steps yields none.
    pub fn decompose(&self, domain: Domain) -> Vec<TransitionTuple> {
        if self.steps.len() < 2 {
            return Vec::new();
        }
        (1..self.steps.len())
            .map(|t| TransitionTuple {
                history: self.history_prefix(t).expect("t within range"),
                real_next_state: self.steps[t - 1].obs.clone(),
                expert_next_action: self.steps[t].action.clone(),
                domain,
            })
            .collect()
    }
}

/// `(h_t, s_{t+1}, a*_{t+1})` plus the domain it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTuple {
    pub history: TrajectoryPrefix,
    pub real_next_state: Observation,
    pub expert_next_action: Action,
    pub domain: Domain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pipeline {
    Real,
    WM,
    W2R,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Real => "Real",
            Pipeline::WM => "WM",
            Pipeline::W2R => "W2R",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Goal,
    MaxSteps,
    InvalidAction,
    EnvEnd,
}

/// One full rollout under a pipeline. `observations` starts with the initial
/// observation, so it holds `steps + 1` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task_id: String,
    pub pipeline: Pipeline,
    pub actions: Vec<Action>,
    pub observations: Vec<Observation>,
    pub success: bool,
    pub steps: usize,
    pub terminated_by: Termination,
}

impl EpisodeRecord {
    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            task_id: self.task_id.clone(),
            initial_obs: self.observations[0].clone(),
            steps: self
                .actions
                .iter()
                .zip(self.observations.iter().skip(1))
                .map(|(a, o)| Step::new(a.clone(), o.clone()))
                .collect(),
            success: self.success,
            reward_scalar: if self.success { 1.0 } else { 0.0 },
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ModelError> {
    let io_err = |source| ModelError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("serializable row");
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads one JSON value per non-blank line; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ModelError> {
    let io_err = |source| ModelError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|source| ModelError::Jsonl {
            path: path.display().to_string(),
            line: idx + 1,
            source,
        })?;
        out.push(row);
    }
    Ok(out)
}
