//! Declarative harness config (TOML) and the flag overrides applied on top.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use behr_core::envsim::CorruptionKind;
use behr_core::model::Domain;
use behr_core::openai::EndpointConfig;
use behr_core::perturb::DEFAULT_NOISE_RATE;
use behr_core::pipelines::dataset::DEFAULT_F1_THRESHOLD;
use behr_core::pipelines::lookahead::{DEFAULT_K, DEFAULT_PREVIEW_CHARS};
use behr_core::reward::{RewardKind, RewardMode};
use behr_core::scorer::remote::RemoteScorerConfig;
use behr_core::scorer::ScriptedScorerConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Anything wrong with the config or with user-supplied input files. Maps to exit code 1.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("{path}:{line}: {reason}")]
    Input { path: String, line: usize, reason: String },
}

impl ConfigError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

/// World model selection: `oracle`, `corrupted:<kind>` or `remote`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WmChoice {
    #[default]
    Oracle,
    Corrupted(CorruptionKind),
    Remote,
}

impl FromStr for WmChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(WmChoice::Oracle),
            "remote" => Ok(WmChoice::Remote),
            _ => match s.strip_prefix("corrupted:") {
                Some(kind) => kind.parse().map(WmChoice::Corrupted),
                None => Err(format!("unknown world model {s:?}; expected oracle, corrupted:<kind> or remote")),
            },
        }
    }
}

impl TryFrom<String> for WmChoice {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<WmChoice> for String {
    fn from(w: WmChoice) -> String {
        w.to_string()
    }
}

impl fmt::Display for WmChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WmChoice::Oracle => f.write_str("oracle"),
            WmChoice::Corrupted(k) => write!(f, "corrupted:{k}"),
            WmChoice::Remote => f.write_str("remote"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Remote,
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scripted" => Ok(BackendKind::Scripted),
            "remote" => Ok(BackendKind::Remote),
            other => Err(format!("unknown backend {other:?}; expected scripted or remote")),
        }
    }
}

/// Where tasks come from: a spec directory, or `count` generated specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub domain: Domain,
    pub specs_dir: Option<PathBuf>,
    pub count: usize,
    /// Restrict to these ids; empty means all.
    pub ids: Vec<String>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            domain: Domain::Shop,
            specs_dir: None,
            count: 200,
            ids: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionConfig {
    pub rate: f64,
    pub k: usize,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        let c = behr_core::envsim::Corruption::new(CorruptionKind::DriftAfterStepK);
        Self { rate: c.rate, k: c.k }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerConfig {
    pub kind: BackendKind,
    pub scripted: ScriptedScorerConfig,
    pub remote: Option<RemoteScorerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub name: String,
    #[serde(default)]
    pub kind: BackendKind,
    /// Scripted agents only: probability of following the plan at each step.
    #[serde(default = "default_skill")]
    pub skill: f64,
    #[serde(default)]
    pub endpoint: Option<EndpointConfig>,
}

fn default_skill() -> f64 {
    0.8
}

impl AgentConfig {
    pub fn scripted(name: &str, skill: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: BackendKind::Scripted,
            skill,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LookaheadSection {
    pub k: usize,
    pub preview_chars: usize,
    /// Scripted planner skill; ignored when `endpoint` is set.
    pub planner_skill: f64,
    pub endpoint: Option<EndpointConfig>,
}

impl Default for LookaheadSection {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            preview_chars: DEFAULT_PREVIEW_CHARS,
            planner_skill: 0.7,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub f1_threshold: f64,
    pub budget: Option<usize>,
    /// JSONL of trajectories; without it, expert runs over the task set are used.
    pub trajectories: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            f1_threshold: DEFAULT_F1_THRESHOLD,
            budget: None,
            trajectories: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbSection {
    pub noise_rate: f64,
    /// JSONL of transition tuples; without it a toy corpus is generated.
    pub corpus: Option<PathBuf>,
    pub corpus_size: usize,
}

impl Default for PerturbSection {
    fn default() -> Self {
        Self {
            noise_rate: DEFAULT_NOISE_RATE,
            corpus: None,
            corpus_size: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    pub threads: usize,
    pub max_steps: usize,
    pub tasks: TaskConfig,
    pub wm: WmChoice,
    pub corruption: CorruptionConfig,
    pub wm_endpoint: Option<EndpointConfig>,
    pub scorer: ScorerConfig,
    pub reward: RewardMode,
    pub agents: Vec<AgentConfig>,
    /// Agent-name pairs compared with a sign test on per-task W2R success.
    pub comparisons: Vec<(String, String)>,
    pub lookahead: LookaheadSection,
    pub dataset: DatasetSection,
    pub perturb: PerturbSection,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            threads: 0,
            max_steps: behr_core::envsim::DEFAULT_MAX_STEPS,
            tasks: TaskConfig::default(),
            wm: WmChoice::Oracle,
            corruption: CorruptionConfig::default(),
            wm_endpoint: None,
            scorer: ScorerConfig::default(),
            reward: RewardMode::default(),
            agents: Vec::new(),
            comparisons: Vec::new(),
            lookahead: LookaheadSection::default(),
            dataset: DatasetSection::default(),
            perturb: PerturbSection::default(),
        }
    }
}

/// `--tasks` accepts a count of generated tasks or a spec directory.
#[derive(Debug, Clone, PartialEq)]
pub enum TasksFlag {
    Count(usize),
    Dir(PathBuf),
}

impl FromStr for TasksFlag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err("empty --tasks value".into());
        }
        Ok(match s.parse::<usize>() {
            Ok(n) => TasksFlag::Count(n),
            Err(_) => TasksFlag::Dir(PathBuf::from(s)),
        })
    }
}

/// Flag values that override the config file when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tasks: Option<TasksFlag>,
    pub wm: Option<WmChoice>,
    pub scorer: Option<BackendKind>,
    pub mode: Option<RewardKind>,
    pub coef: Option<f64>,
    pub k: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl HarnessConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            source: Box::new(e),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Applies flags (flags win) and validates the result.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, ConfigError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        match &o.tasks {
            Some(TasksFlag::Count(n)) => {
                self.tasks.count = *n;
                self.tasks.specs_dir = None;
            }
            Some(TasksFlag::Dir(d)) => self.tasks.specs_dir = Some(d.clone()),
            None => {}
        }
        if let Some(w) = o.wm {
            self.wm = w;
        }
        if let Some(s) = o.scorer {
            self.scorer.kind = s;
        }
        if o.mode.is_some() || o.coef.is_some() {
            let kind = o.mode.unwrap_or(self.reward.kind);
            let coef = o.coef.unwrap_or(self.reward.coef);
            self.reward = RewardMode::new(kind, coef).map_err(|e| ConfigError::invalid("reward", e.to_string()))?;
        }
        if let Some(k) = o.k {
            self.lookahead.k = k;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_steps == 0 {
            return Err(ConfigError::invalid("max_steps", "must be at least 1"));
        }
        if self.lookahead.k == 0 {
            return Err(ConfigError::invalid("lookahead.k", "must be at least 1"));
        }
        let unit = |field: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("{v} is outside [0, 1]")))
            }
        };
        unit("corruption.rate", self.corruption.rate)?;
        unit("perturb.noise_rate", self.perturb.noise_rate)?;
        unit("lookahead.planner_skill", self.lookahead.planner_skill)?;
        if !(self.dataset.f1_threshold.is_finite() && self.dataset.f1_threshold >= 0.0) {
            return Err(ConfigError::invalid("dataset.f1_threshold", "must be a finite non-negative number"));
        }
        RewardMode::new(self.reward.kind, self.reward.coef)
            .map_err(|e| ConfigError::invalid("reward", e.to_string()))?;
        if self.wm == WmChoice::Remote && self.wm_endpoint.is_none() {
            return Err(ConfigError::invalid("wm_endpoint", "required when wm = \"remote\""));
        }
        if self.scorer.kind == BackendKind::Remote && self.scorer.remote.is_none() {
            return Err(ConfigError::invalid("scorer.remote", "required when the scorer is remote"));
        }
        let mut names = BTreeSet::new();
        for a in &self.agents {
            if !names.insert(a.name.as_str()) {
                return Err(ConfigError::invalid("agents", format!("duplicate agent name {:?}", a.name)));
            }
            unit("agents.skill", a.skill)?;
            if a.kind == BackendKind::Remote && a.endpoint.is_none() {
                return Err(ConfigError::invalid("agents", format!("remote agent {:?} has no endpoint", a.name)));
            }
        }
        for (a, b) in &self.comparisons {
            for n in [a, b] {
                if !self.agent_configs().iter().any(|c| &c.name == n) {
                    return Err(ConfigError::invalid("comparisons", format!("unknown agent {n:?}")));
                }
            }
        }
        Ok(())
    }

    /// Configured agents, or a single scripted agent when none are listed.
    pub fn agent_configs(&self) -> Vec<AgentConfig> {
        if self.agents.is_empty() {
            vec![AgentConfig::scripted("scripted", default_skill())]
        } else {
            self.agents.clone()
        }
    }
}
