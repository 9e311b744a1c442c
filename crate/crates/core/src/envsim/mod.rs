//! Deterministic toy environments and world-model handles.
//!
//! Adapters for external environments plug in by implementing [`Environment`];
//! external simulators plug in by implementing [`WorldModel`].

pub mod adventure;
pub mod generate;
pub mod policy;
pub mod shop;
pub mod worldmodel;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, Domain, Observation};

pub use adventure::{AdventureEnv, ToyAdventureSpec};
pub use shop::{ShopEnv, ToyShopSpec};
pub use worldmodel::{Corruption, CorruptionKind, CorruptedWm, OracleWm, RemoteWm, WmError, WmStep, WorldModel};

pub const DEFAULT_MAX_STEPS: usize = 50;
pub const INVALID_ACTION: &str = "Invalid action.";
/// Bumped whenever rendered observation text changes; see `docs/GRAMMAR.md`.
pub const OBSERVATION_GRAMMAR_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("step called before reset")]
    NotReset,
    #[error("episode already finished")]
    AfterDone,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid spec: {0}")]
pub struct SpecError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Observation,
    pub done: bool,
    pub success: bool,
    /// Task reward in `[0, 1]`; partial credit on shop purchases.
    pub reward: f64,
}

/// A single-episode environment instance. Not shared across threads; create
/// one per task.
pub trait Environment: Send {
    fn reset(&mut self, task_id: &str) -> Result<Observation, EnvError>;
    fn step(&mut self, action: &Action) -> Result<EnvStep, EnvError>;
    fn max_steps(&self) -> usize;
    fn domain(&self) -> Domain;
    fn task_id(&self) -> &str;
}

/// A toy task spec of either domain, as stored in spec files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "snake_case")]
pub enum TaskSpec {
    Shop(ToyShopSpec),
    Adventure(ToyAdventureSpec),
}

impl TaskSpec {
    pub fn task_id(&self) -> &str {
        match self {
            TaskSpec::Shop(s) => &s.task_id,
            TaskSpec::Adventure(s) => &s.task_id,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            TaskSpec::Shop(_) => Domain::Shop,
            TaskSpec::Adventure(_) => Domain::Adventure,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        match self {
            TaskSpec::Shop(s) => s.validate(),
            TaskSpec::Adventure(s) => s.validate(),
        }
    }

    /// A fresh environment instance for this task.
    pub fn make_env(&self, max_steps: usize) -> Box<dyn Environment> {
        match self {
            TaskSpec::Shop(s) => Box::new(
                ShopEnv::new(s.clone())
                    .expect("specs are validated on load")
                    .with_max_steps(max_steps),
            ),
            TaskSpec::Adventure(s) => Box::new(
                AdventureEnv::new(s.clone())
                    .expect("specs are validated on load")
                    .with_max_steps(max_steps),
            ),
        }
    }

    /// Initial observation without keeping the environment around.
    pub fn initial_obs(&self) -> Observation {
        let mut env = self.make_env(DEFAULT_MAX_STEPS);
        env.reset(self.task_id()).expect("own task id")
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("duplicate task id {0:?}")]
    Duplicate(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// An ordered, validated set of tasks addressed by id.
#[derive(Debug, Clone, Default)]
pub struct TaskSuite {
    tasks: Vec<TaskSpec>,
    index: HashMap<String, usize>,
}

impl TaskSuite {
    pub fn new(tasks: Vec<TaskSpec>) -> Result<Self, SuiteError> {
        let mut index = HashMap::with_capacity(tasks.len());
        for (i, t) in tasks.iter().enumerate() {
            t.validate()?;
            if index.insert(t.task_id().to_string(), i).is_some() {
                return Err(SuiteError::Duplicate(t.task_id().to_string()));
            }
        }
        Ok(Self { tasks, index })
    }

    pub fn get(&self, task_id: &str) -> Option<&TaskSpec> {
        self.index.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn task_ids(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.task_id().to_string()).collect()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    /// Loads every `*.json` spec file in a directory, sorted by file name.
    pub fn load_dir(dir: &Path) -> Result<Self, SuiteError> {
        let io = |source| SuiteError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        let mut tasks = Vec::with_capacity(paths.len());
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|source| SuiteError::Io {
                path: p.display().to_string(),
                source,
            })?;
            let spec: TaskSpec = serde_json::from_str(&text).map_err(|source| SuiteError::Json {
                path: p.display().to_string(),
                source,
            })?;
            tasks.push(spec);
        }
        Self::new(tasks)
    }
}
