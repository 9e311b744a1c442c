//! Real, WM and W2R episode loops and the suite-level runner over all three.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::AgentHandle;
use crate::envsim::{TaskSpec, TaskSuite, WmError, WorldModel, DEFAULT_MAX_STEPS};
use crate::exec::Executor;
use crate::model::{Action, EpisodeRecord, HistoryView, Observation, Pipeline, Step, Termination, TrajectoryPrefix};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("expected a {expected} record, got {got}")]
    WrongPipeline { expected: Pipeline, got: Pipeline },
    #[error("task {0:?} is not in the suite")]
    UnknownTask(String),
    #[error(transparent)]
    Wm(#[from] WmError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl RunConfig {
    pub fn new(max_steps: usize) -> Result<Self, PipelineError> {
        if max_steps == 0 {
            return Err(PipelineError::Config("max_steps must be at least 1".into()));
        }
        Ok(Self { max_steps })
    }
}

/// Accumulates one episode.
struct Rollout<'a> {
    task_id: &'a str,
    spec: &'a TaskSpec,
    initial: Observation,
    steps: Vec<Step>,
}

impl<'a> Rollout<'a> {
    fn new(spec: &'a TaskSpec, initial: Observation) -> Self {
        Self {
            task_id: spec.task_id(),
            spec,
            initial,
            steps: Vec::new(),
        }
    }

    fn view(&self) -> HistoryView<'_> {
        HistoryView {
            task_id: self.task_id,
            domain: self.spec.domain(),
            initial_obs: &self.initial,
            steps: &self.steps,
        }
    }

    fn finish(self, pipeline: Pipeline, success: bool, terminated_by: Termination) -> EpisodeRecord {
        let mut observations = Vec::with_capacity(self.steps.len() + 1);
        observations.push(self.initial);
        let mut actions = Vec::with_capacity(self.steps.len());
        for s in self.steps {
            actions.push(s.action);
            observations.push(s.obs);
        }
        EpisodeRecord {
            task_id: self.task_id.to_string(),
            pipeline,
            steps: actions.len(),
            actions,
            observations,
            success,
            terminated_by,
        }
    }
}

fn next_action(agent: &dyn AgentHandle, r: &Rollout<'_>) -> Option<Action> {
    match agent.act(&r.view()) {
        Ok(a) => Some(a),
        Err(e) => {
            tracing::warn!(task = r.task_id, agent = %agent.name(), error = %e, "agent failed; ending episode");
            None
        }
    }
}

/// Agent acting in the real environment until done or `max_steps`.
pub fn run_real(agent: &dyn AgentHandle, spec: &TaskSpec, cfg: &RunConfig) -> EpisodeRecord {
    let mut env = spec.make_env(cfg.max_steps);
    let initial = env.reset(spec.task_id()).expect("fresh env accepts its own task");
    let mut r = Rollout::new(spec, initial);
    for _ in 0..cfg.max_steps {
        let Some(action) = next_action(agent, &r) else {
            return r.finish(Pipeline::Real, false, Termination::InvalidAction);
        };
        let out = env.step(&action).expect("env is live until done");
        r.steps.push(Step::new(action, out.obs));
        if out.done {
            let by = if out.success { Termination::Goal } else { Termination::EnvEnd };
            return r.finish(Pipeline::Real, out.success, by);
        }
    }
    r.finish(Pipeline::Real, false, Termination::MaxSteps)
}

/// Agent acting in the world model; success is the model's own completion signal.
/// A corruption that does not apply to the task's domain is an error; any
/// other prediction failure ends the episode as a failure.
pub fn run_wm(
    agent: &dyn AgentHandle,
    wm: &dyn WorldModel,
    spec: &TaskSpec,
    cfg: &RunConfig,
) -> Result<EpisodeRecord, PipelineError> {
    let mut r = Rollout::new(spec, spec.initial_obs());
    for _ in 0..cfg.max_steps {
        let Some(action) = next_action(agent, &r) else {
            return Ok(r.finish(Pipeline::WM, false, Termination::InvalidAction));
        };
        let prefix = TrajectoryPrefix::new(r.initial.clone(), r.steps.clone(), action.clone());
        let out = match wm.predict(r.task_id, &prefix) {
            Ok(out) => out,
            Err(e @ WmError::Unsupported { .. }) => return Err(e.into()),
            Err(e) => {
                tracing::warn!(task = r.task_id, wm = %wm.name(), error = %e, "world model failed; ending episode");
                return Ok(r.finish(Pipeline::WM, false, Termination::EnvEnd));
            }
        };
        r.steps.push(Step::new(action, out.obs));
        if out.done {
            let by = if out.success { Termination::Goal } else { Termination::EnvEnd };
            return Ok(r.finish(Pipeline::WM, out.success, by));
        }
    }
    Ok(r.finish(Pipeline::WM, false, Termination::MaxSteps))
}

/// Open-loop replay of a WM episode's actions in the real environment.
pub fn replay_w2r(wm_record: &EpisodeRecord, spec: &TaskSpec, cfg: &RunConfig) -> Result<EpisodeRecord, PipelineError> {
    if wm_record.pipeline != Pipeline::WM {
        return Err(PipelineError::WrongPipeline {
            expected: Pipeline::WM,
            got: wm_record.pipeline,
        });
    }
    let mut env = spec.make_env(cfg.max_steps);
    let initial = env.reset(spec.task_id()).expect("fresh env accepts its own task");
    let mut r = Rollout::new(spec, initial);
    for action in wm_record.actions.iter().take(cfg.max_steps) {
        let out = env.step(action).expect("env is live until done");
        r.steps.push(Step::new(action.clone(), out.obs));
        if out.done {
            let by = if out.success { Termination::Goal } else { Termination::EnvEnd };
            return Ok(r.finish(Pipeline::W2R, out.success, by));
        }
    }
    let by = if wm_record.actions.len() > cfg.max_steps {
        Termination::MaxSteps
    } else {
        Termination::EnvEnd
    };
    Ok(r.finish(Pipeline::W2R, false, by))
}

/// All three pipelines for one agent over a suite, in suite order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRun {
    pub agent: String,
    pub wm: String,
    pub task_ids: Vec<String>,
    pub real: Vec<EpisodeRecord>,
    pub wm_runs: Vec<EpisodeRecord>,
    pub w2r: Vec<EpisodeRecord>,
    /// Tasks dropped because the world model could not run them.
    pub skipped: Vec<String>,
}

impl SuiteRun {
    pub fn real_success(&self) -> Vec<bool> {
        self.real.iter().map(|e| e.success).collect()
    }
    pub fn wm_success(&self) -> Vec<bool> {
        self.wm_runs.iter().map(|e| e.success).collect()
    }
    pub fn w2r_success(&self) -> Vec<bool> {
        self.w2r.iter().map(|e| e.success).collect()
    }

    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.real.iter().chain(&self.wm_runs).chain(&self.w2r)
    }
}

pub fn run_suite(
    agent: &dyn AgentHandle,
    wm: &dyn WorldModel,
    suite: &TaskSuite,
    cfg: &RunConfig,
    exec: &Executor,
) -> SuiteRun {
    let per_task = exec.map(suite.tasks(), |spec| {
        let real = run_real(agent, spec, cfg);
        let wm_run = run_wm(agent, wm, spec, cfg)?;
        let w2r = replay_w2r(&wm_run, spec, cfg)?;
        Ok::<_, PipelineError>((real, wm_run, w2r))
    });
    let mut run = SuiteRun {
        agent: agent.name(),
        wm: wm.name(),
        task_ids: Vec::new(),
        real: Vec::new(),
        wm_runs: Vec::new(),
        w2r: Vec::new(),
        skipped: Vec::new(),
    };
    for (spec, res) in suite.tasks().iter().zip(per_task) {
        match res {
            Ok((real, wm_run, w2r)) => {
                run.task_ids.push(spec.task_id().to_string());
                run.real.push(real);
                run.wm_runs.push(wm_run);
                run.w2r.push(w2r);
            }
            Err(e) => {
                tracing::warn!(task = spec.task_id(), error = %e, "task skipped");
                run.skipped.push(spec.task_id().to_string());
            }
        }
    }
    run
}
