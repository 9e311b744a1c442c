//! End-to-end protocols: Real / WM / W2R runs, surrogate evaluation,
//! lookahead planning and training-data construction.

pub mod agent;
pub mod dataset;
pub mod episodes;
pub mod lookahead;
pub mod surrogate;

pub use agent::{AgentError, AgentHandle, RemoteChatAgent, ScriptedAgent};
pub use dataset::{build_grpo_dataset, DatasetConfig, DatasetOutput, GrpoRecord};
pub use episodes::{replay_w2r, run_real, run_suite, run_wm, PipelineError, RunConfig, SuiteRun};
pub use lookahead::{lookahead_step, run_lookahead, LookaheadConfig, Planner, RemotePlanner, ScriptedPlanner};
pub use surrogate::{surrogate_eval, SurrogateReport};
