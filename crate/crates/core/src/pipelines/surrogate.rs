//! Using the world model as an offline stand-in for real-environment evaluation.

use serde::{Deserialize, Serialize};

use super::agent::AgentHandle;
use super::episodes::{run_real, run_wm, RunConfig};
use crate::envsim::{TaskSuite, WorldModel};
use crate::exec::Executor;
use crate::metrics::report::AgreementRow;
use crate::metrics::{spearman, OutcomeTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub wm: String,
    pub rows: Vec<AgreementRow>,
    /// Tasks per agent where the world model could not run.
    pub excluded: Vec<usize>,
    /// Rank correlation of agents' WM and Real success rates; `None` with
    /// fewer than two agents or when either side is constant.
    pub spearman: Option<f64>,
}

pub fn surrogate_eval(
    agents: &[&dyn AgentHandle],
    wm: &dyn WorldModel,
    suite: &TaskSuite,
    cfg: &RunConfig,
    exec: &Executor,
) -> SurrogateReport {
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for agent in agents {
        let results = exec.map(suite.tasks(), |spec| {
            let real = run_real(*agent, spec, cfg);
            let wm_run = run_wm(*agent, wm, spec, cfg);
            (spec.task_id().to_string(), real.success, wm_run)
        });
        let (mut ids, mut wm_bits, mut real_bits) = (Vec::new(), Vec::new(), Vec::new());
        let mut dropped = 0;
        for (id, real, wm_run) in results {
            match wm_run {
                Ok(w) => {
                    ids.push(id);
                    wm_bits.push(w.success);
                    real_bits.push(real);
                }
                Err(e) => {
                    tracing::warn!(task = %id, error = %e, "task excluded from surrogate evaluation");
                    dropped += 1;
                }
            }
        }
        let table = OutcomeTable::new(ids, wm_bits, real_bits).expect("aligned by construction");
        rows.push(AgreementRow::from_outcomes(agent.name(), &table));
        excluded.push(dropped);
    }
    let sr_wm: Vec<f64> = rows.iter().map(|r| r.sr_wm).collect();
    let sr_real: Vec<f64> = rows.iter().map(|r| r.sr_real).collect();
    let rho = if rows.len() >= 2 {
        spearman(&sr_wm, &sr_real).ok().flatten()
    } else {
        None
    };
    SurrogateReport {
        wm: wm.name(),
        rows,
        excluded,
        spearman: rho,
    }
}
