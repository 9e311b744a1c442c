use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use behr_core::envsim::generate::generate;
use behr_core::envsim::{Corruption, CorruptedWm, OracleWm, RemoteWm, TaskSuite, WorldModel};
use behr_core::metrics::report::{AgreementRow, ConsistencyRow, MetricsReport, SignTestRow, DEFAULT_CONFIDENCE};
use behr_core::metrics::{spearman, OutcomeTable};
use behr_core::model::{read_jsonl, write_jsonl, Domain, EpisodeRecord, Observation, Trajectory, TransitionTuple};
use behr_core::openai::OpenAiClient;
use behr_core::perturb::study::toy_corpus;
use behr_core::perturb::{run_perturbation_study, StudyConfig, StudyReport};
use behr_core::pipelines::dataset::build_grpo_dataset;
use behr_core::pipelines::lookahead::LookaheadStats;
use behr_core::pipelines::{
    run_lookahead, run_real, run_suite, AgentHandle, DatasetConfig, LookaheadConfig, Planner, RemoteChatAgent,
    RemotePlanner, RunConfig, ScriptedAgent, ScriptedPlanner,
};
use behr_core::reward::{score_candidates, RewardError, RewardRecord};
use behr_core::scorer::{CountingBackend, LogprobCache, RemoteScorer, ScorerBackend, ScriptedScorer};
use behr_core::Executor;
use serde::{Deserialize, Serialize};

use crate::config::{AgentConfig, BackendKind, ConfigError, HarnessConfig, WmChoice};

/// How a successful command ended. Partial runs exit with code 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    Partial,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Complete => 0,
            Status::Partial => 2,
        }
    }
}

pub fn executor(cfg: &HarnessConfig) -> Executor {
    Executor::with_threads(cfg.threads)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

/// Writes `n` seeded specs as `<task_id>.json`; returns the written paths.
pub fn gen_specs(domain: Domain, n: usize, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    create_out(out)?;
    let mut paths = Vec::with_capacity(n);
    for spec in generate(domain, n, seed) {
        let path = out.join(format!("{}.json", spec.task_id()));
        let mut text = serde_json::to_string_pretty(&spec)?;
        text.push('\n');
        write_file(&path, &text)?;
        paths.push(path);
    }
    tracing::info!(n, dir = %out.display(), "wrote specs");
    Ok(paths)
}

pub fn load_suite(cfg: &HarnessConfig) -> Result<TaskSuite> {
    let suite = match &cfg.tasks.specs_dir {
        Some(dir) => TaskSuite::load_dir(dir)?,
        None => TaskSuite::new(generate(cfg.tasks.domain, cfg.tasks.count, cfg.seed))?,
    };
    if cfg.tasks.ids.is_empty() {
        return Ok(suite);
    }
    let mut picked = Vec::with_capacity(cfg.tasks.ids.len());
    for id in &cfg.tasks.ids {
        let spec = suite
            .get(id)
            .ok_or_else(|| ConfigError::invalid("tasks.ids", format!("no task {id:?} in the task set")))?;
        picked.push(spec.clone());
    }
    Ok(TaskSuite::new(picked)?)
}

/// Domain of the suite, falling back to the configured one when it is empty.
fn suite_domain(cfg: &HarnessConfig, suite: &TaskSuite) -> Domain {
    suite.tasks().first().map_or(cfg.tasks.domain, |t| t.domain())
}

pub fn build_wm(cfg: &HarnessConfig, suite: Arc<TaskSuite>, domain: Domain) -> Result<Box<dyn WorldModel>> {
    Ok(match cfg.wm {
        WmChoice::Oracle => Box::new(OracleWm::new(suite)),
        WmChoice::Corrupted(kind) => {
            if !suite.is_empty() && !kind.applies_to(domain) {
                return Err(ConfigError::invalid("wm", format!("{kind} does not apply to the {domain} domain")).into());
            }
            let corruption = Corruption {
                kind,
                rate: cfg.corruption.rate,
                k: cfg.corruption.k,
                seed: cfg.seed,
            };
            Box::new(CorruptedWm::new(suite, corruption))
        }
        WmChoice::Remote => {
            let ep = cfg.wm_endpoint.clone().ok_or_else(|| ConfigError::invalid("wm_endpoint", "missing"))?;
            Box::new(RemoteWm::new(OpenAiClient::new(ep)?, domain))
        }
    })
}

pub fn build_scorer(cfg: &HarnessConfig) -> Result<Arc<dyn ScorerBackend>> {
    Ok(match cfg.scorer.kind {
        BackendKind::Scripted => Arc::new(ScriptedScorer::new(cfg.scorer.scripted)?),
        BackendKind::Remote => {
            let remote = cfg.scorer.remote.clone().ok_or_else(|| ConfigError::invalid("scorer.remote", "missing"))?;
            Arc::new(RemoteScorer::new(remote)?)
        }
    })
}

fn build_agent(a: &AgentConfig, seed: u64) -> Result<Box<dyn AgentHandle>> {
    Ok(match a.kind {
        BackendKind::Scripted => Box::new(ScriptedAgent::new(a.skill, seed)),
        BackendKind::Remote => {
            let ep = a.endpoint.clone().ok_or_else(|| ConfigError::invalid("agents", "missing endpoint"))?;
            Box::new(RemoteChatAgent::new(OpenAiClient::new(ep)?))
        }
    })
}

/// Per-agent outcome bits as written to `outcomes.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcomes {
    pub agent: String,
    pub wm: String,
    /// Real in column a, W2R in column b.
    pub real_vs_w2r: OutcomeTable,
    pub wm_success: Vec<bool>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutput {
    pub report: MetricsReport,
    pub outcomes: Vec<AgentOutcomes>,
    pub spearman: Option<f64>,
}

/// Real, WM and W2R runs for every configured agent, plus the metric report.
pub fn evaluate(cfg: &HarnessConfig) -> Result<(EvaluateOutput, Status)> {
    create_out(&cfg.out)?;
    let suite = load_suite(cfg)?.into_shared();
    let domain = suite_domain(cfg, &suite);
    let exec = executor(cfg);
    let run_cfg = RunConfig::new(cfg.max_steps)?;
    let wm = build_wm(cfg, suite.clone(), domain)?;
    let mut report = MetricsReport::default();
    let mut outcomes = Vec::new();
    let mut episodes: Vec<EpisodeRecord> = Vec::new();

    if suite.is_empty() {
        let msg = "task set is empty; nothing was run".to_string();
        tracing::warn!("{msg}");
        report.warnings.push(msg);
    } else {
        for a in cfg.agent_configs() {
            let agent = build_agent(&a, cfg.seed)?;
            let run = run_suite(agent.as_ref(), wm.as_ref(), &suite, &run_cfg, &exec);
            if !run.skipped.is_empty() {
                let msg = format!(
                    "{}: {} of {} tasks skipped because {} cannot run them",
                    a.name,
                    run.skipped.len(),
                    suite.len(),
                    run.wm
                );
                tracing::warn!("{msg}");
                report.warnings.push(msg);
            }
            let label = format!("{} / {}", a.name, run.wm);
            let real_vs_w2r = OutcomeTable::new(run.task_ids.clone(), run.real_success(), run.w2r_success())?;
            let wm_vs_real = OutcomeTable::new(run.task_ids.clone(), run.wm_success(), run.real_success())?;
            report.consistency.push(ConsistencyRow::from_outcomes(
                &label,
                &real_vs_w2r,
                &run.wm_success(),
                DEFAULT_CONFIDENCE,
            )?);
            report.agreement.push(AgreementRow::from_outcomes(&a.name, &wm_vs_real));
            episodes.extend(run.episodes().cloned());
            outcomes.push(AgentOutcomes {
                agent: a.name.clone(),
                wm: run.wm.clone(),
                real_vs_w2r,
                wm_success: run.wm_success(),
                skipped: run.skipped.clone(),
            });
        }
        for (x, y) in &cfg.comparisons {
            let bits = |name: &String| -> BTreeMap<String, f64> {
                outcomes
                    .iter()
                    .find(|o| &o.agent == name)
                    .map(|o| {
                        o.real_vs_w2r
                            .task_ids
                            .iter()
                            .cloned()
                            .zip(o.real_vs_w2r.outcomes_b.iter().map(|b| f64::from(u8::from(*b))))
                            .collect()
                    })
                    .unwrap_or_default()
            };
            let (bx, by) = (bits(x), bits(y));
            // only tasks both agents ran are paired
            let (va, vb): (Vec<f64>, Vec<f64>) =
                bx.iter().filter_map(|(id, v)| by.get(id).map(|w| (*v, *w))).unzip();
            report.sign_tests.push(SignTestRow::from_pairs(format!("{x} vs {y} (W2R)"), &va, &vb));
        }
    }

    let sr_wm: Vec<f64> = report.agreement.iter().map(|r| r.sr_wm).collect();
    let sr_real: Vec<f64> = report.agreement.iter().map(|r| r.sr_real).collect();
    let rho = if sr_wm.len() >= 2 {
        spearman(&sr_wm, &sr_real).ok().flatten()
    } else {
        None
    };

    write_jsonl(&cfg.out.join("episodes.jsonl"), &episodes)?;
    write_json(&cfg.out.join("outcomes.json"), &outcomes)?;
    write_file(&cfg.out.join("report.json"), &(report.to_json() + "\n"))?;
    let mut md = report.to_markdown();
    if let Some(r) = rho {
        md.push_str(&format!("Spearman rank correlation of WM and Real success rates: {r:.3}\n"));
    }
    write_file(&cfg.out.join("report.md"), &md)?;
    write_file(&cfg.out.join("consistency.csv"), &report.consistency_csv())?;
    write_file(&cfg.out.join("agreement.csv"), &report.agreement_csv())?;
    Ok((
        EvaluateOutput {
            report,
            outcomes,
            spearman: rho,
        },
        Status::Complete,
    ))
}

/// Runs the perturbation study and writes `study.{json,md,csv}`.
pub fn perturb_study(cfg: &HarnessConfig) -> Result<(StudyReport, Status)> {
    create_out(&cfg.out)?;
    let corpus: Vec<TransitionTuple> = match &cfg.perturb.corpus {
        Some(p) => read_jsonl(p)?,
        None => toy_corpus(cfg.perturb.corpus_size, cfg.seed),
    };
    let scorer = build_scorer(cfg)?;
    let study_cfg = StudyConfig {
        seed: cfg.seed,
        mode: cfg.reward,
        noise_rate: cfg.perturb.noise_rate,
    };
    let report = run_perturbation_study(&corpus, scorer.as_ref(), &study_cfg, &executor(cfg));
    write_json(&cfg.out.join("study.json"), &report)?;
    write_file(&cfg.out.join("study.md"), &report.to_markdown())?;
    write_file(&cfg.out.join("study.csv"), &report.to_csv())?;
    let failed: usize = report.rows.iter().map(|r| r.failed).sum();
    let status = if failed > 0 {
        tracing::warn!(failed, "some perturbed pages could not be scored");
        Status::Partial
    } else {
        Status::Complete
    };
    Ok((report, status))
}

/// One line of the tuples file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptLine {
    pub prompt_id: String,
    pub tuple: TransitionTuple,
}

/// One line of the candidates file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateLine {
    pub prompt_id: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub prompts: usize,
    pub candidates: usize,
    /// Scorer calls actually made.
    pub backend_calls: usize,
    /// Calls an uncached implementation would make (two per candidate).
    pub uncached_calls: usize,
    pub dropped_candidates: usize,
    pub degenerate_groups: Vec<String>,
    pub failed_prompts: Vec<String>,
}

fn input_err(path: &Path, line: usize, reason: impl Into<String>) -> anyhow::Error {
    ConfigError::Input {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
    .into()
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|e| input_err(path, i + 1, e.to_string()))?;
        out.push((i + 1, row));
    }
    Ok(out)
}

/// Pairs each tuple with its candidate group, checking ids line by line.
pub fn load_batch(tuples: &Path, candidates: &Path) -> Result<Vec<(PromptLine, Vec<Observation>)>> {
    let prompts: Vec<(usize, PromptLine)> = read_lines(tuples)?;
    let mut index = BTreeMap::new();
    for (line, p) in &prompts {
        if index.insert(p.prompt_id.clone(), *line).is_some() {
            return Err(input_err(tuples, *line, format!("duplicate prompt_id {:?}", p.prompt_id)));
        }
    }
    let mut groups: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    for (line, c) in read_lines::<CandidateLine>(candidates)? {
        if !index.contains_key(&c.prompt_id) {
            return Err(input_err(candidates, line, format!("unknown prompt_id {:?}", c.prompt_id)));
        }
        if groups.contains_key(&c.prompt_id) {
            return Err(input_err(candidates, line, format!("duplicate prompt_id {:?}", c.prompt_id)));
        }
        let obs = c
            .candidates
            .into_iter()
            .map(Observation::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| input_err(candidates, line, e.to_string()))?;
        if obs.is_empty() {
            return Err(input_err(candidates, line, "empty candidate list"));
        }
        groups.insert(c.prompt_id, obs);
    }
    prompts
        .into_iter()
        .map(|(line, p)| match groups.remove(&p.prompt_id) {
            Some(c) => Ok((p, c)),
            None => Err(input_err(tuples, line, format!("no candidates for prompt_id {:?}", p.prompt_id))),
        })
        .collect()
}

/// Scores candidate groups with one shared cache; writes `rewards.jsonl` and
/// `batch_summary.json`.
pub fn reward_batch(cfg: &HarnessConfig, tuples: &Path, candidates: &Path) -> Result<(BatchSummary, Status)> {
    let batch = load_batch(tuples, candidates)?;
    create_out(&cfg.out)?;
    let backend = CountingBackend::new(build_scorer(cfg)?);
    let cache = LogprobCache::new();
    let exec = executor(cfg);
    let inner = Executor::sequential();
    let results = exec.map(&batch, |(p, cands)| {
        score_candidates(&p.prompt_id, &p.tuple, cands, &backend, &cache, cfg.reward, &inner)
    });
    let mut records: Vec<RewardRecord> = Vec::new();
    let mut summary = BatchSummary {
        prompts: batch.len(),
        candidates: batch.iter().map(|b| b.1.len()).sum(),
        backend_calls: 0,
        uncached_calls: 0,
        dropped_candidates: 0,
        degenerate_groups: Vec::new(),
        failed_prompts: Vec::new(),
    };
    summary.uncached_calls = 2 * summary.candidates;
    for ((p, _), r) in batch.iter().zip(results) {
        match r {
            Ok(b) => {
                summary.dropped_candidates += b.dropped.len();
                if b.is_degenerate() {
                    summary.degenerate_groups.push(p.prompt_id.clone());
                }
                records.extend(b.records(cfg.reward));
            }
            Err(e @ (RewardError::AllFailed { .. } | RewardError::Real(_))) => {
                tracing::warn!(prompt = %p.prompt_id, error = %e, "prompt dropped");
                summary.failed_prompts.push(p.prompt_id.clone());
            }
            Err(e) => return Err(e.into()),
        }
    }
    summary.backend_calls = backend.calls();
    write_jsonl(&cfg.out.join("rewards.jsonl"), &records)?;
    write_json(&cfg.out.join("batch_summary.json"), &summary)?;
    tracing::info!(
        calls = summary.backend_calls,
        uncached = summary.uncached_calls,
        "reward batch scored"
    );
    let partial = summary.dropped_candidates > 0 || !summary.failed_prompts.is_empty();
    Ok((summary, if partial { Status::Partial } else { Status::Complete }))
}

/// Builds training records; trajectories come from the config file or from
/// expert runs over the task set. The configured world model is the baseline.
pub fn build_dataset(cfg: &HarnessConfig) -> Result<(behr_core::pipelines::DatasetOutput, Status)> {
    create_out(&cfg.out)?;
    let suite = load_suite(cfg)?.into_shared();
    let domain = suite_domain(cfg, &suite);
    let exec = executor(cfg);
    let trajectories: Vec<Trajectory> = match &cfg.dataset.trajectories {
        Some(p) => read_jsonl(p)?,
        None => {
            let expert = ScriptedAgent::new(1.0, cfg.seed);
            let run_cfg = RunConfig::new(cfg.max_steps)?;
            exec.map(suite.tasks(), |spec| run_real(&expert, spec, &run_cfg).to_trajectory())
        }
    };
    let baseline = build_wm(cfg, suite, domain)?;
    let dcfg = DatasetConfig {
        domain,
        f1_threshold: cfg.dataset.f1_threshold,
        budget: cfg.dataset.budget,
        seed: cfg.seed,
    };
    let mut out = build_grpo_dataset(&trajectories, &dcfg, baseline.as_ref(), &exec);
    if domain == Domain::Shop && dcfg.budget.is_some() {
        out.warnings
            .push("budget only applies to adventure; shop keeps every tuple under the F1 threshold".into());
    }
    write_jsonl(&cfg.out.join("dataset.jsonl"), &out.records)?;
    write_json(&cfg.out.join("allocations.json"), &out.allocations)?;
    Ok((out, Status::Complete))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadSummary {
    pub planner: String,
    pub wm: String,
    pub k: usize,
    pub tasks: usize,
    pub baseline_success: usize,
    pub lookahead_success: usize,
    pub steps: usize,
    pub calls: usize,
    pub fallbacks: usize,
    pub irregular_steps: usize,
}

/// Compares the planner acting alone with lookahead through the world model.
pub fn lookahead(cfg: &HarnessConfig) -> Result<(LookaheadSummary, Status)> {
    create_out(&cfg.out)?;
    let suite = load_suite(cfg)?.into_shared();
    let domain = suite_domain(cfg, &suite);
    let exec = executor(cfg);
    let run_cfg = RunConfig::new(cfg.max_steps)?;
    let wm = build_wm(cfg, suite.clone(), domain)?;
    let la_cfg = LookaheadConfig {
        k: cfg.lookahead.k,
        preview_chars: cfg.lookahead.preview_chars,
    };
    let scripted = ScriptedAgent::new(cfg.lookahead.planner_skill, cfg.seed);
    let (planner, base_agent): (Box<dyn Planner>, Box<dyn AgentHandle>) = match &cfg.lookahead.endpoint {
        Some(ep) => (
            Box::new(RemotePlanner::new(OpenAiClient::new(ep.clone())?)),
            Box::new(RemoteChatAgent::new(OpenAiClient::new(ep.clone())?)),
        ),
        None => (Box::new(ScriptedPlanner::new(scripted)), Box::new(scripted)),
    };
    let per_task = exec.map(suite.tasks(), |spec| {
        let base = run_real(base_agent.as_ref(), spec, &run_cfg);
        let (la, stats) = run_lookahead(planner.as_ref(), wm.as_ref(), spec, &run_cfg, &la_cfg);
        (base, la, stats)
    });
    let mut total = LookaheadStats::default();
    let mut episodes = Vec::with_capacity(per_task.len());
    let (mut base_ok, mut la_ok) = (0, 0);
    for (base, la, s) in per_task {
        base_ok += usize::from(base.success);
        la_ok += usize::from(la.success);
        total.steps += s.steps;
        total.calls += s.calls;
        total.fallbacks += s.fallbacks;
        total.irregular_steps += s.irregular_steps;
        episodes.push(la);
    }
    let summary = LookaheadSummary {
        planner: planner.name(),
        wm: wm.name(),
        k: la_cfg.k,
        tasks: suite.len(),
        baseline_success: base_ok,
        lookahead_success: la_ok,
        steps: total.steps,
        calls: total.calls,
        fallbacks: total.fallbacks,
        irregular_steps: total.irregular_steps,
    };
    write_jsonl(&cfg.out.join("episodes.jsonl"), &episodes)?;
    write_json(&cfg.out.join("lookahead.json"), &summary)?;
    Ok((summary, Status::Complete))
}
