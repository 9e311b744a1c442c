//! Runs every perturbation over a corpus of result pages and scores the
//! perturbed pages with BehR and the surface metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{apply_with, PageState, PageType, PerturbOptions, PerturbationKind};
use crate::envsim::generate::shop_spec;
use crate::envsim::{Environment, ShopEnv};
use crate::exec::Executor;
use crate::metrics::{exact_match, token_f1};
use crate::model::{Action, Domain, Observation, TrajectoryPrefix, TransitionTuple};
use crate::reward::{behr, factr_reward, RewardMode};
use crate::scorer::{build_agent_context, cached_real_logprob, LogprobCache, ScorerBackend};
use crate::util::seeded_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: RewardMode,
    #[serde(default = "default_noise")]
    pub noise_rate: f64,
}

fn default_noise() -> f64 {
    super::DEFAULT_NOISE_RATE
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: RewardMode::default(),
            noise_rate: default_noise(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub kind: PerturbationKind,
    pub severity: String,
    /// Pages the perturbation was applied to and scored.
    pub n: usize,
    /// Pages where the perturbation or scoring failed.
    pub failed: usize,
    pub behr: f64,
    pub token_f1: f64,
    pub exact_match: f64,
    pub factr: f64,
}

/// Whether a metric scores drop-irrelevant strictly above drop-target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankVerdict {
    pub metric: String,
    pub drop_irrelevant: f64,
    pub drop_target: f64,
    pub ranks_correctly: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scorer: String,
    pub mode: RewardMode,
    pub corpus_size: usize,
    /// Tuples without a parseable page or a target item.
    pub excluded: usize,
    pub rows: Vec<StudyRow>,
    pub verdicts: Vec<RankVerdict>,
}

impl StudyReport {
    pub fn row(&self, kind: PerturbationKind) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    pub fn verdict(&self, metric: &str) -> Option<&RankVerdict> {
        self.verdicts.iter().find(|v| v.metric == metric)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "Scorer: {} | mode: {} (coef {}) | pages: {} | excluded: {}\n",
            self.scorer, self.mode.kind, self.mode.coef, self.corpus_size, self.excluded
        );
        s.push_str("| Perturbation | Severity | N | BehR | Token F1 | EM | FactR |\n");
        s.push_str("|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.3} | {:.3} | {:.1}% | {:.3} |",
                r.kind,
                r.severity,
                r.n,
                r.behr,
                r.token_f1,
                100.0 * r.exact_match,
                r.factr
            );
        }
        s.push_str("\n| Metric | drop_irrelevant | drop_target | DI > DT |\n|---|---|---|---|\n");
        for v in &self.verdicts {
            let _ = writeln!(
                s,
                "| {} | {:.3} | {:.3} | {} |",
                v.metric,
                v.drop_irrelevant,
                v.drop_target,
                if v.ranks_correctly { "yes" } else { "no" }
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,severity,n,failed,behr,token_f1,exact_match,factr,excluded\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.kind, r.severity, r.n, r.failed, r.behr, r.token_f1, r.exact_match, r.factr, self.excluded
            );
        }
        s
    }
}

/// A results page with its target, plus the tuple it came from.
struct StudyPage<'a> {
    tuple: &'a TransitionTuple,
    page: PageState,
}

fn study_page(tuple: &TransitionTuple) -> Option<PageState> {
    let page = PageState::parse(tuple.real_next_state.text())
        .ok()?
        .with_target_from_action(tuple.expert_next_action.as_str());
    page.target_item_id.as_ref()?;
    Some(page)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

struct PageScores {
    behr: f64,
    f1: f64,
    em: f64,
    factr: f64,
}

type RowMetric = fn(&StudyRow) -> f64;

pub fn run_perturbation_study(
    corpus: &[TransitionTuple],
    backend: &dyn ScorerBackend,
    cfg: &StudyConfig,
    exec: &Executor,
) -> StudyReport {
    let mut pages = Vec::new();
    let mut excluded = 0;
    for t in corpus {
        match study_page(t) {
            Some(page) => pages.push(StudyPage { tuple: t, page }),
            None => excluded += 1,
        }
    }
    if excluded > 0 {
        tracing::warn!(excluded, "tuples without a parseable page or target were excluded");
    }
    let all_pages: Vec<PageState> = pages.iter().map(|p| p.page.clone()).collect();
    let cache = LogprobCache::new();
    let opts = PerturbOptions {
        noise_rate: cfg.noise_rate,
    };

    let mut rows = Vec::new();
    for kind in PerturbationKind::ALL {
        let indexed: Vec<(usize, &StudyPage)> = pages.iter().enumerate().collect();
        let results = exec.map(&indexed, |(i, sp)| -> Option<PageScores> {
            let seed = seeded_hash(cfg.seed, &[&i.to_string()]);
            let corpus_wo: Vec<PageState> = all_pages
                .iter()
                .enumerate()
                .filter(|(j, _)| j != i)
                .map(|(_, p)| p.clone())
                .collect();
            let perturbed = match apply_with(&sp.page, kind, seed, &corpus_wo, opts) {
                Ok(p) => p,
                Err(e) => {
                    tracing::debug!(page = i, error = %e, "perturbation skipped");
                    return None;
                }
            };
            let cand = Observation::new(perturbed.render()).ok()?;
            let real = &sp.tuple.real_next_state;
            let l_real = cached_real_logprob(sp.tuple, backend, &cache).ok()?.value;
            let ctx = build_agent_context(&sp.tuple.history, &cand, sp.tuple.domain);
            let l_pred = backend.mean_logprob(&ctx, &sp.tuple.expert_next_action).ok()?.value;
            Some(PageScores {
                behr: behr(l_pred, l_real, cfg.mode).ok()?,
                f1: token_f1(cand.text(), real.text()),
                em: if exact_match(cand.text(), real.text()) { 1.0 } else { 0.0 },
                factr: factr_reward(&cand, real).value,
            })
        });
        let failed = results.iter().filter(|r| r.is_none()).count();
        let ok: Vec<PageScores> = results.into_iter().flatten().collect();
        let col = |f: fn(&PageScores) -> f64| mean(&ok.iter().map(f).collect::<Vec<_>>());
        rows.push(StudyRow {
            kind,
            severity: kind.severity().to_string(),
            n: ok.len(),
            failed,
            behr: col(|s| s.behr),
            token_f1: col(|s| s.f1),
            exact_match: col(|s| s.em),
            factr: col(|s| s.factr),
        });
    }

    let di = rows.iter().find(|r| r.kind == PerturbationKind::DropIrrelevant);
    let dt = rows.iter().find(|r| r.kind == PerturbationKind::DropTarget);
    let mut verdicts = Vec::new();
    if let (Some(di), Some(dt)) = (di, dt) {
        let metrics: [(&str, RowMetric); 4] = [
            ("behr", |r| r.behr),
            ("token_f1", |r| r.token_f1),
            ("exact_match", |r| r.exact_match),
            ("factr", |r| r.factr),
        ];
        for (name, f) in metrics {
            verdicts.push(RankVerdict {
                metric: name.to_string(),
                drop_irrelevant: f(di),
                drop_target: f(dt),
                ranks_correctly: f(di) > f(dt),
            });
        }
    }

    StudyReport {
        scorer: backend.id(),
        mode: cfg.mode,
        corpus_size: corpus.len(),
        excluded,
        rows,
        verdicts,
    }
}

/// Tuples at the first results page of `n` generated shop tasks: the history
/// is the landing page plus the search, the real next state is the results
/// page and the expert's next action opens the target.
pub fn toy_corpus(n: usize, seed: u64) -> Vec<TransitionTuple> {
    (0..n)
        .filter_map(|i| {
            let spec = shop_spec(seed, i);
            let script = spec.optimal_script();
            let task_id = spec.task_id.clone();
            let mut env = ShopEnv::new(spec).ok()?;
            let s0 = env.reset(&task_id).ok()?;
            let search = script.first()?.clone();
            let s1 = env.step(&search).ok()?.obs;
            let page = PageState::parse(s1.text()).ok()?;
            if page.page_type != PageType::SearchResults {
                return None;
            }
            let click: Action = script.get(1)?.clone();
            Some(TransitionTuple {
                history: TrajectoryPrefix::new(s0, vec![], search),
                real_next_state: s1,
                expert_next_action: click,
                domain: Domain::Shop,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::ScriptedScorer;

    #[test]
    fn toy_corpus_has_targets() {
        let c = toy_corpus(10, 3);
        assert_eq!(c.len(), 10);
        for t in &c {
            let p = study_page(t).expect("target on page");
            assert!(p.items.len() >= 4);
        }
    }

    #[test]
    fn unusable_tuples_are_counted() {
        let mut c = toy_corpus(5, 1);
        c[0].expert_next_action = Action::new("click[back to search]").unwrap();
        let r = run_perturbation_study(&c, &ScriptedScorer::default(), &StudyConfig::default(), &Executor::sequential());
        assert_eq!(r.excluded, 1);
        assert_eq!(r.rows.len(), 7);
        assert_eq!(r.row(PerturbationKind::Oracle).unwrap().n, 4);
    }
}
