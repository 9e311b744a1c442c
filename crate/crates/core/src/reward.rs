//! Likelihood-gap rewards, alternative reward targets and group normalization.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Executor;
use crate::metrics::token_f1;
use crate::model::{Observation, TransitionTuple};
use crate::perturb::page::normalize_price;
use crate::perturb::PageState;
use crate::scorer::{build_agent_context, cached_real_logprob, LogprobCache, ScorerBackend, ScorerError};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("scoring the real state failed: {0}")]
    Real(ScorerError),
    #[error("every candidate failed to score for prompt {prompt_id}")]
    AllFailed { prompt_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Exponential,
    Cauchy,
    Linear,
    NegL1,
    NegL2,
}

impl RewardKind {
    pub const ALL: [RewardKind; 5] = [
        RewardKind::Exponential,
        RewardKind::Cauchy,
        RewardKind::Linear,
        RewardKind::NegL1,
        RewardKind::NegL2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RewardKind::Exponential => "exponential",
            RewardKind::Cauchy => "cauchy",
            RewardKind::Linear => "linear",
            RewardKind::NegL1 => "neg_l1",
            RewardKind::NegL2 => "neg_l2",
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, RewardKind::NegL1 | RewardKind::NegL2)
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardKind {
    type Err = RewardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RewardKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| RewardError::Input(format!("unknown reward mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMode")]
pub struct RewardMode {
    pub kind: RewardKind,
    pub coef: f64,
}

#[derive(Deserialize)]
struct RawMode {
    kind: RewardKind,
    #[serde(default = "one")]
    coef: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawMode> for RewardMode {
    type Error = RewardError;
    fn try_from(r: RawMode) -> Result<Self, Self::Error> {
        RewardMode::new(r.kind, r.coef)
    }
}

impl Default for RewardMode {
    fn default() -> Self {
        Self {
            kind: RewardKind::Exponential,
            coef: 1.0,
        }
    }
}

impl RewardMode {
    pub fn new(kind: RewardKind, coef: f64) -> Result<Self, RewardError> {
        if !(coef.is_finite() && coef > 0.0) {
            return Err(RewardError::Input(format!("coef must be a positive number, got {coef}")));
        }
        Ok(Self { kind, coef })
    }

    /// Value at zero gap.
    pub fn maximum(&self) -> f64 {
        if self.kind.is_bounded() {
            1.0
        } else {
            0.0
        }
    }

    fn apply(&self, delta: f64) -> f64 {
        let d = delta.abs();
        let c = self.coef;
        match self.kind {
            RewardKind::Exponential => (-c * d).exp(),
            RewardKind::Cauchy => 1.0 / (1.0 + c * d),
            RewardKind::Linear => (1.0 - c * d).max(0.0),
            RewardKind::NegL1 => -d,
            RewardKind::NegL2 => -delta * delta,
        }
    }
}

/// Reward for the gap `l_pred - l_real`.
pub fn behr(l_pred: f64, l_real: f64, mode: RewardMode) -> Result<f64, RewardError> {
    if !l_pred.is_finite() || !l_real.is_finite() {
        return Err(RewardError::Input(format!("non-finite log-probability ({l_pred}, {l_real})")));
    }
    Ok(mode.apply(l_pred - l_real))
}

/// `(r - mean) / (std + epsilon)` with population std; zero variance gives zeros.
pub fn group_normalize(rewards: &[f64], epsilon: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / (std + epsilon)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate_index: usize,
    pub l_pred: f64,
    pub delta: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBatch {
    pub prompt_id: String,
    pub l_real: f64,
    pub scored: Vec<ScoredCandidate>,
    /// Candidate indices that failed to score.
    pub dropped: Vec<usize>,
    pub advantages: Vec<f64>,
}

impl RewardBatch {
    pub fn rewards(&self) -> Vec<f64> {
        self.scored.iter().map(|s| s.reward).collect()
    }

    /// True when failures shrank a multi-candidate group below two members;
    /// such groups carry no usable relative signal and are skipped.
    pub fn is_degenerate(&self) -> bool {
        !self.dropped.is_empty() && self.scored.len() < 2
    }

    pub fn records(&self, mode: RewardMode) -> Vec<RewardRecord> {
        self.scored
            .iter()
            .zip(&self.advantages)
            .map(|(s, a)| RewardRecord {
                prompt_id: self.prompt_id.clone(),
                candidate_index: s.candidate_index,
                l_pred: s.l_pred,
                l_real: self.l_real,
                delta: s.delta,
                reward: s.reward,
                advantage: *a,
                mode: mode.kind,
                coef: mode.coef,
            })
            .collect()
    }
}

/// One exported line per scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardRecord {
    pub prompt_id: String,
    pub candidate_index: usize,
    pub l_pred: f64,
    pub l_real: f64,
    pub delta: f64,
    pub reward: f64,
    pub advantage: f64,
    pub mode: RewardKind,
    pub coef: f64,
}

/// Scores every candidate state against the tuple's real next state.
/// `l_real` comes from `cache`; each candidate costs one backend call.
pub fn score_candidates(
    prompt_id: &str,
    tuple: &TransitionTuple,
    candidates: &[Observation],
    backend: &dyn ScorerBackend,
    cache: &LogprobCache,
    mode: RewardMode,
    exec: &Executor,
) -> Result<RewardBatch, RewardError> {
    if candidates.is_empty() {
        return Err(RewardError::Input(format!("prompt {prompt_id} has no candidates")));
    }
    let l_real = cached_real_logprob(tuple, backend, cache).map_err(RewardError::Real)?.value;
    let results = exec.map(candidates, |c| {
        let ctx = build_agent_context(&tuple.history, c, tuple.domain);
        backend.mean_logprob(&ctx, &tuple.expert_next_action)
    });
    let mut scored = Vec::with_capacity(candidates.len());
    let mut dropped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(lp) => {
                let reward = behr(lp.value, l_real, mode)?;
                scored.push(ScoredCandidate {
                    candidate_index: i,
                    l_pred: lp.value,
                    delta: lp.value - l_real,
                    reward,
                });
            }
            Err(e) => {
                tracing::warn!(prompt_id, candidate = i, error = %e, "dropping candidate");
                dropped.push(i);
            }
        }
    }
    if scored.is_empty() {
        return Err(RewardError::AllFailed {
            prompt_id: prompt_id.to_string(),
        });
    }
    let rewards: Vec<f64> = scored.iter().map(|s| s.reward).collect();
    Ok(RewardBatch {
        prompt_id: prompt_id.to_string(),
        l_real,
        advantages: group_normalize(&rewards, DEFAULT_EPSILON),
        scored,
        dropped,
    })
}

/// Token F1 between the candidate and real observation texts.
pub fn surface_f1_reward(candidate: &Observation, real: &Observation) -> f64 {
    token_f1(candidate.text(), real.text())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactrScore {
    pub value: f64,
    pub parse_failed: bool,
}

fn set_f1(pred: &BTreeSet<&str>, gold: &BTreeSet<&str>) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let common = pred.intersection(gold).count() as f64;
    if common == 0.0 {
        return 0.0;
    }
    let p = common / pred.len() as f64;
    let r = common / gold.len() as f64;
    2.0 * p * r / (p + r)
}

fn multiset_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for g in gold {
        *counts.entry(g).or_default() += 1;
    }
    let mut common = 0usize;
    for p in pred {
        if let Some(c) = counts.get_mut(p.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Every `$X.YZ` mention in the text, in normalized form.
fn price_mentions(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || matches!(c, '|' | ',' | ';' | '(' | ')'))
        .filter(|w| w.starts_with('$'))
        .filter_map(|w| normalize_price(w.trim_end_matches(['.', ':'])))
        .collect()
}

/// Mean of item-id set F1, price-mention multiset F1 and page-type equality.
/// Either side failing to parse as a shop page scores 0 with the flag set.
pub fn factr_reward(candidate: &Observation, real: &Observation) -> FactrScore {
    let (Ok(c), Ok(r)) = (PageState::parse(candidate.text()), PageState::parse(real.text())) else {
        return FactrScore {
            value: 0.0,
            parse_failed: true,
        };
    };
    let ids = |p: &PageState| -> BTreeSet<String> { p.items.iter().map(|i| i.item_id.clone()).collect() };
    let (ci, ri) = (ids(&c), ids(&r));
    let f_id = set_f1(
        &ci.iter().map(String::as_str).collect(),
        &ri.iter().map(String::as_str).collect(),
    );
    let f_price = multiset_f1(&price_mentions(candidate.text()), &price_mentions(real.text()));
    let f_type = if c.page_type == r.page_type { 1.0 } else { 0.0 };
    FactrScore {
        value: (f_id + f_price + f_type) / 3.0,
        parse_failed: false,
    }
}
