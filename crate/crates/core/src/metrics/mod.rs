//! Evaluation arithmetic: surface similarity, consistency ratios, agreement.

pub mod report;
pub mod stats;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use stats::{sign_test, spearman, wilson_ci};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("consistency ratio is undefined when the real success rate is 0")]
    UndefinedCr,
    #[error("outcome table columns differ in length ({a} vs {b}) or ids ({ids})")]
    Shape { a: usize, b: usize, ids: usize },
    #[error("duplicate task id {0:?} in outcome table")]
    DuplicateTask(String),
    #[error("invalid input: {0}")]
    Input(String),
}

fn normalize(s: &str) -> String {
    s.replace("\r\n", "\n").replace('\r', "\n").trim().to_string()
}

/// Equality after trimming and normalizing line endings.
pub fn exact_match(pred: &str, gold: &str) -> bool {
    normalize(pred) == normalize(gold)
}

/// Multiset token F1 over lowercased whitespace tokens.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<String> = pred.split_whitespace().map(str::to_lowercase).collect();
    let g: Vec<String> = gold.split_whitespace().map(str::to_lowercase).collect();
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// `sr_w2r / sr_real`, unrounded.
pub fn consistency_ratio(sr_w2r: f64, sr_real: f64) -> Result<f64, MetricsError> {
    if sr_real == 0.0 {
        return Err(MetricsError::UndefinedCr);
    }
    Ok(sr_w2r / sr_real)
}

/// Per-task success flags under two conditions, aligned by task id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub task_ids: Vec<String>,
    pub outcomes_a: Vec<bool>,
    pub outcomes_b: Vec<bool>,
}

impl OutcomeTable {
    pub fn new(task_ids: Vec<String>, outcomes_a: Vec<bool>, outcomes_b: Vec<bool>) -> Result<Self, MetricsError> {
        if task_ids.len() != outcomes_a.len() || outcomes_a.len() != outcomes_b.len() {
            return Err(MetricsError::Shape {
                a: outcomes_a.len(),
                b: outcomes_b.len(),
                ids: task_ids.len(),
            });
        }
        let mut seen = HashSet::new();
        for id in &task_ids {
            if !seen.insert(id) {
                return Err(MetricsError::DuplicateTask(id.clone()));
            }
        }
        Ok(Self {
            task_ids,
            outcomes_a,
            outcomes_b,
        })
    }

    /// Builds a table with generated ids `t0000..` from two bitmaps.
    pub fn from_bitmaps(a: Vec<bool>, b: Vec<bool>) -> Result<Self, MetricsError> {
        let ids = (0..a.len()).map(|i| format!("t{i:04}")).collect();
        Self::new(ids, a, b)
    }

    pub fn len(&self) -> usize {
        self.task_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.task_ids.is_empty()
    }

    pub fn rate_a(&self) -> f64 {
        rate(&self.outcomes_a)
    }

    pub fn rate_b(&self) -> f64 {
        rate(&self.outcomes_b)
    }
}

fn rate(xs: &[bool]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().filter(|x| **x).count() as f64 / xs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseCr {
    /// `None` when no task succeeded under condition a.
    pub cr_pw: Option<f64>,
    pub n_real: usize,
    pub preserved: usize,
}

/// Fraction of a-successful tasks that also succeed under b.
pub fn pairwise_cr(outcomes: &OutcomeTable) -> PairwiseCr {
    let n_real = outcomes.outcomes_a.iter().filter(|x| **x).count();
    let preserved = outcomes
        .outcomes_a
        .iter()
        .zip(&outcomes.outcomes_b)
        .filter(|(a, b)| **a && **b)
        .count();
    PairwiseCr {
        cr_pw: (n_real > 0).then(|| preserved as f64 / n_real as f64),
        n_real,
        preserved,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub agree_rate: f64,
}

/// Confusion counts with a = surrogate (WM) and b = reference (Real).
pub fn agreement(outcomes: &OutcomeTable) -> AgreementSummary {
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (a, b) in outcomes.outcomes_a.iter().zip(&outcomes.outcomes_b) {
        match (a, b) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let total = outcomes.len();
    AgreementSummary {
        tp,
        tn,
        fp,
        fn_,
        agree_rate: if total == 0 { 1.0 } else { (tp + tn) as f64 / total as f64 },
    }
}
