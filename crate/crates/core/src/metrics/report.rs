//! Metric report rows and their JSON, CSV and markdown renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{agreement, consistency_ratio, pairwise_cr, sign_test, wilson_ci, AgreementSummary, MetricsError, OutcomeTable};

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Real / WM / W2R success rates with CR and CR_pw for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub label: String,
    pub n_tasks: usize,
    pub sr_real: f64,
    pub sr_wm: f64,
    pub sr_w2r: f64,
    /// `None` when no task succeeded in the real environment.
    pub cr: Option<f64>,
    pub cr_pw: Option<f64>,
    pub n_real: usize,
    pub preserved: usize,
    /// Wilson interval on `preserved / n_real`.
    pub cr_pw_ci: Option<(f64, f64)>,
    /// Externally supplied metrics (for example similarity scores computed elsewhere).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl ConsistencyRow {
    /// `real`/`w2r` and `wm` are per-task success bits in the same task order.
    pub fn from_outcomes(
        label: impl Into<String>,
        real_vs_w2r: &OutcomeTable,
        wm: &[bool],
        confidence: f64,
    ) -> Result<Self, MetricsError> {
        if wm.len() != real_vs_w2r.len() {
            return Err(MetricsError::Shape {
                a: real_vs_w2r.len(),
                b: wm.len(),
                ids: real_vs_w2r.len(),
            });
        }
        let pw = pairwise_cr(real_vs_w2r);
        let sr_real = real_vs_w2r.rate_a();
        let sr_w2r = real_vs_w2r.rate_b();
        let sr_wm = if wm.is_empty() {
            0.0
        } else {
            wm.iter().filter(|x| **x).count() as f64 / wm.len() as f64
        };
        let cr_pw_ci = if pw.n_real > 0 {
            Some(wilson_ci(pw.preserved as u64, pw.n_real as u64, confidence)?)
        } else {
            None
        };
        Ok(Self {
            label: label.into(),
            n_tasks: real_vs_w2r.len(),
            sr_real,
            sr_wm,
            sr_w2r,
            cr: consistency_ratio(sr_w2r, sr_real).ok(),
            cr_pw: pw.cr_pw,
            n_real: pw.n_real,
            preserved: pw.preserved,
            cr_pw_ci,
            extra: BTreeMap::new(),
        })
    }
}

/// WM-vs-Real agreement for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub label: String,
    pub sr_wm: f64,
    pub sr_real: f64,
    #[serde(flatten)]
    pub summary: AgreementSummary,
}

impl AgreementRow {
    /// `wm_vs_real` has WM outcomes in column a and Real in column b.
    pub fn from_outcomes(label: impl Into<String>, wm_vs_real: &OutcomeTable) -> Self {
        Self {
            label: label.into(),
            sr_wm: wm_vs_real.rate_a(),
            sr_real: wm_vs_real.rate_b(),
            summary: agreement(wm_vs_real),
        }
    }
}

/// Paired comparison of two configurations across matched rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTestRow {
    pub comparison: String,
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    /// `None` when every pair tied.
    pub p_value: Option<f64>,
}

impl SignTestRow {
    /// Counts rows where `a` beats `b` and vice versa, dropping ties.
    pub fn from_pairs(comparison: impl Into<String>, a: &[f64], b: &[f64]) -> Self {
        let (mut wins, mut losses, mut ties) = (0, 0, 0);
        for (x, y) in a.iter().zip(b) {
            match x.partial_cmp(y) {
                Some(std::cmp::Ordering::Greater) => wins += 1,
                Some(std::cmp::Ordering::Less) => losses += 1,
                _ => ties += 1,
            }
        }
        Self {
            comparison: comparison.into(),
            wins,
            losses,
            ties,
            p_value: sign_test(wins, losses).ok(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub consistency: Vec<ConsistencyRow>,
    pub agreement: Vec<AgreementRow>,
    pub sign_tests: Vec<SignTestRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

fn opt_csv(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    /// One CSV line per consistency row; extra columns are the union of all rows' keys.
    pub fn consistency_csv(&self) -> String {
        let extra_keys: Vec<&String> = {
            let mut k: Vec<&String> = self.consistency.iter().flat_map(|r| r.extra.keys()).collect();
            k.sort();
            k.dedup();
            k
        };
        let mut s = String::from("label,n_tasks,sr_real,sr_wm,sr_w2r,cr,cr_pw,n_real,preserved,ci_lo,ci_hi");
        for k in &extra_keys {
            s.push(',');
            s.push_str(k);
        }
        s.push('\n');
        for r in &self.consistency {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.label,
                r.n_tasks,
                r.sr_real,
                r.sr_wm,
                r.sr_w2r,
                opt_csv(r.cr),
                opt_csv(r.cr_pw),
                r.n_real,
                r.preserved,
                opt_csv(r.cr_pw_ci.map(|c| c.0)),
                opt_csv(r.cr_pw_ci.map(|c| c.1)),
            );
            for k in &extra_keys {
                s.push(',');
                s.push_str(&opt_csv(r.extra.get(*k).copied()));
            }
            s.push('\n');
        }
        s
    }

    pub fn agreement_csv(&self) -> String {
        let mut s = String::from("label,sr_wm,sr_real,tp,tn,fp,fn,agree\n");
        for r in &self.agreement {
            let a = &r.summary;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.label, r.sr_wm, r.sr_real, a.tp, a.tn, a.fp, a.fn_, a.agree_rate
            );
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        if !self.consistency.is_empty() {
            s.push_str("## Consistency\n\n| Config | Tasks | Real | WM | W2R | CR | CR_pw | 95% CI |\n");
            s.push_str("|---|---|---|---|---|---|---|---|\n");
            for r in &self.consistency {
                let ci = r
                    .cr_pw_ci
                    .map_or_else(|| "n/a".to_string(), |(lo, hi)| format!("[{lo:.3}, {hi:.3}]"));
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.1} | {:.1} | {:.1} | {} | {} ({}/{}) | {} |",
                    r.label,
                    r.n_tasks,
                    100.0 * r.sr_real,
                    100.0 * r.sr_wm,
                    100.0 * r.sr_w2r,
                    opt(r.cr, 3),
                    opt(r.cr_pw, 3),
                    r.preserved,
                    r.n_real,
                    ci
                );
            }
            s.push('\n');
        }
        if !self.agreement.is_empty() {
            s.push_str("## Agreement (WM vs Real)\n\n| Agent | SR WM | SR Real | TP | TN | FP | FN | Agree |\n");
            s.push_str("|---|---|---|---|---|---|---|---|\n");
            for r in &self.agreement {
                let a = &r.summary;
                let _ = writeln!(
                    s,
                    "| {} | {:.1} | {:.1} | {} | {} | {} | {} | {:.1}% |",
                    r.label,
                    100.0 * r.sr_wm,
                    100.0 * r.sr_real,
                    a.tp,
                    a.tn,
                    a.fp,
                    a.fn_,
                    100.0 * a.agree_rate
                );
            }
            s.push('\n');
        }
        if !self.sign_tests.is_empty() {
            s.push_str("## Sign tests\n\n| Comparison | Wins | Losses | Ties | p |\n|---|---|---|---|---|\n");
            for t in &self.sign_tests {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    t.comparison,
                    t.wins,
                    t.losses,
                    t.ties,
                    opt(t.p_value, 6)
                );
            }
            s.push('\n');
        }
        for w in &self.warnings {
            let _ = writeln!(s, "> warning: {w}");
        }
        s
    }
}

/// Default-confidence convenience for [`ConsistencyRow::from_outcomes`].
pub fn consistency_row(label: &str, real_vs_w2r: &OutcomeTable, wm: &[bool]) -> Result<ConsistencyRow, MetricsError> {
    ConsistencyRow::from_outcomes(label, real_vs_w2r, wm, DEFAULT_CONFIDENCE)
}
