//! Training-data construction: pick the transitions a baseline world model
//! gets wrong and export them as chat-format prompt records.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envsim::{RemoteWm, WorldModel};
use crate::exec::Executor;
use crate::metrics::token_f1;
use crate::model::{Domain, Trajectory, TransitionTuple};
use crate::openai::ChatMessage;

pub const DEFAULT_F1_THRESHOLD: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub domain: Domain,
    #[serde(default = "default_threshold")]
    pub f1_threshold: f64,
    /// Adventure only: total tuples to sample across action types.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_threshold() -> f64 {
    DEFAULT_F1_THRESHOLD
}

impl DatasetConfig {
    pub fn new(domain: Domain) -> Self {
        Self {
            domain,
            f1_threshold: DEFAULT_F1_THRESHOLD,
            budget: None,
            seed: 0,
        }
    }
}

/// A transition with the baseline world model's F1 on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTuple {
    pub task_id: String,
    pub tuple: TransitionTuple,
    pub baseline_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModelField {
    pub ground_truth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraInfo {
    pub expert_action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrpoRecord {
    /// World-model conversation ending with the action to simulate.
    pub prompt: Vec<ChatMessage>,
    pub reward_model: RewardModelField,
    pub extra_info: ExtraInfo,
}

impl GrpoRecord {
    pub fn from_tuple(t: &TransitionTuple) -> Self {
        Self {
            prompt: RemoteWm::messages(&t.history),
            reward_model: RewardModelField {
                ground_truth: t.real_next_state.text().to_string(),
            },
            extra_info: ExtraInfo {
                expert_action: t.expert_next_action.as_str().to_string(),
            },
        }
    }
}

/// Per-action-type allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub action_type: String,
    pub pool: usize,
    pub mean_f1: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOutput {
    pub records: Vec<GrpoRecord>,
    pub allocations: Vec<Allocation>,
    pub warnings: Vec<String>,
}

/// Well-formed shop commands only: `search[..]` with a query or `click[..]`.
pub fn is_valid_shop_action(a: &str) -> bool {
    let inner = |p: &str| a.strip_prefix(p).and_then(|r| r.strip_suffix(']')).map(str::trim);
    matches!(inner("search["), Some(q) if !q.is_empty()) || matches!(inner("click["), Some(q) if !q.is_empty())
}

/// Shop filter: tuples the baseline gets wrong (`F1 < threshold`) with a valid expert action.
pub fn select_shop(scored: &[ScoredTuple], threshold: f64) -> Vec<&ScoredTuple> {
    scored
        .iter()
        .filter(|s| s.baseline_f1 < threshold && is_valid_shop_action(s.tuple.expert_next_action.as_str()))
        .collect()
}

/// Splits `budget` over pools in proportion to `sqrt(pool * (1 - mean_f1))`,
/// rounding by largest remainder and never exceeding a pool. Capped pools
/// hand their excess to the rest. Pools with zero weight get nothing unless
/// every pool has zero weight, in which case pool size is the weight.
pub fn allocate_budget(pools: &[(usize, f64)], budget: usize) -> Vec<usize> {
    let total: usize = pools.iter().map(|p| p.0).sum();
    if budget >= total {
        return pools.iter().map(|p| p.0).collect();
    }
    let mut weights: Vec<f64> = pools
        .iter()
        .map(|&(n, f1)| (n as f64 * (1.0 - f1).clamp(0.0, 1.0)).sqrt())
        .collect();
    if weights.iter().all(|w| *w == 0.0) {
        weights = pools.iter().map(|p| p.0 as f64).collect();
    }
    let mut counts = vec![0usize; pools.len()];
    let mut open: Vec<usize> = (0..pools.len()).filter(|&i| weights[i] > 0.0 && pools[i].0 > 0).collect();
    let mut left = budget;
    while left > 0 && !open.is_empty() {
        let wsum: f64 = open.iter().map(|&i| weights[i]).sum();
        let quotas: Vec<(usize, f64)> = open.iter().map(|&i| (i, left as f64 * weights[i] / wsum)).collect();
        // a pool whose quota reaches its remaining capacity is filled and closed
        let capped: Vec<usize> = quotas
            .iter()
            .filter(|&&(i, q)| q >= (pools[i].0 - counts[i]) as f64)
            .map(|&(i, _)| i)
            .collect();
        if !capped.is_empty() {
            for i in capped {
                left -= pools[i].0 - counts[i];
                counts[i] = pools[i].0;
                open.retain(|&j| j != i);
            }
            continue;
        }
        let mut given = 0;
        let mut rema: Vec<(usize, f64)> = Vec::with_capacity(quotas.len());
        for &(i, q) in &quotas {
            let f = q.floor() as usize;
            counts[i] += f;
            given += f;
            rema.push((i, q - f as f64));
        }
        rema.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(i, _) in rema.iter().take(left - given) {
            counts[i] += 1;
        }
        left = 0;
    }
    counts
}

/// Adventure sampler: groups by action verb, allocates with [`allocate_budget`],
/// then draws a seeded subset of each group. Output keeps input order.
pub fn sample_adventure<'a>(
    scored: &'a [ScoredTuple],
    budget: Option<usize>,
    seed: u64,
    warnings: &mut Vec<String>,
) -> (Vec<&'a ScoredTuple>, Vec<Allocation>) {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in scored.iter().enumerate() {
        groups
            .entry(s.tuple.expert_next_action.verb().to_string())
            .or_default()
            .push(i);
    }
    let pools: Vec<(usize, f64)> = groups
        .values()
        .map(|idx| {
            let mean = idx.iter().map(|&i| scored[i].baseline_f1).sum::<f64>() / idx.len() as f64;
            (idx.len(), mean)
        })
        .collect();
    let budget = match budget {
        Some(b) if b >= scored.len() => {
            let msg = format!("budget {b} covers the whole pool of {}; taking every tuple", scored.len());
            tracing::warn!("{msg}");
            warnings.push(msg);
            scored.len()
        }
        Some(b) => b,
        None => scored.len(),
    };
    let counts = allocate_budget(&pools, budget);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    let mut allocations = Vec::new();
    for ((verb, idx), (&count, &(pool, mean_f1))) in groups.iter().zip(counts.iter().zip(&pools)) {
        let mut pick = idx.clone();
        pick.shuffle(&mut rng);
        pick.truncate(count);
        keep.extend(pick);
        allocations.push(Allocation {
            action_type: verb.clone(),
            pool,
            mean_f1,
            count,
        });
    }
    keep.sort_unstable();
    (keep.into_iter().map(|i| &scored[i]).collect(), allocations)
}

/// Decomposes trajectories and scores each transition's baseline prediction.
/// Transitions the baseline cannot predict score 0.
pub fn score_with_baseline(
    trajectories: &[Trajectory],
    domain: Domain,
    baseline: &dyn WorldModel,
    exec: &Executor,
) -> Vec<ScoredTuple> {
    let tuples: Vec<(String, TransitionTuple)> = trajectories
        .iter()
        .flat_map(|t| t.decompose(domain).into_iter().map(|x| (t.task_id.clone(), x)))
        .collect();
    exec.map(&tuples, |(task_id, tuple)| {
        let f1 = match baseline.predict(task_id, &tuple.history) {
            Ok(step) => token_f1(step.obs.text(), tuple.real_next_state.text()),
            Err(e) => {
                tracing::debug!(task = %task_id, error = %e, "baseline prediction failed");
                0.0
            }
        };
        ScoredTuple {
            task_id: task_id.clone(),
            tuple: tuple.clone(),
            baseline_f1: f1,
        }
    })
}

/// Selects from already-scored tuples according to the domain's rule.
pub fn build_from_scored(scored: &[ScoredTuple], cfg: &DatasetConfig) -> DatasetOutput {
    let mut warnings = Vec::new();
    let (kept, allocations) = match cfg.domain {
        Domain::Shop => (select_shop(scored, cfg.f1_threshold), Vec::new()),
        Domain::Adventure => sample_adventure(scored, cfg.budget, cfg.seed, &mut warnings),
    };
    DatasetOutput {
        records: kept.into_iter().map(|s| GrpoRecord::from_tuple(&s.tuple)).collect(),
        allocations,
        warnings,
    }
}

pub fn build_grpo_dataset(
    trajectories: &[Trajectory],
    cfg: &DatasetConfig,
    baseline: &dyn WorldModel,
    exec: &Executor,
) -> DatasetOutput {
    let scored = score_with_baseline(trajectories, cfg.domain, baseline, exec);
    build_from_scored(&scored, cfg)
}
