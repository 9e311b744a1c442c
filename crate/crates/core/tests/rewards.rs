use behr_core::model::{Action, Domain, Observation, TrajectoryPrefix, TransitionTuple};
use behr_core::perturb::study::toy_corpus;
use behr_core::reward::{behr, group_normalize, score_candidates, RewardError, RewardKind, RewardMode};
use behr_core::scorer::{AgentContext, CountingBackend, LogprobCache, MeanLogProb, ScorerBackend, ScorerError, ScriptedScorer};
use behr_core::Executor;
use proptest::prelude::*;

fn mode(kind: RewardKind, coef: f64) -> RewardMode {
    RewardMode::new(kind, coef).unwrap()
}

proptest! {
    #[test]
    fn modes_are_symmetric_bounded_and_decreasing(
        d1 in -20.0f64..20.0,
        d2 in -20.0f64..20.0,
        base in -10.0f64..0.0,
        coef in 0.05f64..5.0,
    ) {
        for kind in RewardKind::ALL {
            let m = mode(kind, coef);
            let r = |d: f64| behr(base + d, base, m).unwrap();
            prop_assert!((r(d1) - behr(base - d1, base, m).unwrap()).abs() < 1e-9);
            let v = r(d1);
            match kind {
                RewardKind::Exponential | RewardKind::Cauchy => prop_assert!(v > 0.0 && v <= 1.0),
                RewardKind::Linear => prop_assert!((0.0..=1.0).contains(&v)),
                RewardKind::NegL1 | RewardKind::NegL2 => prop_assert!(v <= 0.0),
            }
            let (lo, hi) = if d1.abs() < d2.abs() { (d1, d2) } else { (d2, d1) };
            if hi.abs() - lo.abs() > 1e-9 {
                let saturated = kind == RewardKind::Linear && coef * lo.abs() >= 1.0;
                if saturated || (kind == RewardKind::Exponential && coef * lo.abs() > 700.0) {
                    prop_assert!(r(lo) >= r(hi));
                } else {
                    prop_assert!(r(lo) > r(hi));
                }
            }
        }
    }

    #[test]
    fn normalization_matches_brute_force(xs in prop::collection::vec(-5.0f64..5.0, 1..12), a in 0.1f64..10.0, b in -3.0f64..3.0) {
        let out = group_normalize(&xs, 0.0);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        for (o, x) in out.iter().zip(&xs) {
            let expect = if sd == 0.0 { 0.0 } else { (x - mean) / sd };
            prop_assert!((o - expect).abs() < 1e-9);
        }
        if sd > 1e-6 {
            let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            for (p, q) in group_normalize(&scaled, 0.0).iter().zip(&out) {
                prop_assert!((p - q).abs() < 1e-6);
            }
            prop_assert!(out.iter().sum::<f64>().abs() < 1e-9);
        }
    }
}

#[test]
fn batch_uses_one_real_call_plus_one_per_candidate() {
    let corpus = toy_corpus(2, 3);
    let t = &corpus[0];
    let backend = CountingBackend::new(ScriptedScorer::default());
    let cache = LogprobCache::new();
    let candidates: Vec<Observation> = (0..5).map(|_| t.real_next_state.clone()).collect();
    let batch =
        score_candidates("p0", t, &candidates, &backend, &cache, RewardMode::default(), &Executor::parallel()).unwrap();
    assert_eq!(backend.calls(), 6);
    assert_eq!(batch.rewards(), vec![1.0; 5]);
    assert_eq!(batch.advantages, vec![0.0; 5]);
    // the real-state score is cached; only candidates are scored again
    score_candidates("p0", t, &candidates, &backend, &cache, RewardMode::default(), &Executor::sequential()).unwrap();
    assert_eq!(backend.calls(), 11);
}

#[test]
fn real_state_candidate_gets_mode_maximum() {
    let t = &toy_corpus(1, 9)[0];
    for kind in RewardKind::ALL {
        let m = mode(kind, 1.0);
        let b = score_candidates(
            "p",
            t,
            std::slice::from_ref(&t.real_next_state),
            &ScriptedScorer::default(),
            &LogprobCache::new(),
            m,
            &Executor::sequential(),
        )
        .unwrap();
        assert_eq!(b.rewards(), vec![m.maximum()]);
    }
}

/// Fails on candidate states containing "FAIL".
struct Flaky;

impl ScorerBackend for Flaky {
    fn id(&self) -> String {
        "flaky".into()
    }
    fn mean_logprob(&self, ctx: &AgentContext, _: &Action) -> Result<MeanLogProb, ScorerError> {
        if ctx.final_state().contains("FAIL") {
            Err(ScorerError::Transport("boom".into()))
        } else {
            MeanLogProb::new(-(ctx.final_state().len() as f64) / 100.0, 1)
        }
    }
}

fn tuple() -> TransitionTuple {
    TransitionTuple {
        history: TrajectoryPrefix::new(Observation::new("start").unwrap(), vec![], Action::new("look").unwrap()),
        real_next_state: Observation::new("real").unwrap(),
        expert_next_action: Action::new("go north").unwrap(),
        domain: Domain::Adventure,
    }
}

#[test]
fn failed_candidates_are_dropped() {
    let obs = |s: &str| Observation::new(s).unwrap();
    let cands = [obs("aa"), obs("FAIL"), obs("bbbb")];
    let b = score_candidates("x", &tuple(), &cands, &Flaky, &LogprobCache::new(), RewardMode::default(), &Executor::sequential())
        .unwrap();
    assert_eq!(b.dropped, vec![1]);
    assert_eq!(b.scored.iter().map(|s| s.candidate_index).collect::<Vec<_>>(), vec![0, 2]);
    assert!(!b.is_degenerate());

    let b = score_candidates("y", &tuple(), &cands[..2], &Flaky, &LogprobCache::new(), RewardMode::default(), &Executor::sequential())
        .unwrap();
    assert!(b.is_degenerate());

    let err = score_candidates("z", &tuple(), &[obs("FAIL 1"), obs("FAIL 2")], &Flaky, &LogprobCache::new(), RewardMode::default(), &Executor::sequential())
        .unwrap_err();
    assert!(matches!(err, RewardError::AllFailed { .. }));
}
