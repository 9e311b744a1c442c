use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use behr_cli::commands::{CandidateLine, PromptLine};
use behr_core::envsim::TaskSuite;
use behr_core::model::{read_jsonl, write_jsonl};
use behr_core::perturb::study::toy_corpus;
use behr_core::reward::RewardRecord;
use serde_json::Value;

fn behr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_behr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_specs_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let o = behr(d.path(), &["gen-specs", "--n", "0", "--out", "none"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_dir(d.path().join("none")).unwrap().count(), 0);

    for out in ["a", "b"] {
        let o = behr(d.path(), &["gen-specs", "--domain", "adventure", "--n", "5", "--seed", "4", "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for e in fs::read_dir(d.path().join("a")).unwrap() {
        let e = e.unwrap();
        assert_eq!(fs::read(e.path()).unwrap(), fs::read(d.path().join("b").join(e.file_name())).unwrap());
    }

    let o = behr(d.path(), &["gen-specs", "--n", "200", "--out", "shop"]);
    assert_eq!(code(&o), 0);
    assert_eq!(TaskSuite::load_dir(&d.path().join("shop")).unwrap().len(), 200);

    let o = behr(d.path(), &["gen-specs", "--domain", "space", "--n", "1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn evaluate_is_reproducible_across_thread_counts() {
    let d = tempfile::tempdir().unwrap();
    for (out, threads) in [("seq", "1"), ("par", "0")] {
        let o = behr(
            d.path(),
            &["evaluate", "--tasks", "40", "--wm", "corrupted:drop_target_pages", "--threads", threads, "--out", out],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["episodes.jsonl", "outcomes.json", "report.json", "report.md", "consistency.csv", "agreement.csv"] {
        assert_eq!(
            fs::read(d.path().join("seq").join(f)).unwrap(),
            fs::read(d.path().join("par").join(f)).unwrap(),
            "{f}"
        );
    }
    let report = json(&d.path().join("seq/report.json"));
    let row = &report["consistency"][0];
    assert!(row["cr_pw"].as_f64().unwrap() < 1.0);
    assert!(row["cr_pw_ci"].is_array());
}

#[test]
fn evaluate_from_config_with_agents_and_sign_test() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("h.toml"),
        r#"
seed = 3
out = "run"
[tasks]
domain = "adventure"
count = 30
[[agents]]
name = "strong"
skill = 0.95
[[agents]]
name = "weak"
skill = 0.4
comparisons = [["strong", "weak"]]
"#,
    )
    .unwrap();
    // `comparisons` after a table header would belong to that table; check it is rejected
    let o = behr(d.path(), &["evaluate", "--config", "h.toml"]);
    assert_eq!(code(&o), 1);

    let text = fs::read_to_string(d.path().join("h.toml")).unwrap().replace(
        "comparisons = [[\"strong\", \"weak\"]]\n",
        "",
    );
    fs::write(d.path().join("h.toml"), format!("comparisons = [[\"strong\", \"weak\"]]\n{text}")).unwrap();
    let o = behr(d.path(), &["evaluate", "--config", "h.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&d.path().join("run/report.json"));
    for row in report["consistency"].as_array().unwrap() {
        assert_eq!(row["cr_pw"], 1.0);
        assert_eq!(row["n_tasks"], 30);
    }
    let st = &report["sign_tests"][0];
    assert!(st["wins"].as_u64().unwrap() > st["losses"].as_u64().unwrap());
    assert_eq!(report["agreement"][1]["label"], "weak");

    // flags override the file
    let o = behr(d.path(), &["evaluate", "--config", "h.toml", "--tasks", "5", "--out", "small"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&d.path().join("small/report.json"))["consistency"][0]["n_tasks"], 5);
}

#[test]
fn sample_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/harness.toml");
    let cfg = behr_cli::HarnessConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.agent_configs().len(), 2);
    assert_eq!(cfg.comparisons.len(), 1);
}

#[test]
fn empty_task_set_warns() {
    let d = tempfile::tempdir().unwrap();
    let o = behr(d.path(), &["evaluate", "--tasks", "0", "--out", "e"]);
    assert_eq!(code(&o), 0);
    let report = json(&d.path().join("e/report.json"));
    assert!(report["consistency"].as_array().unwrap().is_empty());
    assert!(report["warnings"][0].as_str().unwrap().contains("empty"));
}

#[test]
fn config_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.toml"), "seed = 1\nmystery = true\n").unwrap();
    for args in [
        vec!["evaluate", "--config", "bad.toml"],
        vec!["evaluate", "--config", "missing.toml"],
        vec!["evaluate", "--wm", "psychic"],
        vec!["evaluate", "--mode", "neg_l3"],
        vec!["evaluate", "--coef", "-2"],
        vec!["evaluate", "--tasks", "3", "--wm", "corrupted:break_connectivity"],
        vec!["evaluate", "--wm", "remote"],
        vec!["lookahead", "--k", "0"],
        vec!["frobnicate"],
    ] {
        let o = behr(d.path(), &args);
        assert_eq!(code(&o), 1, "{args:?}: {}", stderr(&o));
    }
}

fn write_batch(dir: &Path, n: usize, candidates: impl Fn(&behr_core::model::TransitionTuple) -> Vec<String>) {
    let corpus = toy_corpus(n, 5);
    let prompts: Vec<PromptLine> = corpus
        .iter()
        .enumerate()
        .map(|(i, t)| PromptLine {
            prompt_id: format!("p{i}"),
            tuple: t.clone(),
        })
        .collect();
    let cands: Vec<CandidateLine> = corpus
        .iter()
        .enumerate()
        .map(|(i, t)| CandidateLine {
            prompt_id: format!("p{i}"),
            candidates: candidates(t),
        })
        .collect();
    write_jsonl(&dir.join("tuples.jsonl"), &prompts).unwrap();
    write_jsonl(&dir.join("candidates.jsonl"), &cands).unwrap();
}

#[test]
fn reward_batch_identical_candidates_and_neg_l1() {
    let d = tempfile::tempdir().unwrap();
    write_batch(d.path(), 1, |t| vec![t.real_next_state.text().to_string(); 4]);
    let args = ["reward-batch", "--tuples", "tuples.jsonl", "--candidates", "candidates.jsonl"];
    let o = behr(d.path(), &[&args[..], &["--mode", "neg_l1", "--out", "r"]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let recs: Vec<RewardRecord> = read_jsonl(&d.path().join("r/rewards.jsonl")).unwrap();
    assert_eq!(recs.len(), 4);
    assert!(recs.iter().all(|r| r.reward == 0.0 && r.advantage == 0.0 && r.mode == behr_core::reward::RewardKind::NegL1));
    let summary = json(&d.path().join("r/batch_summary.json"));
    assert_eq!(summary["backend_calls"], 5);
    assert_eq!(summary["degenerate_groups"].as_array().unwrap().len(), 0);
}

#[test]
fn reward_batch_input_errors_name_lines() {
    let d = tempfile::tempdir().unwrap();
    write_batch(d.path(), 3, |t| vec![t.real_next_state.text().to_string()]);
    let args = ["reward-batch", "--tuples", "tuples.jsonl", "--candidates", "candidates.jsonl"];

    let good = fs::read_to_string(d.path().join("candidates.jsonl")).unwrap();
    let mut lines: Vec<&str> = good.lines().collect();
    lines[1] = r#"{"prompt_id": "p1", "candidate": ["x"]}"#;
    fs::write(d.path().join("candidates.jsonl"), lines.join("\n")).unwrap();
    let o = behr(d.path(), &args);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("candidates.jsonl:2"), "{}", stderr(&o));

    lines[1] = r#"{"prompt_id": "p9", "candidates": ["x"]}"#;
    fs::write(d.path().join("candidates.jsonl"), lines.join("\n")).unwrap();
    let o = behr(d.path(), &args);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("candidates.jsonl:2") && stderr(&o).contains("p9"));

    // p1 now has no candidate group at all
    fs::write(d.path().join("candidates.jsonl"), format!("{}\n{}\n", lines[0], lines[2])).unwrap();
    let o = behr(d.path(), &args);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("tuples.jsonl:2"), "{}", stderr(&o));
}

#[test]
fn unreachable_scorer_is_a_partial_run() {
    let d = tempfile::tempdir().unwrap();
    write_batch(d.path(), 2, |t| vec![t.real_next_state.text().to_string(), "other page".into()]);
    // bind and drop to get a port nobody listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    fs::write(
        d.path().join("remote.toml"),
        format!(
            "[scorer]\nkind = \"remote\"\n[scorer.remote.endpoint]\nbase_url = \"http://127.0.0.1:{port}/v1\"\nmodel = \"m\"\nretries = 0\ntimeout_secs = 2\n"
        ),
    )
    .unwrap();
    let o = behr(
        d.path(),
        &["reward-batch", "--config", "remote.toml", "--tuples", "tuples.jsonl", "--candidates", "candidates.jsonl"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let summary = json(&d.path().join("out/batch_summary.json"));
    assert_eq!(summary["failed_prompts"].as_array().unwrap().len(), 2);
}

#[test]
fn perturb_study_table_and_exclusions() {
    let d = tempfile::tempdir().unwrap();
    let o = behr(d.path(), &["perturb-study", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o2 = behr(d.path(), &["perturb-study", "--out", "b"]);
    assert_eq!(o.stdout, o2.stdout);
    assert_eq!(fs::read(d.path().join("a/study.csv")).unwrap(), fs::read(d.path().join("b/study.csv")).unwrap());
    let report = json(&d.path().join("a/study.json"));
    assert_eq!(report["rows"].as_array().unwrap().len(), 7);
    assert_eq!(report["excluded"], 0);

    // an expert action that does not name an item leaves no target to perturb
    let mut corpus = toy_corpus(10, 1);
    corpus[3].expert_next_action = behr_core::model::Action::new("click[next >]").unwrap();
    write_jsonl(&d.path().join("corpus.jsonl"), &corpus).unwrap();
    fs::write(d.path().join("p.toml"), "[perturb]\ncorpus = \"corpus.jsonl\"\n").unwrap();
    let o = behr(d.path(), &["perturb-study", "--config", "p.toml", "--out", "c"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&d.path().join("c/study.json"));
    assert!(report["excluded"].as_u64().unwrap() > 0);
}

#[test]
fn build_dataset_shop_and_adventure() {
    let d = tempfile::tempdir().unwrap();
    let o = behr(
        d.path(),
        &["build-dataset", "--tasks", "30", "--wm", "corrupted:drop_target_pages", "--threshold", "1.01", "--out", "s"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines = fs::read_to_string(d.path().join("s/dataset.jsonl")).unwrap();
    assert!(lines.lines().count() > 0);
    for line in lines.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["extra_info", "prompt", "reward_model"]);
        assert!(v["reward_model"]["ground_truth"].is_string());
        assert!(v["extra_info"]["expert_action"].is_string());
        assert_eq!(v["prompt"][0]["role"], "system");
    }

    // the oracle baseline is never wrong, so the shop filter keeps nothing
    let o = behr(d.path(), &["build-dataset", "--tasks", "30", "--out", "o"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(d.path().join("o/dataset.jsonl")).unwrap(), "");

    fs::write(d.path().join("adv.toml"), "[tasks]\ndomain = \"adventure\"\ncount = 20\n[dataset]\nbudget = 6000\n").unwrap();
    let o = behr(
        d.path(),
        &["build-dataset", "--config", "adv.toml", "--wm", "corrupted:break_connectivity", "--out", "a"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("budget 6000"));
    let alloc = json(&d.path().join("a/allocations.json"));
    let total: u64 = alloc.as_array().unwrap().iter().map(|a| a["count"].as_u64().unwrap()).sum();
    let pool: u64 = alloc.as_array().unwrap().iter().map(|a| a["pool"].as_u64().unwrap()).sum();
    assert_eq!(total, pool);
    assert_eq!(fs::read_to_string(d.path().join("a/dataset.jsonl")).unwrap().lines().count() as u64, total);
}

#[test]
fn lookahead_command_reports_costs() {
    let d = tempfile::tempdir().unwrap();
    let o = behr(d.path(), &["lookahead", "--tasks", "20", "--k", "3", "--out", "l"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = json(&d.path().join("l/lookahead.json"));
    assert_eq!(s["k"], 3);
    assert_eq!(s["irregular_steps"], 0);
    assert!(s["calls"].as_u64().unwrap() <= 5 * s["steps"].as_u64().unwrap());
    assert!(s["lookahead_success"].as_u64() >= s["baseline_success"].as_u64());
}
