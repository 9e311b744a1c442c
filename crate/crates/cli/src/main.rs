use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use behr_cli::commands::{self, Status};
use behr_cli::config::BackendKind;
use behr_cli::{HarnessConfig, Overrides, TasksFlag, WmChoice};
use behr_core::model::Domain;
use behr_core::reward::RewardKind;
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "behr", version, about = "World-model evaluation and reward harness")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML harness config; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of generated tasks, or a directory of spec files.
    #[arg(long, global = true)]
    tasks: Option<TasksFlag>,
    /// oracle, corrupted:<kind> or remote.
    #[arg(long, global = true)]
    wm: Option<WmChoice>,
    /// scripted or remote.
    #[arg(long, global = true)]
    scorer: Option<BackendKind>,
    /// Reward mode: exponential, cauchy, linear, neg_l1 or neg_l2.
    #[arg(long, global = true)]
    mode: Option<RewardKind>,
    #[arg(long, global = true)]
    coef: Option<f64>,
    /// Lookahead candidates per step.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded toy task specs.
    GenSpecs {
        #[arg(long, default_value = "shop")]
        domain: String,
        #[arg(long)]
        n: usize,
    },
    /// Real, WM and W2R runs with the full metric report.
    Evaluate,
    /// Score perturbed shop pages with every metric.
    PerturbStudy,
    /// Behavior-consistency rewards and group advantages for candidate states.
    RewardBatch {
        #[arg(long)]
        tuples: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
    },
    /// Select hard transitions and export training records.
    BuildDataset {
        #[arg(long)]
        trajectories: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Compare plain acting with world-model lookahead.
    Lookahead,
}

fn overrides(g: &GlobalArgs) -> Overrides {
    Overrides {
        seed: g.seed,
        tasks: g.tasks.clone(),
        wm: g.wm,
        scorer: g.scorer,
        mode: g.mode,
        coef: g.coef,
        k: g.k,
        out: g.out.clone(),
        threads: g.threads,
    }
}

fn load(g: &GlobalArgs) -> Result<HarnessConfig> {
    let base = match &g.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    Ok(base.resolve(&overrides(g))?)
}

fn run(cli: Cli) -> Result<Status> {
    let mut cfg = load(&cli.global)?;
    match cli.cmd {
        Command::GenSpecs { domain, n } => {
            let domain: Domain = serde_json::from_value(serde_json::Value::String(domain.clone()))
                .map_err(|_| behr_cli::ConfigError::invalid("domain", format!("unknown domain {domain:?}")))?;
            let paths = commands::gen_specs(domain, n, cfg.seed, &cfg.out)?;
            println!("wrote {} specs to {}", paths.len(), cfg.out.display());
            Ok(Status::Complete)
        }
        Command::Evaluate => {
            let (out, status) = commands::evaluate(&cfg)?;
            print!("{}", out.report.to_markdown());
            Ok(status)
        }
        Command::PerturbStudy => {
            let (report, status) = commands::perturb_study(&cfg)?;
            print!("{}", report.to_markdown());
            Ok(status)
        }
        Command::RewardBatch { tuples, candidates } => {
            let (s, status) = commands::reward_batch(&cfg, &tuples, &candidates)?;
            println!(
                "{} prompts, {} candidates: {} scorer calls ({} without caching)",
                s.prompts, s.candidates, s.backend_calls, s.uncached_calls
            );
            Ok(status)
        }
        Command::BuildDataset {
            trajectories,
            budget,
            threshold,
        } => {
            if trajectories.is_some() {
                cfg.dataset.trajectories = trajectories;
            }
            if budget.is_some() {
                cfg.dataset.budget = budget;
            }
            if let Some(t) = threshold {
                cfg.dataset.f1_threshold = t;
            }
            cfg.validate()?;
            let (out, status) = commands::build_dataset(&cfg)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} records written to {}", out.records.len(), cfg.out.join("dataset.jsonl").display());
            Ok(status)
        }
        Command::Lookahead => {
            let (s, status) = commands::lookahead(&cfg)?;
            println!(
                "{} tasks: {} solved without lookahead, {} with (k={}, {} calls over {} steps)",
                s.tasks, s.baseline_success, s.lookahead_success, s.k, s.calls, s.steps
            );
            Ok(status)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are config errors; 2 is reserved for partial runs
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
