use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use airhockey_core::datasets::verify_replay;
use airhockey_core::env::TaskId;
use airhockey_core::harness::{
    collect_expert, collect_reports, emit_results_table, evaluate, relabel_dataset, train, HarnessError, RunConfig,
};
use airhockey_core::learn::{HERConfig, HerStrategy};
use airhockey_core::nn::PolicyFile;
use airhockey_teleop::TeleopConfig;

#[derive(Parser)]
#[command(name = "airhockey", version, about = "Air hockey simulator, learners and data tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train from a run config (JSON; missing fields take defaults).
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Greedy evaluation of a saved policy.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        task: TaskId,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
    /// Results table from every eval_report.json under a directory.
    Table {
        #[arg(long)]
        runs: PathBuf,
        /// Where to write results_table.{md,csv}; defaults to the runs directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record greedy rollouts of a policy as a dataset.
    CollectExpert {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the task stored in the policy file.
        #[arg(long)]
        task: Option<TaskId>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-simulate a trajectory file and compare bit for bit.
    ReplayVerify {
        #[arg(long)]
        file: PathBuf,
    },
    /// Hindsight-relabel a goal-conditioned dataset into replayable files.
    Relabel {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: HerStrategy,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the teleoperation server until interrupted.
    ServeTeleop {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_strategy(s: &str) -> Result<HerStrategy, String> {
    match s {
        "final" => Ok(HerStrategy::Final),
        "future" => Ok(HerStrategy::Future),
        _ => Err(format!("unknown strategy {s}; use final or future")),
    }
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

fn fail(kind: &'static str, e: impl std::fmt::Display) -> Failure {
    Failure {
        kind,
        message: e.to_string(),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| fail("io", format!("{}: {e}", path.display())))
}

fn policy_task(path: &Path) -> Result<TaskId, Failure> {
    let file = PolicyFile::load(path).map_err(|e| fail("policy", e))?;
    file.meta
        .get("task_id")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .ok_or_else(|| fail("usage", "policy file has no task_id; pass --task"))
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            let art = train(&cfg)?;
            for s in &art.seeds {
                println!(
                    "seed={} steps={} eval_success={:.3} eval_return={:.3} policy={}",
                    s.seed,
                    s.steps,
                    s.final_eval_success,
                    s.final_eval_return,
                    s.policy_file.display()
                );
            }
            println!("output={}", art.output_dir.display());
        }
        Cmd::Eval {
            policy,
            task,
            episodes,
            seeds,
        } => {
            let report = evaluate(&policy, task, episodes, &seeds)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Cmd::Table { runs, out } => {
            let cells = collect_reports(&runs)?;
            let table = emit_results_table(&cells);
            let out = out.unwrap_or(runs);
            std::fs::create_dir_all(&out).map_err(|e| fail("io", e))?;
            write_file(&out.join("results_table.md"), &table.markdown)?;
            write_file(&out.join("results_table.csv"), &table.csv)?;
            print!("{}", table.markdown);
        }
        Cmd::CollectExpert {
            policy,
            steps,
            out,
            task,
            seed,
        } => {
            let task = match task {
                Some(t) => t,
                None => policy_task(&policy)?,
            };
            let s = collect_expert(&policy, task, steps, &out, seed)?;
            println!(
                "episodes={} transitions={} successes={} out={}",
                s.episodes,
                s.transitions,
                s.successes,
                s.directory.display()
            );
        }
        Cmd::ReplayVerify { file } => {
            let report = verify_replay(&file).map_err(|e| fail("dataset", e))?;
            println!("{report}");
            if !report.pass {
                return Err(fail(
                    "replay_mismatch",
                    format!("first divergent step {}", report.first_divergent_step.unwrap_or(0)),
                ));
            }
        }
        Cmd::Relabel {
            input,
            strategy,
            k,
            out,
            seed,
        } => {
            let s = relabel_dataset(&input, &HERConfig { strategy, k }, &out, seed)?;
            println!("episodes={} transitions={} successes={}", s.episodes, s.transitions, s.successes);
        }
        Cmd::ServeTeleop { config } => {
            let cfg = TeleopConfig::load(&config).map_err(|e| fail("config", e))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| fail("io", e))?;
            rt.block_on(airhockey_teleop::serve(cfg)).map_err(|e| fail("teleop", e))?;
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("error kind=usage message={:?}", one_line(&first));
            return ExitCode::from(2);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error kind={} message={:?}", f.kind, one_line(&f.message));
            ExitCode::FAILURE
        }
    }
}
