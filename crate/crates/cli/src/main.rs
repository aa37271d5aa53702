use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};
use qpk_core::harness::{self, ExperimentConfig, RunArtifacts, RunContext, Stage};
use qpk_core::Error;

#[derive(Parser)]
#[command(name = "qpk", version, about = "Quantum path kernel experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides the config and QPK_JOBS.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; artifacts land in <out>/<config hash prefix>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and split the datasets.
    GenData(Common),
    /// Train the circuits and record trajectories.
    Train(Common),
    /// Build tangent and path kernel Grams from stored trajectories.
    Kernels(Common),
    /// Fit SVMs on stored Grams and write metrics.csv.
    Svm(Common),
    /// Every stage followed by the report.
    Run(Common),
    /// Classical network versus random-feature comparison.
    Baseline(Common),
    /// Tables and charts from an existing metrics.csv.
    Report(Common),
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn context(args: &Common) -> Result<RunContext, Failure> {
    let named = |e: Error| {
        let msg = e.to_string();
        let path = args.config.display().to_string();
        let msg = if msg.contains(&path) { msg } else { format!("{path}: {msg}") };
        if e.is_validation() {
            Failure::Validation(msg)
        } else {
            Failure::Runtime(msg)
        }
    };
    let mut cfg = ExperimentConfig::load(&args.config).map_err(named)?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    RunContext::new(cfg, args.jobs).map_err(named)
}

fn finish(art: RunArtifacts) -> Result<(), Failure> {
    for f in &art.failures {
        eprintln!("cell {} failed in {}: {}", f.cell.tag(), f.stage, f.error);
    }
    println!("artifacts: {}", art.root.display());
    if !art.metrics.is_empty() {
        println!("metric rows: {}", art.metrics.len());
    }
    if art.failures.is_empty() {
        Ok(())
    } else {
        let msg = format!(
            "{} cell(s) failed, see {}",
            art.failures.len(),
            art.root.join("failures.csv").display()
        );
        if art.failures.iter().all(|f| f.validation) {
            Err(Failure::Validation(msg))
        } else {
            Err(Failure::Runtime(msg))
        }
    }
}

fn show(path: &Path) {
    println!("wrote {}", path.display());
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    let stage = |args: &Common, s: Stage| -> Result<(), Failure> {
        let ctx = context(args)?;
        finish(harness::run_stage(&ctx, s)?)
    };
    match cmd {
        Command::GenData(a) => stage(&a, Stage::Data),
        Command::Train(a) => stage(&a, Stage::Train),
        Command::Kernels(a) => stage(&a, Stage::Kernels),
        Command::Svm(a) => stage(&a, Stage::Svm),
        Command::Run(a) => stage(&a, Stage::All),
        Command::Baseline(a) => {
            let ctx = context(&a)?;
            let art = harness::run_baseline(&ctx)?;
            println!("d,eps,nn_mean,rf_mean,oracle_mean");
            for s in &art.summary {
                println!("{},{},{:.4},{:.4},{:.4}", s.d, s.eps, s.nn_mean, s.rf_mean, s.oracle_mean);
            }
            if let Some(s) = &art.shrinkage {
                println!(
                    "junk |W1| {:.4} -> {:.4}, signal |W1| {:.4} -> {:.4}",
                    s.junk_before, s.junk_after, s.signal_before, s.signal_after
                );
            }
            println!("artifacts: {}", ctx.dir("report").display());
            Ok(())
        }
        Command::Report(a) => {
            let ctx = context(&a)?;
            let summary = harness::report(&ctx)?;
            summary.files.iter().for_each(|p| show(p));
            for m in &summary.missing {
                eprintln!("missing: {m}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
