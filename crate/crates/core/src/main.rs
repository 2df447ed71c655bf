//! Command-line front end. Exit codes: 0 ok, 1 validation failure,
//! 2 incomplete grid.

use std::path::PathBuf;
use std::process::ExitCode;

use attribench::cli::{
    cmd_attribute, cmd_generate, cmd_report, cmd_train, Overrides, PipelineError, RunConfig, RunContext, OUT_ENV,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(version, about = "Ground-truth benchmark for feature attribution methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output root; overrides the configuration file.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Recompute outputs that already exist.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write corpus splits and the bias audit.
    Generate,
    /// Train every (scheme, seed) run.
    Train,
    /// Dump attributions for every (scheme, seed, method).
    Attribute,
    /// Score the dumps and write the benchmark report.
    EvaluateReport,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let path = cli
        .config
        .ok_or_else(|| PipelineError::Config("--config is required".into()))?;
    let overrides = Overrides {
        out_dir: cli.out,
        workers: cli.workers,
        force: cli.force,
    };
    let ctx = RunContext::new(RunConfig::load(&path)?, overrides, None)?;
    match cli.command {
        Command::Generate => {
            let m = cmd_generate(&ctx)?;
            for s in &m.scopes {
                println!(
                    "{}: {} train, {} test, max bias deviation {:e}",
                    s.scope, s.n_train, s.n_test, s.max_bias_deviation
                );
            }
        }
        Command::Train => {
            let m = cmd_train(&ctx)?;
            for r in &m.runs {
                println!("{}/seed{}: test accuracy {:.4}", r.scheme, r.seed, r.test_accuracy);
            }
        }
        Command::Attribute => {
            let s = cmd_attribute(&ctx)?;
            println!("{} dumps written, {} already valid", s.written, s.skipped);
        }
        Command::EvaluateReport => {
            let report = cmd_report(&ctx)?;
            print!("{}", report.trend_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
