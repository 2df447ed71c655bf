//! Runs the full generate, train, attribute and report pipeline on a reduced
//! grid and prints the trend summary.
//!
//! cargo run --release --example benchmark_report -- [out_dir] [n_base]

use std::path::PathBuf;

use attribench::cli::{cmd_attribute, cmd_generate, cmd_report, cmd_train, Overrides, RunConfig, RunContext};
use attribench::corpus::Scope;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().map_or_else(|| std::env::temp_dir().join("attribench-example"), PathBuf::from);
    let n_base: usize = args.get(1).map_or(Ok(300), |s| s.parse())?;

    let mut config = RunConfig::template(Scope::AllWords);
    config.dataset.n_base = n_base;
    config.training.seeds = vec![1, 2];
    config.attribution.max_sentences = Some(60);
    let overrides = Overrides {
        out_dir: Some(out.clone()),
        ..Overrides::default()
    };
    let ctx = RunContext::new(config, overrides, None)?;
    cmd_generate(&ctx)?;
    for run in cmd_train(&ctx)?.runs {
        println!("{} seed {}: test accuracy {:.3}", run.scheme, run.seed, run.test_accuracy);
    }
    let written = cmd_attribute(&ctx)?;
    println!("{} dumps written, {} reused", written.written, written.skipped);
    let report = cmd_report(&ctx)?;
    print!("{}", report.trend_text());
    println!("reports in {}", ctx.layout().report_dir(Scope::AllWords).display());
    Ok(())
}
