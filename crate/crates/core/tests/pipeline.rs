//! End-to-end command behavior on a small grid.

use std::fs;
use std::path::Path;
use std::process::Command;

use attribench::attribution::{verify_dump, DumpStatus, Method};
use attribench::cli::{
    cmd_attribute, cmd_generate, cmd_report, cmd_train, AttributeSummary, DatasetMode, Overrides, PipelineError,
    RunConfig, RunContext,
};
use attribench::corpus::{load_jsonl, Scope};
use attribench::model::{evaluate_accuracy, load_checkpoint, TrainScheme};

const METHODS: [Method; 4] = [Method::Saliency, Method::KernelShap, Method::UniformRandom, Method::PatternVariant];

fn small_config(out: &Path) -> RunConfig {
    let mut c = RunConfig::template(Scope::AllWords);
    c.dataset.n_base = 60;
    c.dataset.seed = 4;
    c.training.schemes = vec![TrainScheme::ZS, TrainScheme::C];
    c.training.seeds = vec![1, 2];
    c.training.config.max_epochs = 5;
    c.attribution.methods = METHODS.to_vec();
    c.attribution.max_sentences = Some(12);
    c.attribution.options.shap_samples = 128;
    c.evaluation.out_dir = out.to_path_buf();
    c
}

fn context(config: RunConfig, force: bool) -> RunContext {
    let overrides = Overrides {
        workers: Some(2),
        force,
        ..Overrides::default()
    };
    RunContext::new(config, overrides, None).unwrap()
}

#[test]
fn full_grid_is_resumable_and_tamper_evident() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = context(small_config(dir.path()), false);
    let layout = ctx.layout();

    let manifest = cmd_generate(&ctx).unwrap();
    assert_eq!(manifest.scopes.len(), 2);
    assert_eq!(manifest.scopes[0].n_train + manifest.scopes[0].n_test, 180);
    let first = fs::read(layout.split_path(Scope::AllWords, "train")).unwrap();
    cmd_generate(&ctx).unwrap();
    assert_eq!(fs::read(layout.split_path(Scope::AllWords, "train")).unwrap(), first);

    // Reporting before attribution lists every gap.
    match cmd_report(&ctx) {
        Err(e @ PipelineError::IncompleteGrid(_)) => {
            assert_eq!(e.exit_code(), 2);
            let PipelineError::IncompleteGrid(gaps) = e else { unreachable!() };
            assert_eq!(gaps.len(), 2 * 2 * METHODS.len());
        }
        other => panic!("expected incomplete grid, got {other:?}"),
    }

    let acc = cmd_train(&ctx).unwrap();
    assert_eq!(acc.runs.len(), 4);
    let test = load_jsonl(&layout.split_path(Scope::AllWords, "test")).unwrap();
    for run in &acc.runs {
        let ckpt = load_checkpoint(&layout.checkpoint(Scope::AllWords, run.scheme, run.seed)).unwrap();
        assert_eq!(evaluate_accuracy(&ckpt.model, &test).unwrap(), run.test_accuracy);
    }
    // The zero-shot checkpoint holds the initialization unchanged.
    for seed in [1, 2] {
        let init = load_checkpoint(&layout.init_checkpoint(Scope::AllWords, seed)).unwrap();
        let zs = load_checkpoint(&layout.checkpoint(Scope::AllWords, TrainScheme::ZS, seed)).unwrap();
        assert_eq!(init.model.params, zs.model.params);
        assert_eq!(init.model.tokenizer, zs.model.tokenizer);
    }
    let stamp = fs::metadata(layout.checkpoint(Scope::AllWords, TrainScheme::C, 1)).unwrap().modified().unwrap();
    assert_eq!(cmd_train(&ctx).unwrap(), acc);
    let again = fs::metadata(layout.checkpoint(Scope::AllWords, TrainScheme::C, 1)).unwrap().modified().unwrap();
    assert_eq!(stamp, again);

    assert_eq!(
        cmd_attribute(&ctx).unwrap(),
        AttributeSummary {
            written: 16,
            skipped: 0
        }
    );
    assert_eq!(
        cmd_attribute(&ctx).unwrap(),
        AttributeSummary {
            written: 0,
            skipped: 16
        }
    );

    let report = cmd_report(&ctx).unwrap();
    assert_eq!(report.cells.len(), 2 * METHODS.len());
    assert_eq!(report.seeds.len(), 2 * 2 * METHODS.len());
    let csv = fs::read(layout.report_dir(Scope::AllWords).join("report.csv")).unwrap();
    assert_eq!(cmd_report(&ctx).unwrap(), report);
    assert_eq!(fs::read(layout.report_dir(Scope::AllWords).join("report.csv")).unwrap(), csv);

    // Tampering is detected, refused by the report, and repaired by attribute.
    let dump = layout.dump(Scope::AllWords, TrainScheme::C, 2, Method::Saliency);
    let mut bytes = fs::read(&dump).unwrap();
    let pos = bytes.iter().position(|b| b.is_ascii_digit()).unwrap();
    bytes[pos] = if bytes[pos] == b'9' { b'8' } else { bytes[pos] + 1 };
    fs::write(&dump, bytes).unwrap();
    assert!(matches!(verify_dump(&dump), DumpStatus::Corrupt(_)));
    let err = cmd_report(&ctx).unwrap_err();
    assert!(matches!(err, PipelineError::Validation(_)));
    assert_eq!(err.exit_code(), 1);
    assert_eq!(
        cmd_attribute(&ctx).unwrap(),
        AttributeSummary {
            written: 1,
            skipped: 15
        }
    );
    assert_eq!(fs::read(layout.report_dir(Scope::AllWords).join("report.csv")).unwrap(), csv);
    cmd_report(&ctx).unwrap();
    assert_eq!(fs::read(layout.report_dir(Scope::AllWords).join("report.csv")).unwrap(), csv);

    // Forcing recomputes every dump with identical content.
    let forced = context(small_config(dir.path()), true);
    assert_eq!(cmd_attribute(&forced).unwrap().written, 16);
    cmd_report(&forced).unwrap();
    assert_eq!(fs::read(layout.report_dir(Scope::AllWords).join("report.csv")).unwrap(), csv);
}

#[test]
fn load_mode_passes_files_through_with_audit() {
    let dir = tempfile::tempdir().unwrap();
    let template = context(small_config(&dir.path().join("a")), false);
    cmd_generate(&template).unwrap();
    let layout = template.layout();

    let mut config = small_config(&dir.path().join("b"));
    config.dataset.mode = DatasetMode::Load;
    config.dataset.scope = Scope::SubjectOnly;
    config.dataset.train_path = Some(layout.split_path(Scope::SubjectOnly, "train"));
    config.dataset.test_path = Some(layout.split_path(Scope::SubjectOnly, "test"));
    let ctx = context(config, false);
    let manifest = cmd_generate(&ctx).unwrap();
    assert_eq!(manifest.scopes.len(), 1);
    assert_eq!(manifest.scopes[0].scope, Scope::SubjectOnly);
    for split in ["train", "test"] {
        assert_eq!(
            fs::read(ctx.layout().split_path(Scope::SubjectOnly, split)).unwrap(),
            fs::read(layout.split_path(Scope::SubjectOnly, split)).unwrap()
        );
    }
}

#[test]
fn commands_need_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = context(small_config(dir.path()), false);
    assert!(matches!(cmd_train(&ctx), Err(PipelineError::Validation(_))));
    cmd_generate(&ctx).unwrap();
    assert!(matches!(cmd_attribute(&ctx), Err(PipelineError::Validation(_))));
}

fn binary(args: &[&str], out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_attribench"))
        .args(args)
        .env("ATTRIBENCH_OUT", out)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = dir.path().join("run.json");
    fs::write(&config, serde_json::to_string(&small_config(Path::new("ignored"))).unwrap()).unwrap();
    let cfg = config.to_str().unwrap();

    assert_eq!(binary(&["generate"], &out), 1, "missing --config");
    assert_eq!(binary(&["bogus"], &out), 1, "unknown subcommand");
    assert_eq!(binary(&["generate", "--config", cfg], &out), 0);
    // The environment variable redirected the output root.
    assert!(out.join("data").join("data_config.json").is_file());
    assert_eq!(binary(&["evaluate-report", "--config", cfg], &out), 2);
    fs::write(&config, "{\"dataset\": {}}").unwrap();
    assert_eq!(binary(&["generate", "--config", cfg], &out), 1);
}
