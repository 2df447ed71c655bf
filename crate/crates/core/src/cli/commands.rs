use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{io_error, DatasetMode, PipelineError, RunContext};
use crate::attribution::{
    pattern_variant, read_dump, tfidf_features, verify_dump, write_dump, AttributionContext, DumpStatus, Method,
    MethodOptions, PatternTable,
};
use crate::corpus::{
    bundle_bias, generate_template_corpus, load_jsonl, save_jsonl, split_train_test, DatasetBundle, LabeledSentence,
    Lexicon, Scope,
};
use crate::evaluation::{
    normalize_and_aggregate, render_svg, summarize, BenchmarkReport, GroundTruth, ReportMetadata,
};
use crate::model::{
    evaluate_accuracy, load_checkpoint, save_checkpoint, train, Checkpoint, OlaModel, Tokenizer, TrainConfig,
    TrainScheme,
};

/// Largest tolerated deviation of a template AllWords class bias from 1/3.
const BIAS_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScopeManifest {
    pub scope: Scope,
    pub n_train: usize,
    pub n_test: usize,
    /// Per class F, M, NB.
    pub bias: [f64; 3],
    pub max_bias_deviation: f64,
    pub train_sha256: String,
    pub test_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub config_hash: String,
    pub mode: DatasetMode,
    pub n_base: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub scopes: Vec<ScopeManifest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAccuracy {
    pub scheme: TrainScheme,
    pub seed: u64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyManifest {
    pub config_hash: String,
    pub scope: Scope,
    /// Ordered by scheme, then seed.
    pub runs: Vec<RunAccuracy>,
}

impl AccuracyManifest {
    pub fn mean(&self, scheme: TrainScheme) -> Option<f64> {
        let v: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.scheme == scheme)
            .map(|r| r.test_accuracy)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    fs::write(path, bytes).map_err(io_error(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn file_checksum(path: &Path) -> Result<String, PipelineError> {
    Ok(crate::attribution::dump_checksum(&fs::read(path).map_err(io_error(path))?))
}

fn write_scope(
    ctx: &RunContext,
    bundle: &DatasetBundle,
    lexicon: &Lexicon,
    enforce_balance: bool,
) -> Result<ScopeManifest, PipelineError> {
    bundle.validate()?;
    let bias = bundle_bias(bundle, lexicon)?;
    let max_bias_deviation = bias.iter().map(|b| (b - 1.0 / 3.0).abs()).fold(0.0, f64::max);
    if enforce_balance && max_bias_deviation > BIAS_TOLERANCE {
        return Err(PipelineError::Validation(format!(
            "{} class bias {bias:?} deviates from 1/3 by {max_bias_deviation:e}",
            bundle.scope
        )));
    }
    let layout = ctx.layout();
    let dir = layout.data_dir(bundle.scope);
    fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    let train_path = layout.split_path(bundle.scope, "train");
    let test_path = layout.split_path(bundle.scope, "test");
    save_jsonl(&bundle.train, &train_path)?;
    save_jsonl(&bundle.test, &test_path)?;
    log::info!(
        "{}: {} train, {} test, bias {bias:?}",
        bundle.scope,
        bundle.train.len(),
        bundle.test.len()
    );
    Ok(ScopeManifest {
        scope: bundle.scope,
        n_train: bundle.train.len(),
        n_test: bundle.test.len(),
        bias,
        max_bias_deviation,
        train_sha256: file_checksum(&train_path)?,
        test_sha256: file_checksum(&test_path)?,
    })
}

/// Writes the train/test splits and a manifest with the class-bias audit.
/// Template mode produces both scopes and requires balanced AllWords bias.
pub fn cmd_generate(ctx: &RunContext) -> Result<DataManifest, PipelineError> {
    let d = &ctx.config.dataset;
    let lexicon = Lexicon::default();
    let scopes = match d.mode {
        DatasetMode::Template => [Scope::AllWords, Scope::SubjectOnly]
            .into_iter()
            .map(|scope| {
                let corpus = generate_template_corpus(d.n_base, d.seed, &lexicon, scope)?;
                let split = split_train_test(&corpus, d.train_fraction, d.seed)?;
                write_scope(ctx, &split, &lexicon, scope == Scope::AllWords)
            })
            .collect::<Result<Vec<_>, PipelineError>>()?,
        DatasetMode::Load => {
            let read = |p: &Option<std::path::PathBuf>| -> Result<Vec<LabeledSentence>, PipelineError> {
                Ok(load_jsonl(p.as_deref().expect("validated"))?)
            };
            let bundle = DatasetBundle::new(d.scope, read(&d.train_path)?, read(&d.test_path)?);
            vec![write_scope(ctx, &bundle, &lexicon, false)?]
        }
    };
    let manifest = DataManifest {
        config_hash: ctx.config.config_hash(),
        mode: d.mode,
        n_base: d.n_base,
        seed: d.seed,
        train_fraction: d.train_fraction,
        scopes,
    };
    write_json(&ctx.layout().data_manifest(), &manifest)?;
    Ok(manifest)
}

fn load_splits(ctx: &RunContext) -> Result<DatasetBundle, PipelineError> {
    let layout = ctx.layout();
    let scope = ctx.config.dataset.scope;
    let read = |split: &str| {
        let path = layout.split_path(scope, split);
        if !path.is_file() {
            return Err(PipelineError::Validation(format!(
                "{} is missing; run generate first",
                path.display()
            )));
        }
        Ok(load_jsonl(&path)?)
    };
    let bundle = DatasetBundle::new(scope, read("train")?, read("test")?);
    bundle.validate()?;
    Ok(bundle)
}

/// The evaluated test sentences, honoring `attribution.max_sentences`.
fn evaluated_sentences(ctx: &RunContext, bundle: &DatasetBundle) -> Vec<LabeledSentence> {
    let n = ctx.config.attribution.max_sentences.unwrap_or(usize::MAX);
    bundle.test.iter().take(n).cloned().collect()
}

fn initial_model(bundle: &DatasetBundle, seed: u64) -> OlaModel {
    OlaModel::init(Tokenizer::build(&bundle.train), seed)
}

/// Trains every (scheme, seed) run from the seed's initialization. Existing
/// checkpoints are kept unless forced.
pub fn cmd_train(ctx: &RunContext) -> Result<AccuracyManifest, PipelineError> {
    let bundle = load_splits(ctx)?;
    let layout = ctx.layout();
    let scope = bundle.scope;
    let t = &ctx.config.training;

    for &seed in &t.seeds {
        let path = layout.init_checkpoint(scope, seed);
        if ctx.force || !path.is_file() {
            let ckpt = Checkpoint {
                scheme: TrainScheme::ZS,
                seed,
                test_accuracy: None,
                model: initial_model(&bundle, seed),
            };
            write_file(&path, ckpt.to_json()?.as_bytes())?;
        }
    }

    let jobs: Vec<(TrainScheme, u64)> = t
        .schemes
        .iter()
        .flat_map(|&s| t.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let runs = ctx.pool()?.install(|| {
        jobs.par_iter()
            .map(|&(scheme, seed)| -> Result<RunAccuracy, PipelineError> {
                let path = layout.checkpoint(scope, scheme, seed);
                if !ctx.force && path.is_file() {
                    let ckpt = load_checkpoint(&path)?;
                    let test_accuracy = match ckpt.test_accuracy {
                        Some(a) => a,
                        None => evaluate_accuracy(&ckpt.model, &bundle.test)?,
                    };
                    log::info!("{scheme}/seed{seed}: kept existing checkpoint");
                    return Ok(RunAccuracy {
                        scheme,
                        seed,
                        test_accuracy,
                    });
                }
                let config = TrainConfig {
                    seed,
                    ..t.config.clone()
                };
                let out = train(initial_model(&bundle, seed), scheme, &config, &bundle)?;
                log::info!(
                    "{scheme}/seed{seed}: test accuracy {:.4} at epoch {}",
                    out.test_accuracy,
                    out.best_epoch
                );
                if let Some(dir) = path.parent() {
                    fs::create_dir_all(dir).map_err(io_error(dir))?;
                }
                save_checkpoint(
                    &Checkpoint {
                        scheme,
                        seed,
                        test_accuracy: Some(out.test_accuracy),
                        model: out.model,
                    },
                    &path,
                )?;
                Ok(RunAccuracy {
                    scheme,
                    seed,
                    test_accuracy: out.test_accuracy,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let manifest = AccuracyManifest {
        config_hash: ctx.config.config_hash(),
        scope,
        runs,
    };
    write_json(&layout.accuracy_manifest(scope), &manifest)?;
    Ok(manifest)
}

/// Dumps written and skipped by one attribution pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AttributeSummary {
    pub written: usize,
    pub skipped: usize,
}

fn fit_pattern(bundle: &DatasetBundle) -> Result<PatternTable, PipelineError> {
    let targets: Vec<usize> = bundle.train.iter().map(LabeledSentence::target).collect();
    Ok(pattern_variant(&tfidf_features(&bundle.train)?, &targets)?)
}

/// Explains the evaluated test sentences for every (scheme, seed, method).
/// Valid dumps are skipped unless forced; corrupt ones are recomputed.
pub fn cmd_attribute(ctx: &RunContext) -> Result<AttributeSummary, PipelineError> {
    let bundle = load_splits(ctx)?;
    let sentences = evaluated_sentences(ctx, &bundle);
    let layout = ctx.layout();
    let scope = bundle.scope;
    let a = &ctx.config.attribution;
    let pattern = if a.methods.contains(&Method::PatternVariant) {
        Some(fit_pattern(&bundle)?)
    } else {
        None
    };
    let pool = ctx.pool()?;
    let mut summary = AttributeSummary::default();
    for &scheme in &ctx.config.training.schemes {
        for &seed in &ctx.config.training.seeds {
            let pending: Vec<Method> = a
                .methods
                .iter()
                .copied()
                .filter(|&m| {
                    let path = layout.dump(scope, scheme, seed, m);
                    match verify_dump(&path) {
                        DumpStatus::Valid if !ctx.force => false,
                        DumpStatus::Corrupt(why) => {
                            log::warn!("{}: {why}; recomputing", path.display());
                            true
                        }
                        _ => true,
                    }
                })
                .collect();
            summary.skipped += a.methods.len() - pending.len();
            if pending.is_empty() {
                continue;
            }
            let path = layout.checkpoint(scope, scheme, seed);
            if !path.is_file() {
                return Err(PipelineError::Validation(format!(
                    "{} is missing; run train first",
                    path.display()
                )));
            }
            let model = load_checkpoint(&path)?.model;
            let options = MethodOptions {
                seed: a.options.seed.wrapping_add(seed),
                ..a.options.clone()
            };
            let explainer = AttributionContext {
                model: &model,
                scheme,
                seed,
                options: &options,
                pattern: pattern.as_ref(),
            };
            for method in pending {
                let maps = pool.install(|| {
                    sentences
                        .par_iter()
                        .map(|s| explainer.attribute(s, method))
                        .collect::<Result<Vec<_>, _>>()
                })?;
                write_dump(&layout.dump(scope, scheme, seed, method), &maps)?;
                log::info!("{scheme}/seed{seed}/{method}: {} sentences", maps.len());
                summary.written += 1;
            }
        }
    }
    Ok(summary)
}

/// Scores every dump of the configured grid and writes the report files.
/// Missing dumps fail with the full gap list; regeneration is byte-identical.
pub fn cmd_report(ctx: &RunContext) -> Result<BenchmarkReport, PipelineError> {
    let bundle = load_splits(ctx)?;
    let truth = GroundTruth::from_sentences(&evaluated_sentences(ctx, &bundle));
    let layout = ctx.layout();
    let scope = bundle.scope;
    let schemes = &ctx.config.training.schemes;
    let seeds = &ctx.config.training.seeds;
    let methods = &ctx.config.attribution.methods;

    let mut gaps = Vec::new();
    let mut explanations = Vec::new();
    for &scheme in schemes {
        for &seed in seeds {
            for &method in methods {
                let path = layout.dump(scope, scheme, seed, method);
                match verify_dump(&path) {
                    DumpStatus::Missing => {
                        gaps.push(format!("{scheme}/{method}/seed{seed}"));
                        continue;
                    }
                    DumpStatus::Corrupt(why) => {
                        return Err(PipelineError::Validation(format!("{}: {why}", path.display())));
                    }
                    DumpStatus::Valid => {}
                }
                for map in read_dump(&path)? {
                    if (map.scheme, map.method, map.seed) != (scheme, method, seed) {
                        return Err(PipelineError::Validation(format!(
                            "{} holds a {}/{}/seed{} record",
                            path.display(),
                            map.scheme,
                            map.method,
                            map.seed
                        )));
                    }
                    explanations.push(normalize_and_aggregate(&map, map.n_words)?);
                }
            }
        }
    }
    if !gaps.is_empty() {
        return Err(PipelineError::IncompleteGrid(gaps));
    }
    let metadata = ReportMetadata {
        scope,
        config_hash: ctx.config.config_hash(),
        baseline: ctx.config.evaluation.baseline,
    };
    let report = summarize(&explanations, &truth, schemes, methods, seeds, metadata)?;
    let dir = layout.report_dir(scope);
    write_file(&dir.join("report.csv"), report.to_csv().as_bytes())?;
    write_file(&dir.join("report.json"), report.to_json()?.as_bytes())?;
    write_file(&dir.join("trend.txt"), report.trend_text().as_bytes())?;
    if ctx.config.evaluation.svg {
        write_file(&dir.join("report.svg"), render_svg(&report).as_bytes())?;
    }
    Ok(report)
}
