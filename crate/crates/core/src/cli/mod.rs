//! End-to-end pipeline driven by one JSON run configuration.
//!
//! Output layout under the output root:
//!
//! ```text
//! data/{gender_all,gender_subj}/{train,test}.jsonl
//! data/data_config.json
//! checkpoints/{scope}/init/seed{s}.json
//! checkpoints/{scope}/{scheme}/seed{s}.json
//! checkpoints/{scope}/accuracy.json
//! attributions/{scope}/{scheme}/seed{s}/{method}.jsonl(.sha256)
//! reports/{scope}/report.{csv,json,svg}, trend.txt
//! ```

mod commands;

pub use commands::{
    cmd_attribute, cmd_generate, cmd_report, cmd_train, AccuracyManifest, AttributeSummary, DataManifest, RunAccuracy,
    ScopeManifest,
};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{dump_checksum, AttributionError, Method, MethodOptions};
use crate::corpus::{CorpusError, Scope};
use crate::evaluation::EvaluationError;
use crate::model::{ModelError, TrainConfig, TrainScheme};

/// Environment variable that overrides `evaluation.out_dir`.
pub const OUT_ENV: &str = "ATTRIBENCH_OUT";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("incomplete grid; missing: {}", .0.join(", "))]
    IncompleteGrid(Vec<String>),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Evaluation(EvaluationError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<EvaluationError> for PipelineError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::IncompleteGrid(gaps) => Self::IncompleteGrid(gaps),
            other => Self::Evaluation(other),
        }
    }
}

impl PipelineError {
    /// 2 for an incomplete grid, 1 for every other failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::IncompleteGrid(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    /// Generate both scopes from the bundled templates.
    #[default]
    Template,
    /// Pass through existing JSONL splits for `scope`.
    Load,
}

fn default_n_base() -> usize {
    1610
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Task used by train, attribute and report.
    pub scope: Scope,
    #[serde(default)]
    pub mode: DatasetMode,
    #[serde(default = "default_n_base")]
    pub n_base: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub train_path: Option<PathBuf>,
    #[serde(default)]
    pub test_path: Option<PathBuf>,
}

fn default_schemes() -> Vec<TrainScheme> {
    TrainScheme::LADDER.to_vec()
}

fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_schemes")]
    pub schemes: Vec<TrainScheme>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// `config.seed` is replaced by each entry of `seeds`.
    #[serde(default)]
    pub config: TrainConfig,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            schemes: default_schemes(),
            seeds: default_seeds(),
            config: TrainConfig::default(),
        }
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionSection {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// `options.seed` is offset by the training seed of each run.
    #[serde(default)]
    pub options: MethodOptions,
    /// Explain only the first this-many test sentences.
    #[serde(default)]
    pub max_sentences: Option<usize>,
}

impl Default for AttributionSection {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            options: MethodOptions::default(),
            max_sentences: None,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_svg() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default)]
    pub baseline: TrainScheme,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_svg")]
    pub svg: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            baseline: TrainScheme::ZS,
            out_dir: default_out_dir(),
            svg: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub attribution: AttributionSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

impl RunConfig {
    /// Template-mode defaults for `scope`.
    pub fn template(scope: Scope) -> Self {
        Self {
            dataset: DatasetSection {
                scope,
                mode: DatasetMode::Template,
                n_base: default_n_base(),
                seed: 0,
                train_fraction: default_train_fraction(),
                train_path: None,
                test_path: None,
            },
            training: TrainingSection::default(),
            attribution: AttributionSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let config: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::from_json(&fs::read_to_string(path).map_err(io_error(path))?)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let d = &self.dataset;
        match d.mode {
            DatasetMode::Template if d.n_base == 0 => return bad("dataset.n_base must be positive".into()),
            DatasetMode::Load => {
                for (name, path) in [("train_path", &d.train_path), ("test_path", &d.test_path)] {
                    match path {
                        None => return bad(format!("load mode needs dataset.{name}")),
                        Some(p) if !p.is_file() => return bad(format!("dataset.{name} {} does not exist", p.display())),
                        Some(_) => {}
                    }
                }
            }
            DatasetMode::Template => {}
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return bad(format!("dataset.train_fraction {} outside (0, 1)", d.train_fraction));
        }
        let t = &self.training;
        if t.seeds.is_empty() || t.schemes.is_empty() {
            return bad("training.seeds and training.schemes must be non-empty".into());
        }
        if has_duplicates(&t.seeds) || has_duplicates(&t.schemes) {
            return bad("training.seeds and training.schemes must not repeat".into());
        }
        t.config.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let a = &self.attribution;
        if a.methods.is_empty() || has_duplicates(&a.methods) {
            return bad("attribution.methods must be non-empty without repeats".into());
        }
        if a.max_sentences == Some(0) {
            return bad("attribution.max_sentences must be positive".into());
        }
        a.options.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring where outputs go.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.evaluation.out_dir = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("config serializes");
        dump_checksum(text.as_bytes())
    }

    pub fn layout(&self) -> Layout {
        Layout {
            root: self.evaluation.out_dir.clone(),
        }
    }
}

fn has_duplicates<T: Ord + Clone>(items: &[T]) -> bool {
    let mut v = items.to_vec();
    v.sort();
    v.windows(2).any(|w| w[0] == w[1])
}

/// Paths of every pipeline artifact under one output root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn data_dir(&self, scope: Scope) -> PathBuf {
        self.root.join("data").join(scope.dir_name())
    }

    pub fn split_path(&self, scope: Scope, split: &str) -> PathBuf {
        self.data_dir(scope).join(format!("{split}.jsonl"))
    }

    pub fn data_manifest(&self) -> PathBuf {
        self.root.join("data").join("data_config.json")
    }

    pub fn init_checkpoint(&self, scope: Scope, seed: u64) -> PathBuf {
        self.root.join("checkpoints").join(scope.dir_name()).join("init").join(format!("seed{seed}.json"))
    }

    pub fn checkpoint(&self, scope: Scope, scheme: TrainScheme, seed: u64) -> PathBuf {
        self.root
            .join("checkpoints")
            .join(scope.dir_name())
            .join(scheme.as_str())
            .join(format!("seed{seed}.json"))
    }

    pub fn accuracy_manifest(&self, scope: Scope) -> PathBuf {
        self.root.join("checkpoints").join(scope.dir_name()).join("accuracy.json")
    }

    pub fn dump(&self, scope: Scope, scheme: TrainScheme, seed: u64, method: Method) -> PathBuf {
        self.root
            .join("attributions")
            .join(scope.dir_name())
            .join(scheme.as_str())
            .join(format!("seed{seed}"))
            .join(format!("{}.jsonl", method.id()))
    }

    pub fn report_dir(&self, scope: Scope) -> PathBuf {
        self.root.join("reports").join(scope.dir_name())
    }
}

/// Command-line overrides applied on top of a loaded configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    /// Recompute outputs that already exist.
    pub force: bool,
}

/// Execution settings shared by every command.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub config: RunConfig,
    pub workers: Option<usize>,
    pub force: bool,
}

impl RunContext {
    /// Precedence for the output root: flag, then environment, then file.
    pub fn new(mut config: RunConfig, overrides: Overrides, env_out: Option<PathBuf>) -> Result<Self, PipelineError> {
        if let Some(out) = overrides.out_dir.or(env_out) {
            config.evaluation.out_dir = out;
        }
        if overrides.workers == Some(0) {
            return Err(PipelineError::Config("--workers must be positive".into()));
        }
        config.validate()?;
        Ok(Self {
            config,
            workers: overrides.workers,
            force: overrides.force,
        })
    }

    pub fn layout(&self) -> Layout {
        self.config.layout()
    }

    pub(crate) fn pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            builder = builder.num_threads(n);
        }
        builder.build().map_err(|e| PipelineError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_json(r#"{"dataset": {"scope": "all_words"}}"#).unwrap();
        assert_eq!(c.dataset.n_base, 1610);
        assert_eq!(c.training.seeds, [1, 2, 3, 4, 5]);
        assert_eq!(c.training.schemes, TrainScheme::LADDER);
        assert_eq!(c.attribution.methods.len(), 10);
        assert_eq!(c.evaluation.baseline, TrainScheme::ZS);
        assert_eq!(c, RunConfig::template(Scope::AllWords));
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"dataset": {"scope": "all_words"}, "extra": 1}"#,
            r#"{"dataset": {"scope": "all_words"}, "training": {"seeds": []}}"#,
            r#"{"dataset": {"scope": "all_words"}, "training": {"schemes": ["ZS", "ZS"]}}"#,
            r#"{"dataset": {"scope": "all_words", "mode": "load"}}"#,
            r#"{"dataset": {"scope": "all_words", "train_fraction": 1.0}}"#,
            r#"{"dataset": {"scope": "all_words"}, "attribution": {"methods": ["nope"]}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(text), Err(PipelineError::Config(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_output_root_only() {
        let a = RunConfig::template(Scope::AllWords);
        let mut b = a.clone();
        b.evaluation.out_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.config_hash(), b.config_hash());
        b.dataset.seed = 9;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn output_root_precedence() {
        let c = RunConfig::template(Scope::AllWords);
        let flag = Overrides {
            out_dir: Some("flag".into()),
            ..Overrides::default()
        };
        let ctx = RunContext::new(c.clone(), flag, Some("env".into())).unwrap();
        assert_eq!(ctx.layout().root, PathBuf::from("flag"));
        let ctx = RunContext::new(c.clone(), Overrides::default(), Some("env".into())).unwrap();
        assert_eq!(ctx.layout().root, PathBuf::from("env"));
        let ctx = RunContext::new(c, Overrides::default(), None).unwrap();
        assert_eq!(ctx.layout().root, PathBuf::from("out"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::IncompleteGrid(vec![]).exit_code(), 2);
        assert_eq!(PipelineError::from(EvaluationError::IncompleteGrid(vec![])).exit_code(), 2);
        assert_eq!(PipelineError::Validation("x".into()).exit_code(), 1);
    }
}
