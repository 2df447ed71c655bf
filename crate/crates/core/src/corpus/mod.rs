//! Gender-controlled corpora with word-level ground-truth masks.
//!
//! A base sentence is annotated once and expanded into a female, male and
//! non-binary variant. Every word that the expansion rewrites is flagged in
//! the ground-truth mask; those are the only words associated with the class
//! label by construction.

mod bias;
mod io;
mod lexicon;
mod split;
mod templates;
mod variant;

pub use bias::{bias_score, bundle_bias, cooccurrence, sentence_cooccurrence, split_vocabulary};
pub use io::{load_jsonl, parse_jsonl, save_jsonl, to_jsonl_line, write_jsonl};
pub use lexicon::{Lexicon, LexiconRule, Role, DEFAULT_LEXICON};
pub use split::split_train_test;
pub use templates::{expand_bases, generate_base_sentences, generate_template_corpus};
pub use variant::{apply_gender_variant, verb_agreement, Annotation, AnnotatedSentence, AnnotatedWord};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sentence {sentence_idx}: {reason}")]
    Validation { sentence_idx: usize, reason: String },
    #[error("no lexicon rule for {role:?} word {word:?}")]
    UnknownLexeme { word: String, role: Role },
    #[error("agreement: {0}")]
    Agreement(String),
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("corpus must contain at least one base sentence")]
    EmptyCorpus,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("co-occurrence bias undefined: every class has zero co-occurrences")]
    UndefinedBias,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three grammatical gender forms; the discriminant is the class id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GenderVariant {
    Female = 0,
    Male = 1,
    NonBinary = 2,
}

impl GenderVariant {
    pub const ALL: [GenderVariant; 3] = [GenderVariant::Female, GenderVariant::Male, GenderVariant::NonBinary];

    pub fn class_id(self) -> usize {
        self as usize
    }

    pub fn from_class_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn short(self) -> &'static str {
        match self {
            GenderVariant::Female => "F",
            GenderVariant::Male => "M",
            GenderVariant::NonBinary => "NB",
        }
    }
}

impl fmt::Display for GenderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Which gendered words a variant rewrites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Only words tied to the grammatical subject.
    SubjectOnly,
    /// Every gendered word.
    AllWords,
}

impl Scope {
    /// Directory name used by the on-disk layout.
    pub fn dir_name(self) -> &'static str {
        match self {
            Scope::SubjectOnly => "gender_subj",
            Scope::AllWords => "gender_all",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSentence {
    pub sentence: Vec<String>,
    pub ground_truth: Vec<bool>,
    pub sentence_idx: usize,
    pub variant: GenderVariant,
}

impl LabeledSentence {
    pub fn target(&self) -> usize {
        self.variant.class_id()
    }

    pub fn len(&self) -> usize {
        self.sentence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentence.is_empty()
    }

    pub fn flagged_count(&self) -> usize {
        self.ground_truth.iter().filter(|&&f| f).count()
    }

    pub fn lowercase_words(&self) -> impl Iterator<Item = String> + '_ {
        self.sentence.iter().map(|w| w.to_lowercase())
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |reason: String| CorpusError::Validation {
            sentence_idx: self.sentence_idx,
            reason,
        };
        if self.sentence.len() != self.ground_truth.len() {
            return Err(fail(format!(
                "{} words but {} ground-truth flags",
                self.sentence.len(),
                self.ground_truth.len()
            )));
        }
        if self.sentence.is_empty() {
            return Err(fail("empty sentence".into()));
        }
        if !self.ground_truth.iter().any(|&f| f) {
            return Err(fail("no word is flagged".into()));
        }
        Ok(())
    }
}

/// A corpus for one manipulation scope. Before splitting, every sentence
/// lives in `train` and `test` is empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetBundle {
    pub scope: Scope,
    pub train: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
    pub vocabulary: BTreeSet<String>,
}

impl DatasetBundle {
    pub fn new(scope: Scope, train: Vec<LabeledSentence>, test: Vec<LabeledSentence>) -> Self {
        let vocabulary = train
            .iter()
            .chain(&test)
            .flat_map(|s| s.lowercase_words())
            .collect();
        Self {
            scope,
            train,
            test,
            vocabulary,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &LabeledSentence> {
        self.train.iter().chain(&self.test)
    }

    /// Sentences of each class, indexed by class id.
    pub fn by_class(sentences: &[LabeledSentence]) -> [Vec<&LabeledSentence>; 3] {
        let mut out: [Vec<&LabeledSentence>; 3] = Default::default();
        for s in sentences {
            out[s.target()].push(s);
        }
        out
    }

    /// Checks split disjointness and per-split class balance.
    pub fn validate(&self) -> Result<(), CorpusError> {
        for s in self.all() {
            s.validate()?;
        }
        let train_ids: BTreeSet<usize> = self.train.iter().map(|s| s.sentence_idx).collect();
        if let Some(s) = self.test.iter().find(|s| train_ids.contains(&s.sentence_idx)) {
            return Err(CorpusError::Validation {
                sentence_idx: s.sentence_idx,
                reason: "base sentence appears in both train and test".into(),
            });
        }
        for (name, split) in [("train", &self.train), ("test", &self.test)] {
            let counts = Self::by_class(split).map(|v| v.len());
            if counts[0] != counts[1] || counts[1] != counts[2] {
                return Err(CorpusError::Argument(format!("{name} split is unbalanced: {counts:?}")));
            }
        }
        Ok(())
    }
}
