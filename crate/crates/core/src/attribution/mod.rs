//! Token-level feature attributions.
//!
//! Every method explains the logit of the class the model predicts for the
//! unperturbed input. Gradient methods differentiate with respect to the
//! token embedding rows; surrogate methods perturb a sentence by replacing
//! token embeddings with the `[MASK]` embedding.

mod dump;
mod gradient;
pub mod linalg;
mod pattern;
mod surrogate;

pub use dump::{
    dump_checksum, parse_dump, read_dump, verify_dump, write_dump, AttributionRecord, DumpStatus, CHECKSUM_SUFFIX,
};
pub use gradient::gradient_attribution;
pub use pattern::{pattern_variant, tfidf_features, uniform_random_baseline, PatternTable, TfIdfMatrix};
pub use surrogate::surrogate_attribution;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabeledSentence;
use crate::model::{argmax, ModelError, OlaModel, TrainScheme, MASK, NUM_CLASSES};
use crate::numerics::{NodeId, NumericsError, Tape, Tensor};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("unknown attribution method {0:?}")]
    Method(String),
    #[error("{method} is not a {family} method")]
    WrongFamily { method: Method, family: &'static str },
    #[error("non-finite attribution for sentence {sentence_idx}")]
    NonFinite { sentence_idx: usize },
    #[error("invalid method options: {0}")]
    Options(String),
    #[error("target has no variance for class {class}")]
    DegenerateTarget { class: usize },
    #[error("tf-idf needs at least one sentence")]
    EmptyCorpus,
    #[error("pattern variant needs a fitted covariance table")]
    MissingPattern,
    #[error("attribution dump {path}: {message}")]
    Dump { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Saliency,
    InputXGradient,
    GuidedBackprop,
    IntegratedGradients,
    DeepLift,
    GradientShap,
    Lime,
    KernelShap,
    UniformRandom,
    PatternVariant,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Self::Saliency,
        Self::InputXGradient,
        Self::GuidedBackprop,
        Self::IntegratedGradients,
        Self::DeepLift,
        Self::GradientShap,
        Self::Lime,
        Self::KernelShap,
        Self::UniformRandom,
        Self::PatternVariant,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::Saliency => "saliency",
            Self::InputXGradient => "input_x_gradient",
            Self::GuidedBackprop => "guided_backprop",
            Self::IntegratedGradients => "integrated_gradients",
            Self::DeepLift => "deep_lift",
            Self::GradientShap => "gradient_shap",
            Self::Lime => "lime",
            Self::KernelShap => "kernel_shap",
            Self::UniformRandom => "uniform_random",
            Self::PatternVariant => "pattern_variant",
        }
    }

    pub fn is_gradient(self) -> bool {
        matches!(
            self,
            Self::Saliency
                | Self::InputXGradient
                | Self::GuidedBackprop
                | Self::IntegratedGradients
                | Self::DeepLift
                | Self::GradientShap
        )
    }

    pub fn is_surrogate(self) -> bool {
        matches!(self, Self::Lime | Self::KernelShap)
    }

    fn stream_code(self) -> u64 {
        Self::ALL.iter().position(|m| *m == self).expect("listed") as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = AttributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| AttributionError::Method(s.to_string()))
    }
}

/// Reference input for path and difference based methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    ZeroEmbedding,
    #[default]
    MaskToken,
}

fn default_ig_steps() -> usize {
    64
}
fn default_shap_samples() -> usize {
    2048
}
fn default_lime_samples() -> usize {
    1000
}
fn default_gradshap_samples() -> usize {
    20
}
fn default_gradshap_sigma() -> f64 {
    0.1
}
fn default_lime_width() -> Option<f64> {
    Some(25.0)
}
fn default_lime_alpha() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodOptions {
    #[serde(default)]
    pub baseline: Baseline,
    #[serde(default = "default_ig_steps")]
    pub ig_steps: usize,
    #[serde(default = "default_shap_samples")]
    pub shap_samples: usize,
    #[serde(default = "default_lime_samples")]
    pub lime_samples: usize,
    /// Number of (baseline, alpha, noise) draws per sentence.
    #[serde(default = "default_gradshap_samples")]
    pub gradshap_samples: usize,
    #[serde(default = "default_gradshap_sigma")]
    pub gradshap_sigma: f64,
    /// Exponential kernel width over cosine distance scaled by 100;
    /// `None` weights every sample equally.
    #[serde(default = "default_lime_width")]
    pub lime_kernel_width: Option<f64>,
    #[serde(default = "default_lime_alpha")]
    pub lime_ridge_alpha: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for MethodOptions {
    fn default() -> Self {
        Self {
            baseline: Baseline::default(),
            ig_steps: default_ig_steps(),
            shap_samples: default_shap_samples(),
            lime_samples: default_lime_samples(),
            gradshap_samples: default_gradshap_samples(),
            gradshap_sigma: default_gradshap_sigma(),
            lime_kernel_width: default_lime_width(),
            lime_ridge_alpha: default_lime_alpha(),
            seed: 0,
        }
    }
}

impl MethodOptions {
    pub fn validate(&self) -> Result<(), AttributionError> {
        let fail = |m: &str| Err(AttributionError::Options(m.to_string()));
        if self.ig_steps == 0 || self.shap_samples == 0 || self.lime_samples == 0 || self.gradshap_samples == 0 {
            return fail("sample and step counts must be positive");
        }
        if !(self.gradshap_sigma >= 0.0 && self.gradshap_sigma.is_finite()) {
            return fail("gradshap_sigma must be finite and non-negative");
        }
        if let Some(w) = self.lime_kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return fail("lime_kernel_width must be positive");
            }
        }
        if !(self.lime_ridge_alpha >= 0.0) {
            return fail("lime_ridge_alpha must be non-negative");
        }
        Ok(())
    }

    /// Sample or step count the method consumes, recorded for provenance.
    pub fn samples_for(&self, method: Method) -> usize {
        match method {
            Method::IntegratedGradients => self.ig_steps,
            Method::GradientShap => self.gradshap_samples,
            Method::Lime => self.lime_samples,
            Method::KernelShap => self.shap_samples,
            _ => 1,
        }
    }
}

/// Identifies one evaluated sentence: the variants of a base sentence share
/// `sentence_idx` and differ in `label`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Task {
    pub sentence_idx: usize,
    pub label: usize,
}

impl Task {
    pub fn new(sentence_idx: usize, label: usize) -> Self {
        Self { sentence_idx, label }
    }

    pub fn of(sentence: &LabeledSentence) -> Self {
        Self::new(sentence.sentence_idx, sentence.target())
    }
}

/// Per-task random stream: one per (seed, sentence, label, method).
pub(crate) fn task_rng(seed: u64, task: Task, method: Method) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((task.sentence_idx as u64) << 8) | ((task.label as u64) << 4) | method.stream_code());
    rng
}

/// A differentiable classifier over token-embedding matrices.
pub trait Explainable: Sync {
    fn embed(&self, ids: &[usize]) -> Result<Tensor, AttributionError>;

    fn mask_id(&self) -> usize;

    fn logits(&self, embeddings: &Tensor) -> Result<Vec<f64>, AttributionError>;

    /// Appends the forward graph; returns a `[1, classes]` logit node.
    fn record(&self, tape: &mut Tape, embeddings: NodeId) -> Result<NodeId, AttributionError>;

    /// Target-class logits for variants of `embeddings` in which row `t` is
    /// replaced by row `t` of `replacement` wherever `keep[t]` is false.
    fn substitution_scores(
        &self,
        embeddings: &Tensor,
        replacement: &Tensor,
        keeps: &[Vec<bool>],
        target: usize,
    ) -> Result<Vec<f64>, AttributionError> {
        let (l, d) = embeddings.dims2()?;
        keeps
            .iter()
            .map(|keep| {
                let mut data = embeddings.data().to_vec();
                for (t, &k) in keep.iter().enumerate() {
                    if !k {
                        data[t * d..(t + 1) * d].copy_from_slice(replacement.row_slice(t));
                    }
                }
                Ok(self.logits(&Tensor::matrix(l, d, data))?[target])
            })
            .collect()
    }

    /// Reference embeddings for a sentence of `len` tokens.
    fn baseline(&self, kind: Baseline, len: usize, dim: usize) -> Result<Tensor, AttributionError> {
        match kind {
            Baseline::ZeroEmbedding => Ok(Tensor::zeros(&[len, dim])),
            Baseline::MaskToken => self.embed(&vec![self.mask_id(); len]),
        }
    }

    /// Arg-max class of the unperturbed input.
    fn predicted_class(&self, embeddings: &Tensor) -> Result<usize, AttributionError> {
        Ok(argmax(&self.logits(embeddings)?))
    }
}

impl Explainable for OlaModel {
    fn embed(&self, ids: &[usize]) -> Result<Tensor, AttributionError> {
        Ok(OlaModel::embed(self, ids)?)
    }

    fn mask_id(&self) -> usize {
        MASK
    }

    fn logits(&self, embeddings: &Tensor) -> Result<Vec<f64>, AttributionError> {
        Ok(self.logits_from_embeddings(embeddings)?.to_vec())
    }

    fn record(&self, tape: &mut Tape, embeddings: NodeId) -> Result<NodeId, AttributionError> {
        let (l, _) = tape.value(embeddings).dims2()?;
        Ok(self.graph(tape, embeddings, None, &vec![false; l])?.1)
    }

    fn substitution_scores(
        &self,
        embeddings: &Tensor,
        replacement: &Tensor,
        keeps: &[Vec<bool>],
        target: usize,
    ) -> Result<Vec<f64>, AttributionError> {
        debug_assert!(target < NUM_CLASSES);
        Ok(self
            .substitution_logits(embeddings, replacement, keeps)?
            .into_iter()
            .map(|z| z[target])
            .collect())
    }
}

/// Raw scores for one sentence, before any word-level aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub method: Method,
    /// Class whose logit was explained.
    pub target: usize,
    pub token_scores: Vec<f64>,
}

/// Explanation plus the bookkeeping needed to score it later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub method: Method,
    pub scheme: TrainScheme,
    pub seed: u64,
    pub sentence_idx: usize,
    /// Gold class of the sentence.
    pub label: usize,
    /// Class whose logit was explained.
    pub target: usize,
    pub token_scores: Vec<f64>,
    /// Word index of every token.
    pub alignment: Vec<usize>,
    pub n_words: usize,
    pub samples: usize,
}

impl AttributionMap {
    pub fn validate(&self) -> Result<(), AttributionError> {
        let bad = |message: String| {
            Err(AttributionError::Dump {
                path: format!("sentence {}", self.sentence_idx),
                message,
            })
        };
        if self.token_scores.len() != self.alignment.len() {
            return bad(format!(
                "{} scores for {} tokens",
                self.token_scores.len(),
                self.alignment.len()
            ));
        }
        if self.token_scores.iter().any(|v| !v.is_finite()) {
            return Err(AttributionError::NonFinite {
                sentence_idx: self.sentence_idx,
            });
        }
        Ok(())
    }
}

/// Shared inputs for explaining many sentences with one trained model.
pub struct AttributionContext<'a> {
    pub model: &'a OlaModel,
    pub scheme: TrainScheme,
    pub seed: u64,
    pub options: &'a MethodOptions,
    /// Needed only for [`Method::PatternVariant`].
    pub pattern: Option<&'a PatternTable>,
}

impl AttributionContext<'_> {
    /// Runs `method` on one sentence. Random streams derive from
    /// `(options.seed, sentence_idx, label, method)`.
    pub fn attribute(&self, sentence: &LabeledSentence, method: Method) -> Result<AttributionMap, AttributionError> {
        let tokens = self.model.tokenizer.tokenize(sentence)?;
        let task = Task::of(sentence);
        let explanation = match method {
            m if m.is_gradient() => gradient_attribution(self.model, &tokens.ids, task, m, self.options)?,
            m if m.is_surrogate() => surrogate_attribution(self.model, &tokens.ids, task, m, self.options)?,
            Method::UniformRandom => {
                let emb = Explainable::embed(self.model, &tokens.ids)?;
                Explanation {
                    method,
                    target: self.model.predicted_class(&emb)?,
                    token_scores: uniform_random_baseline(&tokens.alignment, tokens.n_words, self.options.seed, task),
                }
            }
            Method::PatternVariant => {
                let table = self.pattern.ok_or(AttributionError::MissingPattern)?;
                let emb = Explainable::embed(self.model, &tokens.ids)?;
                Explanation {
                    method,
                    target: self.model.predicted_class(&emb)?,
                    token_scores: table.token_scores(&sentence.sentence, &tokens.alignment),
                }
            }
            _ => unreachable!("every method belongs to one family"),
        };
        let map = AttributionMap {
            method,
            scheme: self.scheme,
            seed: self.seed,
            sentence_idx: task.sentence_idx,
            label: task.label,
            target: explanation.target,
            token_scores: explanation.token_scores,
            alignment: tokens.alignment,
            n_words: tokens.n_words,
            samples: self.options.samples_for(method),
        };
        map.validate()?;
        Ok(map)
    }
}

pub(crate) fn check_finite(scores: &[f64], task: Task) -> Result<(), AttributionError> {
    if scores.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AttributionError::NonFinite {
            sentence_idx: task.sentence_idx,
        })
    }
}

#[cfg(test)]
pub(crate) mod toy {
    //! Closed-form scorers used as oracles by the method tests.

    use super::*;

    /// `logit_c(E) = sum_t w_c . e_t + bias_c`, with a lookup table.
    pub struct LinearScorer {
        pub table: Tensor,
        pub weights: Tensor,
        pub bias: Vec<f64>,
    }

    impl LinearScorer {
        pub fn new(vocab: usize, dim: usize, classes: usize, seed: u64) -> Self {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut gen = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
            Self {
                table: Tensor::matrix(vocab, dim, gen(vocab * dim)),
                weights: Tensor::matrix(dim, classes, gen(dim * classes)),
                bias: gen(classes),
            }
        }
    }

    impl Explainable for LinearScorer {
        fn embed(&self, ids: &[usize]) -> Result<Tensor, AttributionError> {
            let mut tape = Tape::new();
            let t = tape.constant(self.table.clone())?;
            let e = tape.embedding_lookup(t, ids)?;
            Ok(tape.value(e).clone())
        }

        fn mask_id(&self) -> usize {
            0
        }

        fn logits(&self, embeddings: &Tensor) -> Result<Vec<f64>, AttributionError> {
            let z = embeddings.matmul(&self.weights)?;
            let (l, c) = z.dims2()?;
            Ok((0..c)
                .map(|k| (0..l).map(|r| z.get2(r, k)).sum::<f64>() + self.bias[k])
                .collect())
        }

        fn record(&self, tape: &mut Tape, embeddings: NodeId) -> Result<NodeId, AttributionError> {
            let w = tape.constant(self.weights.clone())?;
            let b = tape.constant(Tensor::row(self.bias.clone()))?;
            let z = tape.matmul(embeddings, w)?;
            let s = tape.sum(z, crate::numerics::Axis::Rows)?;
            Ok(tape.add(s, b)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_ids_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::from_str(m.id()).unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.id()));
        }
        assert!(matches!(Method::from_str("attention_rollout"), Err(AttributionError::Method(_))));
    }

    #[test]
    fn families_partition_methods() {
        let gradient = Method::ALL.iter().filter(|m| m.is_gradient()).count();
        let surrogate = Method::ALL.iter().filter(|m| m.is_surrogate()).count();
        assert_eq!((gradient, surrogate), (6, 2));
    }

    #[test]
    fn options_defaults_and_validation() {
        let o = MethodOptions::default();
        o.validate().unwrap();
        assert_eq!((o.ig_steps, o.shap_samples, o.lime_samples, o.gradshap_samples), (64, 2048, 1000, 20));
        assert_eq!(o.baseline, Baseline::MaskToken);
        assert!(MethodOptions { ig_steps: 0, ..o.clone() }.validate().is_err());
        assert!(MethodOptions { gradshap_sigma: -0.1, ..o.clone() }.validate().is_err());
        let parsed: MethodOptions = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, o);
    }

    #[test]
    fn task_streams_differ() {
        use rand::Rng;
        let t = Task::new(0, 0);
        let a: u64 = task_rng(1, t, Method::Lime).random();
        let b: u64 = task_rng(1, Task::new(1, 0), Method::Lime).random();
        let c: u64 = task_rng(1, t, Method::KernelShap).random();
        let d: u64 = task_rng(1, Task::new(0, 2), Method::Lime).random();
        let a2: u64 = task_rng(1, t, Method::Lime).random();
        assert_eq!(a, a2);
        assert!(a != b && a != c && a != d);
    }
}
