//! Word-level scoring of attributions against ground-truth masks.
//!
//! Token scores are made non-negative by absolute value, summed per word and
//! normalized to unit mass. Mass accuracy is the share of that mass falling
//! on ground-truth words.

mod report;
mod svg;

pub use report::{
    summarize, trend_ladder, BenchmarkReport, CellSummary, GroundTruth, ReportMetadata, SeedSummary, TrendRow,
    CSV_HEADER,
};
pub use svg::render_svg;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{AttributionMap, Method, Task};
use crate::model::TrainScheme;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("alignment references word {word} but the sentence has {n_words} words")]
    Alignment { word: usize, n_words: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("relative mass accuracy undefined for baseline mass accuracy {0}")]
    UndefinedRma(f64),
    #[error("incomplete grid; missing: {}", .0.join(", "))]
    IncompleteGrid(Vec<String>),
}

/// Normalized per-word attribution mass for one sentence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordExplanation {
    /// Non-negative, sums to 1.
    pub word_scores: Vec<f64>,
    pub sentence_idx: usize,
    pub label: usize,
    pub method: Method,
    pub scheme: TrainScheme,
    pub seed: u64,
}

impl WordExplanation {
    pub fn task(&self) -> Task {
        Task::new(self.sentence_idx, self.label)
    }
}

/// Absolute token scores summed per word and divided by their total. An
/// all-zero map becomes uniform.
pub fn normalize_and_aggregate(map: &AttributionMap, n_words: usize) -> Result<WordExplanation, EvaluationError> {
    if n_words == 0 {
        return Err(EvaluationError::Contract("sentence has no words".into()));
    }
    if map.alignment.len() != map.token_scores.len() {
        return Err(EvaluationError::Contract(format!(
            "{} token scores for {} aligned tokens",
            map.token_scores.len(),
            map.alignment.len()
        )));
    }
    let mut words = vec![0.0; n_words];
    for (&w, &s) in map.alignment.iter().zip(&map.token_scores) {
        if w >= n_words {
            return Err(EvaluationError::Alignment { word: w, n_words });
        }
        if !s.is_finite() {
            return Err(EvaluationError::Contract(format!(
                "non-finite score in sentence {}",
                map.sentence_idx
            )));
        }
        words[w] += s.abs();
    }
    let total: f64 = words.iter().sum();
    if total > 0.0 {
        words.iter_mut().for_each(|v| *v /= total);
    } else {
        words.fill(1.0 / n_words as f64);
    }
    Ok(WordExplanation {
        word_scores: words,
        sentence_idx: map.sentence_idx,
        label: map.label,
        method: map.method,
        scheme: map.scheme,
        seed: map.seed,
    })
}

/// `sum_j s_j h_j`.
pub fn mass_accuracy(ground_truth: &[bool], explanation: &WordExplanation) -> Result<f64, EvaluationError> {
    if ground_truth.len() != explanation.word_scores.len() {
        return Err(EvaluationError::Contract(format!(
            "{} ground-truth words for {} scored words",
            ground_truth.len(),
            explanation.word_scores.len()
        )));
    }
    let ma: f64 = ground_truth
        .iter()
        .zip(&explanation.word_scores)
        .filter(|(h, _)| **h)
        .map(|(_, s)| s)
        .sum();
    // Rounding in the normalization can push a full-mass sum past 1.
    Ok(ma.min(1.0))
}

pub fn relative_mass_accuracy(ma: f64, ma_baseline: f64) -> Result<f64, EvaluationError> {
    if !(ma_baseline > 0.0) || !ma_baseline.is_finite() {
        return Err(EvaluationError::UndefinedRma(ma_baseline));
    }
    Ok(ma / ma_baseline)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn map(scores: Vec<f64>, alignment: Vec<usize>) -> AttributionMap {
        AttributionMap {
            method: Method::Saliency,
            scheme: TrainScheme::C,
            seed: 1,
            sentence_idx: 0,
            label: 0,
            target: 0,
            n_words: alignment.iter().max().map_or(0, |m| m + 1),
            token_scores: scores,
            alignment,
            samples: 1,
        }
    }

    fn words(scores: Vec<f64>) -> WordExplanation {
        let n = scores.len();
        normalize_and_aggregate(&map(scores, (0..n).collect()), n).unwrap()
    }

    #[test]
    fn subword_pieces_merge_into_their_word() {
        let e = normalize_and_aggregate(&map(vec![0.2, 0.3, 0.5], vec![0, 0, 1]), 2).unwrap();
        assert_eq!(e.word_scores, [0.5, 0.5]);
    }

    #[test]
    fn zero_scores_become_uniform() {
        assert_eq!(words(vec![0.0; 4]).word_scores, [0.25; 4]);
    }

    #[test]
    fn signed_scores_use_magnitude() {
        assert_eq!(words(vec![-0.3, 0.3]).word_scores, [0.5, 0.5]);
    }

    #[test]
    fn alignment_out_of_range() {
        let r = normalize_and_aggregate(&map(vec![1.0, 1.0], vec![0, 2]), 2);
        assert!(matches!(r, Err(EvaluationError::Alignment { word: 2, n_words: 2 })));
    }

    #[test]
    fn worked_mass_accuracy_example() {
        let e = words(vec![0.9, 0.0, 0.0, 0.1]);
        assert_eq!(mass_accuracy(&[true, true, false, false], &e).unwrap(), 0.9);
    }

    #[test]
    fn indicator_explanation_scores_one() {
        let h = [false, true, false, true, true];
        let e = words(h.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
        assert_eq!(mass_accuracy(&h, &e).unwrap(), 1.0);
    }

    #[test]
    fn uniform_explanation_scores_k_over_d() {
        let e = words(vec![0.0; 5]);
        let ma = mass_accuracy(&[true, false, true, false, false], &e).unwrap();
        assert!((ma - 0.4).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        assert!(matches!(
            mass_accuracy(&[true], &words(vec![1.0, 2.0])),
            Err(EvaluationError::Contract(_))
        ));
    }

    #[test]
    fn rma_arithmetic() {
        assert_eq!(relative_mass_accuracy(0.37, 0.37).unwrap(), 1.0);
        assert_eq!(relative_mass_accuracy(0.4, 0.2).unwrap(), 2.0);
        assert!(matches!(
            relative_mass_accuracy(0.4, 0.0),
            Err(EvaluationError::UndefinedRma(_))
        ));
    }
}
