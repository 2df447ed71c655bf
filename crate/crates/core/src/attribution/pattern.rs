//! Model-independent references: uniform noise and the covariance pattern
//! between tf-idf word features and the class target.

use std::collections::BTreeMap;

use rand::distr::Open01;
use rand::Rng;

use super::{task_rng, AttributionError, Method, Task};
use crate::corpus::LabeledSentence;
use crate::model::NUM_CLASSES;

/// Spreads one value per word evenly over that word's tokens, so the
/// word-level sum equals the word value.
fn spread_over_tokens(word_values: &[f64], alignment: &[usize]) -> Vec<f64> {
    let mut pieces = vec![0usize; word_values.len()];
    for &w in alignment {
        pieces[w] += 1;
    }
    alignment.iter().map(|&w| word_values[w] / pieces[w] as f64).collect()
}

/// One `U(0, 1)` draw per word (open interval), deterministic in
/// `(seed, task)`. Multi-piece words share their draw across pieces.
pub fn uniform_random_baseline(alignment: &[usize], n_words: usize, seed: u64, task: Task) -> Vec<f64> {
    let mut rng = task_rng(seed, task, Method::UniformRandom);
    let draws: Vec<f64> = (0..n_words).map(|_| rng.sample(Open01)).collect();
    spread_over_tokens(&draws, alignment)
}

/// Dense sentence-by-word tf-idf values with `tf` the raw count and
/// `idf = ln(N / df)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TfIdfMatrix {
    /// Sorted lowercased words; column order.
    pub vocabulary: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TfIdfMatrix {
    pub fn column(&self, word: &str) -> Option<Vec<f64>> {
        let j = self.vocabulary.binary_search_by(|w| w.as_str().cmp(word)).ok()?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn tfidf_features(sentences: &[LabeledSentence]) -> Result<TfIdfMatrix, AttributionError> {
    if sentences.is_empty() {
        return Err(AttributionError::EmptyCorpus);
    }
    let counts: Vec<BTreeMap<String, usize>> = sentences
        .iter()
        .map(|s| {
            let mut c = BTreeMap::new();
            for w in s.lowercase_words() {
                *c.entry(w).or_insert(0) += 1;
            }
            c
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &counts {
        for w in c.keys() {
            *df.entry(w.as_str()).or_insert(0) += 1;
        }
    }
    let n = sentences.len() as f64;
    let vocabulary: Vec<String> = df.keys().map(|w| w.to_string()).collect();
    let idf: Vec<f64> = df.values().map(|&d| (n / d as f64).ln()).collect();
    let rows = counts
        .iter()
        .map(|c| {
            vocabulary
                .iter()
                .zip(&idf)
                .map(|(w, idf)| c.get(w).map_or(0.0, |&tf| tf as f64 * idf))
                .collect()
        })
        .collect();
    Ok(TfIdfMatrix { vocabulary, rows })
}

/// Covariance of every tf-idf column with each one-vs-rest class indicator.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternTable {
    pub covariance: BTreeMap<String, [f64; NUM_CLASSES]>,
}

impl PatternTable {
    /// Global importance of `word`: the Euclidean norm of its per-class
    /// covariances; 0 for words outside the fitted vocabulary.
    pub fn word_score(&self, word: &str) -> f64 {
        self.covariance
            .get(&word.to_lowercase())
            .map_or(0.0, |c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// The same word scores for every sentence, spread over sub-word tokens.
    pub fn token_scores(&self, words: &[String], alignment: &[usize]) -> Vec<f64> {
        let values: Vec<f64> = words.iter().map(|w| self.word_score(w)).collect();
        spread_over_tokens(&values, alignment)
    }

    /// Words ordered by descending score, ties by word.
    pub fn ranking(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self.covariance.keys().map(|w| (w.clone(), self.word_score(w))).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

/// Population covariance `Cov(x_j, 1[y = c])` for each word `j` and class `c`.
pub fn pattern_variant(tfidf: &TfIdfMatrix, targets: &[usize]) -> Result<PatternTable, AttributionError> {
    if tfidf.rows.len() != targets.len() {
        return Err(AttributionError::Options(format!(
            "{} tf-idf rows for {} targets",
            tfidf.rows.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(AttributionError::EmptyCorpus);
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= NUM_CLASSES) {
        return Err(AttributionError::Options(format!("target {bad} is not a class id")));
    }
    let n = targets.len() as f64;
    let mut indicator_means = [0.0; NUM_CLASSES];
    for &t in targets {
        indicator_means[t] += 1.0 / n;
    }
    for (class, &m) in indicator_means.iter().enumerate() {
        if m <= 0.0 || m >= 1.0 {
            return Err(AttributionError::DegenerateTarget { class });
        }
    }
    let mut covariance = BTreeMap::new();
    for (j, word) in tfidf.vocabulary.iter().enumerate() {
        let mean_x = tfidf.rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let mut cov = [0.0; NUM_CLASSES];
        for (row, &t) in tfidf.rows.iter().zip(targets) {
            let dx = row[j] - mean_x;
            for (c, slot) in cov.iter_mut().enumerate() {
                let dy = if c == t { 1.0 } else { 0.0 } - indicator_means[c];
                *slot += dx * dy / n;
            }
        }
        covariance.insert(word.clone(), cov);
    }
    Ok(PatternTable { covariance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GenderVariant;

    fn sentence(words: &str, variant: GenderVariant) -> LabeledSentence {
        let sentence: Vec<String> = words.split_whitespace().map(str::to_string).collect();
        LabeledSentence {
            ground_truth: vec![true; sentence.len()],
            sentence,
            sentence_idx: 0,
            variant,
        }
    }

    #[test]
    fn uniform_draws_are_reproducible_and_open() {
        let a = uniform_random_baseline(&[0, 1, 1, 2], 3, 5, Task::new(9, 0));
        assert_eq!(a, uniform_random_baseline(&[0, 1, 1, 2], 3, 5, Task::new(9, 0)));
        assert_ne!(a, uniform_random_baseline(&[0, 1, 1, 2], 3, 6, Task::new(9, 0)));
        assert_eq!(a[1], a[2]);
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn two_document_hand_oracle() {
        let docs = [
            sentence("she saw the cat cat", GenderVariant::Female),
            sentence("he saw a dog", GenderVariant::Male),
        ];
        let m = tfidf_features(&docs).unwrap();
        let ln2 = 2f64.ln();
        assert_eq!(m.column("saw").unwrap(), [0.0, 0.0]);
        assert_eq!(m.column("cat").unwrap(), [2.0 * ln2, 0.0]);
        assert_eq!(m.column("dog").unwrap(), [0.0, ln2]);
        assert!(m.rows.iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(matches!(tfidf_features(&[]), Err(AttributionError::EmptyCorpus)));
    }

    #[test]
    fn four_sentence_covariance_hand_oracle() {
        let docs = [
            sentence("she runs", GenderVariant::Female),
            sentence("she sleeps", GenderVariant::Female),
            sentence("he runs", GenderVariant::Male),
            sentence("they run", GenderVariant::NonBinary),
        ];
        let m = tfidf_features(&docs).unwrap();
        let table = pattern_variant(&m, &[0, 0, 1, 2]).unwrap();
        // x_she = ln2 * (1, 1, 0, 0), mean ln2/2; y_F = (1, 1, 0, 0), mean 1/2.
        let ln2 = 2f64.ln();
        let she = table.covariance["she"];
        assert!((she[0] - ln2 / 4.0).abs() < 1e-15);
        // y_M = (0, 0, 1, 0), mean 1/4: sum of (x - ln2/2)(y - 1/4) / 4.
        let expected_m = (ln2 / 2.0 * -0.25 * 2.0 + -ln2 / 2.0 * 0.75 + -ln2 / 2.0 * -0.25) / 4.0;
        assert!((she[1] - expected_m).abs() < 1e-15);
        let score = (she.iter().map(|v| v * v).sum::<f64>()).sqrt();
        assert_eq!(table.word_score("She"), score);
        assert_eq!(table.word_score("unseen"), 0.0);
    }

    #[test]
    fn constant_column_has_zero_covariance() {
        let docs = [
            sentence("the she", GenderVariant::Female),
            sentence("the he", GenderVariant::Male),
            sentence("the they", GenderVariant::NonBinary),
        ];
        let mut m = tfidf_features(&docs).unwrap();
        // Force an identical non-zero value in every row.
        let j = m.vocabulary.iter().position(|w| w == "the").unwrap();
        m.rows.iter_mut().for_each(|r| r[j] = 0.7);
        let table = pattern_variant(&m, &[0, 1, 2]).unwrap();
        assert!(table.covariance["the"].iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn degenerate_target_is_error() {
        let docs = [sentence("she", GenderVariant::Female), sentence("her", GenderVariant::Female)];
        let m = tfidf_features(&docs).unwrap();
        assert!(matches!(
            pattern_variant(&m, &[0, 0]),
            Err(AttributionError::DegenerateTarget { .. })
        ));
    }

    #[test]
    fn scores_identical_across_sentences() {
        let docs = [
            sentence("she runs", GenderVariant::Female),
            sentence("he runs", GenderVariant::Male),
            sentence("they run", GenderVariant::NonBinary),
        ];
        let table = pattern_variant(&tfidf_features(&docs).unwrap(), &[0, 1, 2]).unwrap();
        let a = table.token_scores(&["runs".into(), "she".into()], &[0, 1]);
        let b = table.token_scores(&["she".into(), "runs".into()], &[0, 1]);
        assert_eq!(a[1], b[0]);
        assert_eq!(a[0], b[1]);
    }
}
