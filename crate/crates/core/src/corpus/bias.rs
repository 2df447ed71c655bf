//! Co-occurrence bias between gender terms and the remaining vocabulary.

use std::collections::BTreeSet;

use super::{CorpusError, DatasetBundle, LabeledSentence, Lexicon};

fn word_set(s: &LabeledSentence) -> BTreeSet<String> {
    s.lowercase_words().collect()
}

/// Co-occurring (gender term, other word) pairs within one sentence, counting
/// presence rather than multiplicity.
pub fn sentence_cooccurrence(s: &LabeledSentence, gender_terms: &BTreeSet<String>) -> usize {
    let words = word_set(s);
    let terms = words.iter().filter(|w| gender_terms.contains(*w)).count();
    terms * (words.len() - terms)
}

/// `C = sum over sentences, w in V, a in A of [a and w both occur]`.
pub fn cooccurrence<'a>(
    sentences: impl IntoIterator<Item = &'a LabeledSentence>,
    gender_terms: &BTreeSet<String>,
    vocabulary: &BTreeSet<String>,
) -> usize {
    sentences
        .into_iter()
        .map(|s| {
            let words = word_set(s);
            let a = words.iter().filter(|w| gender_terms.contains(*w)).count();
            let v = words.iter().filter(|w| vocabulary.contains(*w)).count();
            a * v
        })
        .sum()
}

/// `V = W \ A` over the lowercased words of `sentences`.
pub fn split_vocabulary<'a>(
    sentences: impl IntoIterator<Item = &'a LabeledSentence>,
    gender_terms: &BTreeSet<String>,
) -> BTreeSet<String> {
    sentences
        .into_iter()
        .flat_map(|s| s.lowercase_words())
        .filter(|w| !gender_terms.contains(w))
        .collect()
}

/// Each class's share of the total co-occurrence count, indexed by class id.
pub fn bias_score(
    decomposition: &[Vec<&LabeledSentence>; 3],
    gender_terms: &BTreeSet<String>,
    vocabulary: &BTreeSet<String>,
) -> Result<[f64; 3], CorpusError> {
    let counts = decomposition
        .each_ref()
        .map(|part| cooccurrence(part.iter().copied(), gender_terms, vocabulary));
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(CorpusError::UndefinedBias);
    }
    Ok(counts.map(|c| c as f64 / total as f64))
}

/// Bias over every sentence of `bundle`, with `A` taken from the lexicon.
pub fn bundle_bias(bundle: &DatasetBundle, lexicon: &Lexicon) -> Result<[f64; 3], CorpusError> {
    let terms = lexicon.gender_terms();
    let all: Vec<LabeledSentence> = bundle.all().cloned().collect();
    let vocab = split_vocabulary(&all, &terms);
    bias_score(&DatasetBundle::by_class(&all), &terms, &vocab)
}
