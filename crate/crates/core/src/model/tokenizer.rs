//! Word-level vocabulary with greedy longest-match sub-word fallback.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::LabeledSentence;

pub const PAD: usize = 0;
pub const MASK: usize = 1;
pub const UNK_PIECE: usize = 2;
const SPECIALS: [&str; 3] = ["[PAD]", "[MASK]", "[UNK]"];

/// Token ids for one sentence plus the word index each token came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenized {
    pub ids: Vec<usize>,
    pub alignment: Vec<usize>,
    pub n_words: usize,
}

/// Maps lowercased words to ids. Words missing from the vocabulary are
/// segmented left to right, taking the longest inventory entry at each
/// step; characters not covered by any entry become `[UNK]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    /// Id-ordered token strings: specials, then words, then single characters.
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    #[serde(skip)]
    max_piece_chars: usize,
}

impl Tokenizer {
    /// Builds the vocabulary from the words of `sentences` (normally the
    /// training split) plus every character they contain.
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a LabeledSentence>) -> Self {
        let mut words = BTreeSet::new();
        let mut chars = BTreeSet::new();
        for s in sentences {
            for w in s.lowercase_words() {
                chars.extend(w.chars().map(String::from));
                words.insert(w);
            }
        }
        Self::from_entries(words.into_iter().chain(chars))
    }

    /// Vocabulary from explicit entries (specials are prepended).
    pub fn from_entries(entries: impl IntoIterator<Item = String>) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut seen: BTreeSet<String> = tokens.iter().cloned().collect();
        for e in entries {
            if seen.insert(e.clone()) {
                tokens.push(e);
            }
        }
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let max_piece_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(1);
        Self {
            tokens,
            index,
            max_piece_chars,
        }
    }

    /// Restores lookup tables after deserialization.
    pub(crate) fn rebuild(self) -> Self {
        Self::from_tokens(self.tokens)
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Pieces of a single word, in order.
    pub fn segment_word(&self, word: &str) -> Vec<usize> {
        let lower = word.to_lowercase();
        if let Some(&id) = self.index.get(&lower) {
            if id >= SPECIALS.len() {
                return vec![id];
            }
        }
        let chars: Vec<char> = lower.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let longest = (start + 1..=chars.len().min(start + self.max_piece_chars))
                .rev()
                .find_map(|end| {
                    let piece: String = chars[start..end].iter().collect();
                    self.index
                        .get(&piece)
                        .filter(|&&id| id >= SPECIALS.len())
                        .map(|&id| (id, end))
                });
            match longest {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                }
                None => {
                    out.push(UNK_PIECE);
                    start += 1;
                }
            }
        }
        if out.is_empty() {
            out.push(UNK_PIECE);
        }
        out
    }

    pub fn tokenize_words(&self, words: &[String]) -> Result<Tokenized, ModelError> {
        if words.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        let mut ids = Vec::with_capacity(words.len());
        let mut alignment = Vec::with_capacity(words.len());
        for (wi, w) in words.iter().enumerate() {
            for id in self.segment_word(w) {
                ids.push(id);
                alignment.push(wi);
            }
        }
        Ok(Tokenized {
            ids,
            alignment,
            n_words: words.len(),
        })
    }

    pub fn tokenize(&self, sentence: &LabeledSentence) -> Result<Tokenized, ModelError> {
        self.tokenize_words(&sentence.sentence)
    }

    pub fn detokenize(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or("[UNK]")).collect()
    }
}
