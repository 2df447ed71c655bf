use serde::{Deserialize, Serialize};

use super::lexicon::capitalize_first;
use super::{CorpusError, GenderVariant, LabeledSentence, Lexicon, Role, Scope};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Annotation {
    Plain,
    Gendered {
        role: Role,
        /// Refers to the grammatical subject of the sentence (the subject
        /// itself or a possessive/reflexive bound to it).
        subject: bool,
        /// Acts as the subject of a clause, so its verb must agree.
        nominative: bool,
    },
    /// Present-tense verb agreeing with the gendered word at `governor`.
    Verb { governor: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedWord {
    pub text: String,
    pub annotation: Annotation,
}

impl AnnotatedWord {
    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            annotation: Annotation::Plain,
        }
    }

    pub fn gendered(text: impl Into<String>, role: Role, subject: bool, nominative: bool) -> Self {
        Self {
            text: text.into(),
            annotation: Annotation::Gendered {
                role,
                subject,
                nominative,
            },
        }
    }

    pub fn verb(text: impl Into<String>, governor: usize) -> Self {
        Self {
            text: text.into(),
            annotation: Annotation::Verb { governor },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub sentence_idx: usize,
    pub words: Vec<AnnotatedWord>,
}

fn in_scope(annotation: &Annotation, scope: Scope) -> bool {
    match annotation {
        Annotation::Gendered { subject, .. } => scope == Scope::AllWords || *subject,
        _ => false,
    }
}

/// Singular `they` takes plural agreement; gendered nouns keep the singular.
fn takes_plural_agreement(role: Role) -> bool {
    matches!(role, Role::Pronoun | Role::ProperNamePlaceholder)
}

/// Rewrites the annotated base sentence into the `target` variant.
///
/// In-scope gendered words are replaced and flagged; for the non-binary
/// variant, verbs governed by a replaced pronoun are re-inflected and
/// flagged when their surface form changes.
pub fn apply_gender_variant(
    annotated: &AnnotatedSentence,
    target: GenderVariant,
    lexicon: &Lexicon,
    scope: Scope,
) -> Result<LabeledSentence, CorpusError> {
    let words = &annotated.words;

    // Validate verb annotations and find which governors need a verb.
    let mut governed = vec![false; words.len()];
    for (i, w) in words.iter().enumerate() {
        if let Annotation::Verb { governor } = w.annotation {
            match words.get(governor).map(|g| &g.annotation) {
                Some(Annotation::Gendered { .. }) => governed[governor] = true,
                _ => {
                    return Err(CorpusError::Agreement(format!(
                        "verb {:?} at {i} points to {governor}, which is not a gendered word",
                        w.text
                    )))
                }
            }
        }
    }

    let mut sentence = Vec::with_capacity(words.len() + 2);
    let mut ground_truth = Vec::with_capacity(words.len() + 2);
    for (i, w) in words.iter().enumerate() {
        match &w.annotation {
            Annotation::Plain => {
                sentence.push(w.text.clone());
                ground_truth.push(false);
            }
            Annotation::Gendered { role, nominative, .. } => {
                let rule = lexicon.lookup(*role, &w.text)?;
                if in_scope(&w.annotation, scope) {
                    if target == GenderVariant::NonBinary
                        && *nominative
                        && takes_plural_agreement(*role)
                        && !governed[i]
                    {
                        return Err(CorpusError::Agreement(format!(
                            "subject {:?} at {i} has no annotated verb",
                            w.text
                        )));
                    }
                    for piece in rule.transform(&w.text, target) {
                        sentence.push(piece);
                        ground_truth.push(true);
                    }
                } else {
                    sentence.push(w.text.clone());
                    ground_truth.push(false);
                }
            }
            Annotation::Verb { governor } => {
                let gov = &words[*governor];
                let reinflect = match gov.annotation {
                    Annotation::Gendered { role, .. } => {
                        in_scope(&gov.annotation, scope) && takes_plural_agreement(role)
                    }
                    _ => false,
                };
                let out = if reinflect {
                    verb_agreement(&w.text, target)
                } else {
                    w.text.clone()
                };
                ground_truth.push(out != w.text);
                sentence.push(out);
            }
        }
    }

    let labeled = LabeledSentence {
        sentence,
        ground_truth,
        sentence_idx: annotated.sentence_idx,
        variant: target,
    };
    labeled.validate()?;
    Ok(labeled)
}

const IRREGULAR: &[(&str, &str)] = &[
    ("is", "are"),
    ("has", "have"),
    ("does", "do"),
    ("was", "were"),
    ("dies", "die"),
    ("lies", "lie"),
    ("ties", "tie"),
];

/// Third-person singular present to plural agreement for the non-binary
/// variant; identity for the other two.
pub fn verb_agreement(verb: &str, target: GenderVariant) -> String {
    if target != GenderVariant::NonBinary {
        return verb.to_string();
    }
    let lower = verb.to_lowercase();
    let base = if let Some((_, plural)) = IRREGULAR.iter().find(|(sg, _)| *sg == lower) {
        plural.to_string()
    } else if lower.len() > 3
        && lower.ends_with("ies")
        && !lower[..lower.len() - 3].ends_with(['a', 'e', 'i', 'o', 'u'])
    {
        format!("{}y", &lower[..lower.len() - 3])
    } else if ["sses", "shes", "ches", "xes", "zzes", "oes"]
        .iter()
        .any(|suffix| lower.ends_with(suffix))
    {
        lower[..lower.len() - 2].to_string()
    } else if lower.ends_with("ss") || lower.ends_with("us") {
        lower.clone()
    } else if let Some(stem) = lower.strip_suffix('s') {
        stem.to_string()
    } else {
        lower.clone()
    };
    if verb.chars().next().is_some_and(char::is_uppercase) {
        capitalize_first(&base)
    } else {
        base
    }
}
