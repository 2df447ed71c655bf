use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CorpusError, GenderVariant};

/// Bundled substitution table, one `female|male|nonbinary|role` rule per line.
pub const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pronoun,
    Possessive,
    CommonNoun,
    /// A character name; always rewritten to the rule's pronoun forms.
    ProperNamePlaceholder,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Pronoun => "pronoun",
            Role::Possessive => "possessive",
            Role::CommonNoun => "common_noun",
            Role::ProperNamePlaceholder => "proper_name",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "pronoun" => Ok(Role::Pronoun),
            "possessive" => Ok(Role::Possessive),
            "common_noun" => Ok(Role::CommonNoun),
            "proper_name" => Ok(Role::ProperNamePlaceholder),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconRule {
    pub female_form: String,
    pub male_form: String,
    /// May span several words, e.g. "parent's sibling".
    pub nonbinary_form: String,
    pub role: Role,
}

impl LexiconRule {
    pub fn new(female: &str, male: &str, nonbinary: &str, role: Role) -> Result<Self, String> {
        let rule = Self {
            female_form: female.trim().to_string(),
            male_form: male.trim().to_string(),
            nonbinary_form: nonbinary.trim().to_string(),
            role,
        };
        let forms = [&rule.female_form, &rule.male_form, &rule.nonbinary_form].map(|f| f.to_lowercase());
        if forms.iter().any(|f| f.is_empty()) {
            return Err("empty form".into());
        }
        if forms[0] == forms[1] || forms[1] == forms[2] || forms[0] == forms[2] {
            return Err(format!("forms are not pairwise distinct: {forms:?}"));
        }
        Ok(rule)
    }

    pub fn form(&self, variant: GenderVariant) -> &str {
        match variant {
            GenderVariant::Female => &self.female_form,
            GenderVariant::Male => &self.male_form,
            GenderVariant::NonBinary => &self.nonbinary_form,
        }
    }

    /// Case-insensitive match against any of the three forms.
    pub fn matches(&self, text: &str) -> bool {
        let t = text.to_lowercase();
        GenderVariant::ALL
            .iter()
            .any(|&v| self.form(v).to_lowercase() == t)
    }

    /// Rewrites `text` (one of this rule's forms) into the `target` form,
    /// carrying over initial capitalization to every inserted word.
    pub fn transform(&self, text: &str, target: GenderVariant) -> Vec<String> {
        let capitalize = text.chars().next().is_some_and(char::is_uppercase);
        self.form(target)
            .split_whitespace()
            .map(|w| if capitalize { capitalize_first(w) } else { w.to_string() })
            .collect()
    }
}

pub(crate) fn capitalize_first(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lexicon {
    rules: Vec<LexiconRule>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }
}

impl Lexicon {
    pub fn new(rules: Vec<LexiconRule>) -> Self {
        Self { rules }
    }

    /// Parses the plain-text table; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| CorpusError::Lexicon { line: i + 1, message };
            let fields: Vec<&str> = line.split('|').collect();
            let [female, male, nonbinary, role] = fields.as_slice() else {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            };
            let role = role.parse::<Role>().map_err(err)?;
            rules.push(LexiconRule::new(female, male, nonbinary, role).map_err(err)?);
        }
        Ok(Self { rules })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn rules(&self) -> &[LexiconRule] {
        &self.rules
    }

    /// First rule with `role` matching `word`. Name placeholders match on
    /// role alone since the name itself is not a lexicon form.
    pub fn lookup(&self, role: Role, word: &str) -> Result<&LexiconRule, CorpusError> {
        self.rules
            .iter()
            .find(|r| r.role == role && (role == Role::ProperNamePlaceholder || r.matches(word)))
            .ok_or_else(|| CorpusError::UnknownLexeme {
                word: word.to_string(),
                role,
            })
    }

    pub fn by_role(&self, role: Role) -> impl Iterator<Item = &LexiconRule> {
        self.rules.iter().filter(move |r| r.role == role)
    }

    /// Every word of every form, lowercased. Multi-word forms contribute
    /// each of their words.
    pub fn gender_terms(&self) -> BTreeSet<String> {
        self.rules
            .iter()
            .flat_map(|r| GenderVariant::ALL.map(|v| r.form(v).to_lowercase()))
            .flat_map(|f| f.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lexicon_parses() {
        let lex = Lexicon::default();
        assert!(lex.rules().len() >= 10);
        let aunt = lex.lookup(Role::CommonNoun, "Aunt").unwrap();
        assert_eq!(aunt.transform("Aunt", GenderVariant::NonBinary), vec!["Parent's", "Sibling"]);
        assert_eq!(aunt.transform("aunt", GenderVariant::Male), vec!["uncle"]);
    }

    #[test]
    fn her_resolves_by_role() {
        let lex = Lexicon::default();
        assert_eq!(lex.lookup(Role::Possessive, "her").unwrap().male_form, "his");
        assert_eq!(lex.lookup(Role::Pronoun, "her").unwrap().male_form, "him");
        assert_eq!(lex.lookup(Role::Pronoun, "She").unwrap().nonbinary_form, "they");
    }

    #[test]
    fn unknown_word_is_reported() {
        let lex = Lexicon::default();
        assert!(matches!(
            lex.lookup(Role::CommonNoun, "teacher"),
            Err(CorpusError::UnknownLexeme { .. })
        ));
    }

    #[test]
    fn rejects_duplicate_forms() {
        assert!(LexiconRule::new("a", "A", "b", Role::CommonNoun).is_err());
        let err = Lexicon::parse("x|y|role_only").unwrap_err();
        assert!(matches!(err, CorpusError::Lexicon { line: 1, .. }));
        assert!(Lexicon::parse("x|y|z|adjective").is_err());
    }

    #[test]
    fn transform_is_idempotent() {
        let lex = Lexicon::default();
        for rule in lex.rules() {
            for v in GenderVariant::ALL {
                for src in GenderVariant::ALL {
                    let once = rule.transform(rule.form(src), v).join(" ");
                    let twice = rule.transform(&once, v).join(" ");
                    assert_eq!(once, twice);
                }
            }
        }
    }

    #[test]
    fn gender_terms_split_multiword_forms() {
        let terms = Lexicon::default().gender_terms();
        for t in ["she", "her", "he", "they", "parent's", "sibling"] {
            assert!(terms.contains(t), "{t}");
        }
        assert!(!terms.contains("parent's sibling"));
    }
}
