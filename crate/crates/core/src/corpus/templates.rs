//! Deterministic template generator for annotated base sentences.
//!
//! Slot syntax inside a template (tokens are space separated):
//!
//! | slot          | fills with                                            |
//! |---------------|-------------------------------------------------------|
//! | `{S}`         | main subject: pronoun, character name, or `the` + noun |
//! | `{V:class}`   | verb agreeing with the main subject                   |
//! | `{P}` / `{R}` | possessive / reflexive bound to the main subject      |
//! | `{S2}`        | pronoun subject of a subordinate clause               |
//! | `{V2:class}`  | verb agreeing with `{S2}`                             |
//! | `{P2}`        | possessive bound to `{S2}`                            |
//! | `{K}`         | gendered common noun for another person               |
//! | `{O}`         | object pronoun for another person                     |
//! | `{N:class}`   | ungendered filler noun                                |

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bias::sentence_cooccurrence;
use super::{
    apply_gender_variant, AnnotatedSentence, AnnotatedWord, CorpusError, DatasetBundle, GenderVariant,
    LabeledSentence, Lexicon, Role, Scope,
};

const TEMPLATES: &[&str] = &[
    "{S} {V:act} the {N:thing} of {P} {K} .",
    "{S} {V:act} {P} {K} in the {N:place} .",
    "{S} {V:say} that {S2} {V2:act} the {N:thing} .",
    "{S} {V:go} to the {N:place} with {P} {K} .",
    "In the {N:place} , {S} {V:act} {O} every day .",
    "{S} {V:have} a {N:thing} from {P} {K} .",
    "{S} {V:be} proud of {P} {K} .",
    "{S} {V:act} the {K} because {S2} {V2:say} so .",
    "{S} {V:say} that {P} {K} lives in the {N:place} .",
    "{S} {V:act} {R} in the mirror .",
    "When {S2} {V2:go} to the {N:place} , {S} {V:act} {P2} {N:thing} .",
    "{S} {V:act} {O} near the {N:place} .",
    "{S} {V:be} a friend of the {K} .",
    "{S} {V:act} the {N:thing} , and {S2} {V2:act} {P2} {K} .",
    "After the war , {S} {V:go} home to {P} {K} .",
    "{S} {V:act} the {K} at the {N:place} .",
    "{S} {V:say} that {S2} {V2:be} in the {N:place} with {P2} {K} .",
    "{S} {V:have} no {N:thing} , so {S2} {V2:act} {O} .",
];

const VERBS_ACT: &[&str] = &[
    "touches", "visits", "watches", "misses", "fixes", "carries", "finds", "loves", "helps", "calls", "meets",
    "teaches", "follows", "hears", "greets", "trusts", "thanks", "blesses", "pushes", "admires", "forgives",
    "remembers", "paints", "guards", "hides", "buys", "sells", "cleans", "studies", "washes",
];
const VERBS_SAY: &[&str] = &[
    "says", "thinks", "believes", "knows", "hopes", "feels", "claims", "admits", "explains", "notices", "fears",
    "suspects", "insists", "writes", "dreams",
];
const VERBS_GO: &[&str] = &[
    "goes", "walks", "runs", "drives", "travels", "hurries", "returns", "moves", "rushes", "rides", "sails",
    "flies",
];
const NOUNS_THING: &[&str] = &[
    "car", "book", "letter", "horse", "ring", "sword", "map", "key", "garden", "painting", "boat", "coat", "dress",
    "hat", "gun", "money", "house", "lamp", "bread", "violin", "piano", "necklace", "carriage", "diary", "bicycle",
];
const NOUNS_PLACE: &[&str] = &[
    "kitchen", "garage", "city", "forest", "castle", "village", "market", "church", "harbor", "library", "school",
    "office", "farm", "court", "palace", "station", "river", "island", "mountain", "tavern",
];
const NAMES_FEMALE: &[&str] = &[
    "Mary", "Elizabeth", "Anna", "Emma", "Jane", "Alice", "Catherine", "Margaret", "Elinor", "Marianne", "Dorothy",
    "Hester",
];
const NAMES_MALE: &[&str] = &[
    "Paul", "John", "Henry", "Charles", "Thomas", "David", "James", "George", "Victor", "Edmond", "Oliver",
    "Sherlock",
];

const MAX_ATTEMPTS_PER_BASE: usize = 10_000;

fn verbs(class: &str) -> Result<&'static [&'static str], CorpusError> {
    Ok(match class {
        "act" => VERBS_ACT,
        "say" => VERBS_SAY,
        "go" => VERBS_GO,
        "have" => &["has"],
        "be" => &["is"],
        other => return Err(CorpusError::Argument(format!("unknown verb class {other:?}"))),
    })
}

fn nouns(class: &str) -> Result<&'static [&'static str], CorpusError> {
    Ok(match class {
        "thing" => NOUNS_THING,
        "place" => NOUNS_PLACE,
        other => return Err(CorpusError::Argument(format!("unknown noun class {other:?}"))),
    })
}

fn random_binary_gender(rng: &mut impl Rng) -> GenderVariant {
    if rng.random_bool(0.5) {
        GenderVariant::Female
    } else {
        GenderVariant::Male
    }
}

struct Builder<'a> {
    lexicon: &'a Lexicon,
    words: Vec<AnnotatedWord>,
    main: Option<usize>,
    main_gender: GenderVariant,
    second: Option<usize>,
    second_gender: GenderVariant,
}

impl<'a> Builder<'a> {
    fn form(&self, role: Role, female: &str, gender: GenderVariant) -> Result<String, CorpusError> {
        Ok(self.lexicon.lookup(role, female)?.form(gender).to_string())
    }

    fn fill(&mut self, token: &str, rng: &mut impl Rng) -> Result<(), CorpusError> {
        let Some(slot) = token.strip_prefix('{').and_then(|t| t.strip_suffix('}')) else {
            self.words.push(AnnotatedWord::plain(token));
            return Ok(());
        };
        let (name, class) = slot.split_once(':').unwrap_or((slot, ""));
        match name {
            "S" => {
                let g = self.main_gender;
                match rng.random_range(0..4) {
                    0 | 1 => {
                        let w = self.form(Role::Pronoun, "she", g)?;
                        self.main = Some(self.words.len());
                        self.words.push(AnnotatedWord::gendered(w, Role::Pronoun, true, true));
                    }
                    2 => {
                        let names = if g == GenderVariant::Female { NAMES_FEMALE } else { NAMES_MALE };
                        let name = *names.choose(rng).expect("non-empty");
                        self.main = Some(self.words.len());
                        self.words
                            .push(AnnotatedWord::gendered(name, Role::ProperNamePlaceholder, true, true));
                    }
                    _ => {
                        let rule = self.random_noun_rule(rng)?;
                        self.words.push(AnnotatedWord::plain("the"));
                        self.main = Some(self.words.len());
                        self.words
                            .push(AnnotatedWord::gendered(rule.form(g), Role::CommonNoun, true, true));
                    }
                }
            }
            "S2" => {
                let w = self.form(Role::Pronoun, "she", self.second_gender)?;
                self.second = Some(self.words.len());
                self.words.push(AnnotatedWord::gendered(w, Role::Pronoun, false, true));
            }
            "V" | "V2" => {
                let governor = if name == "V" { self.main } else { self.second }
                    .ok_or_else(|| CorpusError::Argument(format!("{{{slot}}} before its subject")))?;
                let verb = *verbs(class)?.choose(rng).expect("non-empty");
                self.words.push(AnnotatedWord::verb(verb, governor));
            }
            "P" => {
                let w = self.form(Role::Possessive, "her", self.main_gender)?;
                self.words.push(AnnotatedWord::gendered(w, Role::Possessive, true, false));
            }
            "P2" => {
                let w = self.form(Role::Possessive, "her", self.second_gender)?;
                self.words.push(AnnotatedWord::gendered(w, Role::Possessive, false, false));
            }
            "R" => {
                let w = self.form(Role::Pronoun, "herself", self.main_gender)?;
                self.words.push(AnnotatedWord::gendered(w, Role::Pronoun, true, false));
            }
            "O" => {
                let w = self.form(Role::Pronoun, "her", random_binary_gender(rng))?;
                self.words.push(AnnotatedWord::gendered(w, Role::Pronoun, false, false));
            }
            "K" => {
                let g = random_binary_gender(rng);
                let w = self.random_noun_rule(rng)?.form(g).to_string();
                self.words.push(AnnotatedWord::gendered(w, Role::CommonNoun, false, false));
            }
            "N" => {
                let n = *nouns(class)?.choose(rng).expect("non-empty");
                self.words.push(AnnotatedWord::plain(n));
            }
            other => return Err(CorpusError::Argument(format!("unknown template slot {{{other}}}"))),
        }
        Ok(())
    }

    fn random_noun_rule(&self, rng: &mut impl Rng) -> Result<&'a super::LexiconRule, CorpusError> {
        let lexicon: &'a Lexicon = self.lexicon;
        let rules: Vec<_> = lexicon.by_role(Role::CommonNoun).collect();
        rules.choose(rng).copied().ok_or_else(|| CorpusError::UnknownLexeme {
            word: "<any>".into(),
            role: Role::CommonNoun,
        })
    }
}

fn instantiate(template: &str, sentence_idx: usize, lexicon: &Lexicon, rng: &mut impl Rng) -> Result<AnnotatedSentence, CorpusError> {
    let mut b = Builder {
        lexicon,
        words: Vec::new(),
        main: None,
        main_gender: random_binary_gender(rng),
        second: None,
        second_gender: random_binary_gender(rng),
    };
    for token in template.split_whitespace() {
        b.fill(token, rng)?;
    }
    if let Some(first) = b.words.first_mut() {
        first.text = super::lexicon::capitalize_first(&first.text);
    }
    Ok(AnnotatedSentence {
        sentence_idx,
        words: b.words,
    })
}

/// Every variant has the same number of distinct gender terms and
/// distinct remaining words, so each triple adds equally to every class's
/// co-occurrence count.
fn is_balanced(variants: &[LabeledSentence], gender_terms: &BTreeSet<String>) -> bool {
    let counts: Vec<usize> = variants
        .iter()
        .map(|s| sentence_cooccurrence(s, gender_terms))
        .collect();
    counts.windows(2).all(|w| w[0] == w[1])
}

/// Draws `n_base` annotated base sentences. Candidates whose all-words
/// variants would not be co-occurrence balanced are redrawn.
pub fn generate_base_sentences(n_base: usize, seed: u64, lexicon: &Lexicon) -> Result<Vec<AnnotatedSentence>, CorpusError> {
    if n_base == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    let gender_terms = lexicon.gender_terms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_base);
    for idx in 0..n_base {
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS_PER_BASE {
            let template = TEMPLATES.choose(&mut rng).expect("non-empty");
            let candidate = instantiate(template, idx, lexicon, &mut rng)?;
            let variants = GenderVariant::ALL
                .iter()
                .map(|&v| apply_gender_variant(&candidate, v, lexicon, Scope::AllWords))
                .collect::<Result<Vec<_>, _>>()?;
            if is_balanced(&variants, &gender_terms) {
                accepted = Some(candidate);
                break;
            }
        }
        out.push(accepted.ok_or_else(|| {
            CorpusError::Argument("lexicon cannot produce co-occurrence balanced sentences".into())
        })?);
    }
    Ok(out)
}

/// Expands each base into its F, M, NB variants, in that order.
pub fn expand_bases(bases: &[AnnotatedSentence], lexicon: &Lexicon, scope: Scope) -> Result<Vec<LabeledSentence>, CorpusError> {
    let mut out = Vec::with_capacity(bases.len() * 3);
    for base in bases {
        for v in GenderVariant::ALL {
            out.push(apply_gender_variant(base, v, lexicon, scope)?);
        }
    }
    Ok(out)
}

/// Unsplit corpus of `3 * n_base` sentences; all of them land in `train`.
pub fn generate_template_corpus(n_base: usize, seed: u64, lexicon: &Lexicon, scope: Scope) -> Result<DatasetBundle, CorpusError> {
    let bases = generate_base_sentences(n_base, seed, lexicon)?;
    Ok(DatasetBundle::new(scope, expand_bases(&bases, lexicon, scope)?, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_base_gives_three_sentences() {
        let b = generate_template_corpus(1, 99, &Lexicon::default(), Scope::AllWords).unwrap();
        assert_eq!(b.len(), 3);
        assert!(b.all().all(|s| s.sentence_idx == 0));
        let classes: Vec<usize> = b.all().map(|s| s.target()).collect();
        assert_eq!(classes, [0, 1, 2]);
    }

    #[test]
    fn deterministic_per_seed() {
        let lex = Lexicon::default();
        let a = generate_template_corpus(40, 5, &lex, Scope::SubjectOnly).unwrap();
        let b = generate_template_corpus(40, 5, &lex, Scope::SubjectOnly).unwrap();
        let c = generate_template_corpus(40, 6, &lex, Scope::SubjectOnly).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_bases_is_an_error() {
        assert!(matches!(
            generate_template_corpus(0, 1, &Lexicon::default(), Scope::AllWords),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn every_template_instantiates_in_both_scopes() {
        let lex = Lexicon::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (i, t) in TEMPLATES.iter().enumerate() {
            for _ in 0..20 {
                let a = instantiate(t, i, &lex, &mut rng).unwrap();
                for scope in [Scope::SubjectOnly, Scope::AllWords] {
                    for v in GenderVariant::ALL {
                        apply_gender_variant(&a, v, &lex, scope).unwrap();
                    }
                }
            }
        }
    }

    #[test]
    fn names_never_survive_expansion() {
        let lex = Lexicon::default();
        let b = generate_template_corpus(200, 11, &lex, Scope::SubjectOnly).unwrap();
        for s in b.all() {
            for w in &s.sentence {
                assert!(!NAMES_FEMALE.contains(&w.as_str()) && !NAMES_MALE.contains(&w.as_str()), "{w}");
            }
        }
    }
}
