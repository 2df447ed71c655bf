use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, DatasetBundle};

/// Splits at the base-sentence level so the three variants of a base always
/// share a split. Membership depends only on the set of `sentence_idx`
/// values and the seed, not on input order.
pub fn split_train_test(bundle: &DatasetBundle, train_fraction: f64, seed: u64) -> Result<DatasetBundle, CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::Argument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let bases: BTreeSet<usize> = bundle.all().map(|s| s.sentence_idx).collect();
    let mut order: Vec<usize> = bases.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * order.len() as f64).round() as usize;
    let train_ids: BTreeSet<usize> = order[..n_train].iter().copied().collect();

    let mut all: Vec<_> = bundle.all().cloned().collect();
    all.sort_by_key(|s| (s.sentence_idx, s.variant));
    let (train, test): (Vec<_>, Vec<_>) = all.into_iter().partition(|s| train_ids.contains(&s.sentence_idx));
    Ok(DatasetBundle::new(bundle.scope, train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_template_corpus, Lexicon, Scope};

    #[test]
    fn two_bases_half_split() {
        let b = generate_template_corpus(2, 1, &Lexicon::default(), Scope::AllWords).unwrap();
        let s = split_train_test(&b, 0.5, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (3, 3));
        s.validate().unwrap();
    }

    #[test]
    fn rejects_bad_fraction() {
        let b = generate_template_corpus(2, 1, &Lexicon::default(), Scope::AllWords).unwrap();
        for f in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(split_train_test(&b, f, 0).is_err());
        }
    }

    #[test]
    fn order_independent() {
        let b = generate_template_corpus(30, 9, &Lexicon::default(), Scope::SubjectOnly).unwrap();
        let mut shuffled = b.clone();
        shuffled.train.reverse();
        shuffled.train.shuffle(&mut ChaCha8Rng::seed_from_u64(77));
        let a = split_train_test(&b, 0.7, 4).unwrap();
        let c = split_train_test(&shuffled, 0.7, 4).unwrap();
        assert_eq!(a, c);
    }
}
