//! Trains the four schemes of the freezing ladder on one template corpus and
//! prints test accuracy and wall time per scheme.
//!
//! cargo run --release --example train_ladder -- [n_base] [seed] [all|subj]

use std::time::Instant;

use attribench::corpus::{generate_template_corpus, split_train_test, Lexicon, Scope};
use attribench::model::{train, OlaModel, Tokenizer, TrainConfig, TrainScheme};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_base: usize = args.first().map_or(Ok(300), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(1), |s| s.parse())?;
    let scope = match args.get(2).map(String::as_str) {
        Some("subj") => Scope::SubjectOnly,
        _ => Scope::AllWords,
    };

    let corpus = generate_template_corpus(n_base, seed, &Lexicon::default(), scope)?;
    let bundle = split_train_test(&corpus, 0.8, seed)?;
    let init = OlaModel::init(Tokenizer::build(&bundle.train), seed);
    println!(
        "{scope:?}: {} train / {} test sentences, vocabulary {}",
        bundle.train.len(),
        bundle.test.len(),
        init.vocab_size()
    );
    for scheme in TrainScheme::LADDER {
        let start = Instant::now();
        let out = train(init.clone(), scheme, &TrainConfig::new(seed), &bundle)?;
        println!(
            "{scheme:>3}: test accuracy {:.4} (best epoch {}, {} epochs, {:.1}s)",
            out.test_accuracy,
            out.best_epoch,
            out.history.len(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
