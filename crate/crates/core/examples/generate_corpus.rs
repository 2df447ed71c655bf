//! Generates the template corpus for both scopes, reports the bias score per
//! gender and prints one base sentence in all three variants.
//!
//! cargo run --example generate_corpus -- [n_base] [seed] [out_dir]

use std::path::PathBuf;

use attribench::corpus::{bundle_bias, generate_template_corpus, save_jsonl, split_train_test, Lexicon, Scope};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_base: usize = args.first().map_or(Ok(200), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let out = args.get(2).map(PathBuf::from);
    let lexicon = Lexicon::default();

    for scope in [Scope::SubjectOnly, Scope::AllWords] {
        let corpus = generate_template_corpus(n_base, seed, &lexicon, scope)?;
        let bias = bundle_bias(&corpus, &lexicon)?;
        println!("{scope:?}: {} sentences, bias F/M/NB {bias:.6?}", corpus.len());
        let first = corpus.train[0].sentence_idx;
        for s in corpus.all().filter(|s| s.sentence_idx == first) {
            let marked: Vec<String> = s
                .sentence
                .iter()
                .zip(&s.ground_truth)
                .map(|(w, &h)| if h { format!("[{w}]") } else { w.clone() })
                .collect();
            println!("  {}: {}", s.target(), marked.join(" "));
        }
        if let Some(dir) = &out {
            let split = split_train_test(&corpus, 0.8, seed)?;
            let dir = dir.join(scope.dir_name());
            std::fs::create_dir_all(&dir)?;
            save_jsonl(&split.train, &dir.join("train.jsonl"))?;
            save_jsonl(&split.test, &dir.join("test.jsonl"))?;
            println!("  wrote {}", dir.display());
        }
    }
    Ok(())
}
