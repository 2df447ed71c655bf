//! Trains one classifier, explains a single test sentence with every method
//! and prints the normalized word scores next to the ground truth.
//!
//! cargo run --release --example explain_sentence -- [n_base] [test_index] [scheme]

use attribench::attribution::{pattern_variant, tfidf_features, AttributionContext, Method, MethodOptions};
use attribench::corpus::{generate_template_corpus, split_train_test, Lexicon, Scope};
use attribench::evaluation::{mass_accuracy, normalize_and_aggregate};
use attribench::model::{train, OlaModel, Tokenizer, TrainConfig, TrainScheme};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_base: usize = args.first().map_or(Ok(300), |s| s.parse())?;
    let index: usize = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let scheme: TrainScheme = match args.get(2) {
        Some(s) => serde_json::from_value(serde_json::Value::String(s.clone()))?,
        None => TrainScheme::CE,
    };

    let corpus = generate_template_corpus(n_base, 5, &Lexicon::default(), Scope::AllWords)?;
    let bundle = split_train_test(&corpus, 0.8, 5)?;
    let init = OlaModel::init(Tokenizer::build(&bundle.train), 5);
    let model = train(init, scheme, &TrainConfig::new(5), &bundle)?.model;
    let targets: Vec<usize> = bundle.train.iter().map(|s| s.target()).collect();
    let pattern = pattern_variant(&tfidf_features(&bundle.train)?, &targets)?;

    let sentence = bundle.test.get(index).ok_or("test index out of range")?;
    let ids = model.tokenizer.tokenize(sentence)?.ids;
    println!("{scheme}, gold {} predicted {}", sentence.target(), model.predict(&ids)?);
    print!("{:>20}", "");
    for (w, &h) in sentence.sentence.iter().zip(&sentence.ground_truth) {
        print!(" {:>8}", if h { format!("*{w}") } else { w.clone() });
    }
    println!("   MA");

    let options = MethodOptions::default();
    let ctx = AttributionContext {
        model: &model,
        scheme,
        seed: 5,
        options: &options,
        pattern: Some(&pattern),
    };
    for method in Method::ALL {
        let map = ctx.attribute(sentence, method)?;
        let e = normalize_and_aggregate(&map, map.n_words)?;
        print!("{:>20}", method.to_string());
        for s in &e.word_scores {
            print!(" {s:>8.3}");
        }
        println!(" {:.3}", mass_accuracy(&sentence.ground_truth, &e)?);
    }
    Ok(())
}
