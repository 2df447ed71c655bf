//! Integrated Gradients completeness gap `|sum attr - (f(x) - f(b))|` as the
//! number of midpoint steps grows, on a trained CEA model.
//!
//! cargo run --release --example ig_convergence -- [n_base] [n_sentences] [mask|zero]

use attribench::attribution::{gradient_attribution, Baseline, Explainable, Method, MethodOptions, Task};
use attribench::corpus::{generate_template_corpus, split_train_test, Lexicon, Scope};
use attribench::model::{train, OlaModel, Tokenizer, TrainConfig, TrainScheme};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_base: usize = args.first().map_or(Ok(1500), |s| s.parse())?;
    let n_sentences: usize = args.get(1).map_or(Ok(50), |s| s.parse())?;
    let baseline = match args.get(2).map(String::as_str) {
        Some("zero") => Baseline::ZeroEmbedding,
        _ => Baseline::MaskToken,
    };

    let corpus = generate_template_corpus(n_base, 1, &Lexicon::default(), Scope::AllWords)?;
    let bundle = split_train_test(&corpus, 0.8, 1)?;
    let init = OlaModel::init(Tokenizer::build(&bundle.train), 1);
    let model = train(init, TrainScheme::CEA, &TrainConfig::new(1), &bundle)?.model;

    println!("{:>6} {:>12} {:>12}", "steps", "median gap", "max gap");
    for steps in [16, 64, 128, 256, 1024] {
        let opts = MethodOptions {
            ig_steps: steps,
            baseline,
            ..MethodOptions::default()
        };
        let mut gaps = Vec::new();
        for s in bundle.test.iter().take(n_sentences) {
            let ids = model.tokenizer.tokenize(s)?.ids;
            let e = gradient_attribution(&model, &ids, Task::of(s), Method::IntegratedGradients, &opts)?;
            let x = model.embed(&ids)?;
            let b = Explainable::baseline(&model, opts.baseline, ids.len(), x.dims2()?.1)?;
            let gap = e.token_scores.iter().sum::<f64>()
                - (model.logits_from_embeddings(&x)?[e.target] - model.logits_from_embeddings(&b)?[e.target]);
            gaps.push(gap.abs());
        }
        gaps.sort_by(f64::total_cmp);
        println!("{steps:>6} {:>12.3e} {:>12.3e}", gaps[gaps.len() / 2], gaps[gaps.len() - 1]);
    }
    Ok(())
}
