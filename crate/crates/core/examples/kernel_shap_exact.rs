//! Compares KernelSHAP with Shapley values enumerated over every coalition
//! on short sentences, where the coalition budget covers all subsets.
//!
//! cargo run --release --example kernel_shap_exact -- [n_sentences]

use attribench::attribution::{surrogate_attribution, Explainable, Method, MethodOptions, Task};
use attribench::corpus::{generate_template_corpus, Lexicon, Scope};
use attribench::model::{OlaModel, Tokenizer};

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values by direct enumeration; absent tokens take the mask id.
fn exact_shapley(model: &OlaModel, ids: &[usize], target: usize) -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let d = ids.len();
    let value = |set: usize| -> Result<f64, Box<dyn std::error::Error>> {
        let mixed: Vec<usize> = (0..d)
            .map(|j| if set >> j & 1 == 1 { ids[j] } else { model.mask_id() })
            .collect();
        Ok(model.logits(&mixed)?[target])
    };
    let values = (0..1usize << d).map(value).collect::<Result<Vec<_>, _>>()?;
    let mut phi = vec![0.0; d];
    for (j, p) in phi.iter_mut().enumerate() {
        for set in (0..1usize << d).filter(|s| s >> j & 1 == 0) {
            let k = set.count_ones() as usize;
            let w = factorial(k) * factorial(d - k - 1) / factorial(d);
            *p += w * (values[set | 1 << j] - values[set]);
        }
    }
    Ok(phi)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(5), |s| s.parse())?;
    let corpus = generate_template_corpus(100, 7, &Lexicon::default(), Scope::AllWords)?;
    let model = OlaModel::init(Tokenizer::build(&corpus.train), 7);
    let options = MethodOptions::default();

    let short = corpus.train.iter().filter_map(|s| {
        let ids = model.tokenizer.tokenize(s).ok()?.ids;
        (ids.len() <= 10 && (1usize << ids.len()) - 2 <= options.shap_samples).then_some((s, ids))
    });
    for (s, ids) in short.take(n) {
        let e = surrogate_attribution(&model, &ids, Task::of(s), Method::KernelShap, &options)?;
        let exact = exact_shapley(&model, &ids, e.target)?;
        let err = e.token_scores.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{:<48} {} tokens, max |phi - exact| {err:.2e}", s.sentence.join(" "), ids.len());
    }
    Ok(())
}
