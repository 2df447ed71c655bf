//! Checks reverse-mode gradients of a freshly initialized classifier against
//! central finite differences, for the embeddings and all eight weights.
//!
//! cargo run --release --example gradient_check -- [n_sentences]

use attribench::corpus::{generate_template_corpus, Lexicon, Scope};
use attribench::model::{OlaModel, Tokenizer, NUM_PARAMS};
use attribench::numerics::{finite_difference_check, FdOptions, NodeId, NumericsError};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(5), |s| s.parse())?;
    let corpus = generate_template_corpus(50, 2, &Lexicon::default(), Scope::AllWords)?;
    let model = OlaModel::init(Tokenizer::build(&corpus.train), 2);

    for (k, s) in corpus.train.iter().take(n).enumerate() {
        let ids = model.tokenizer.tokenize(s)?.ids;
        let target = model.predict(&ids)?;
        let mut inputs = vec![model.embed(&ids)?];
        inputs.extend(model.params[1..].iter().cloned());
        let padding = vec![false; ids.len()];
        let opts = FdOptions {
            max_coords_per_input: Some(40),
            seed: k as u64,
            ..FdOptions::default()
        };
        let report = finite_difference_check(
            |tape, nodes| {
                let params: [NodeId; NUM_PARAMS - 1] = nodes[1..].try_into().expect("eight weights");
                let (_, logits) = model
                    .graph(tape, nodes[0], Some(params), &padding)
                    .map_err(|_| NumericsError::InvalidArgument("graph construction failed"))?;
                tape.pick(logits, target)
            },
            &inputs,
            &opts,
        )?;
        println!(
            "sentence {k} ({} tokens): max relative error {:.3e}, max absolute {:.3e}, {} coordinates",
            ids.len(),
            report.max_relative_error,
            report.max_absolute_error,
            report.coordinates_checked
        );
    }
    Ok(())
}
