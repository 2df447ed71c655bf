//! Tokenizer, the one-layer-attention classifier and its training ladder.

mod checkpoint;
mod ola;
mod tokenizer;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use ola::{
    argmax, FreezeMask, OlaModel, ParamGroup, Trace, EMBED_DIM, NUM_CLASSES, NUM_PARAMS, PARAM_NAMES, P_EMBEDDING,
    P_HIDDEN_B, P_HIDDEN_W, P_KEY, P_LOGIT_B, P_LOGIT_W, P_OUTPUT, P_QUERY, P_VALUE,
};
pub use tokenizer::{Tokenized, Tokenizer, MASK, PAD, UNK_PIECE};
pub use train::{evaluate_accuracy, train, EpochRecord, TrainConfig, TrainOutcome, TrainScheme};

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sentence has no tokens")]
    EmptySentence,
    #[error("token id {id} outside vocabulary of size {size}")]
    Vocabulary { id: usize, size: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training data: {0}")]
    Data(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
