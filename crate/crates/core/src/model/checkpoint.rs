//! Textual model checkpoints.
//!
//! A checkpoint is one JSON object:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "scheme": "CEA",
//!   "seed": 3,
//!   "test_accuracy": 0.99,            // null when unknown
//!   "freeze": {"embedding": true, "attention": true, "classifier": true},
//!   "tokenizer": {"tokens": ["[PAD]", "[MASK]", "[UNK]", ...]},
//!   "params": [{"name": "embedding", "shape": [V, 64], "data": [...]}, ...]
//! }
//! ```
//!
//! `params` lists the nine tensors in a fixed order, data row-major. Floats
//! are written in shortest round-trip form, so load(save(m)) == m bitwise
//! and saving the same model twice yields identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ola::{FreezeMask, OlaModel, NUM_PARAMS, PARAM_NAMES};
use super::tokenizer::Tokenizer;
use super::train::TrainScheme;
use super::ModelError;
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub scheme: TrainScheme,
    pub seed: u64,
    pub test_accuracy: Option<f64>,
    pub model: OlaModel,
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u32,
    scheme: TrainScheme,
    seed: u64,
    test_accuracy: Option<f64>,
    freeze: FreezeMask,
    tokenizer: Tokenizer,
    params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, ModelError> {
        let doc = Document {
            format_version: CHECKPOINT_FORMAT_VERSION,
            scheme: self.scheme,
            seed: self.seed,
            test_accuracy: self.test_accuracy,
            freeze: self.model.freeze,
            tokenizer: self.model.tokenizer.clone(),
            params: self
                .model
                .params
                .iter()
                .zip(PARAM_NAMES)
                .map(|(p, name)| ParamRecord {
                    name: name.to_string(),
                    shape: p.shape().to_vec(),
                    data: p.data().to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: Document = serde_json::from_str(text)?;
        if doc.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format version {}",
                doc.format_version
            )));
        }
        if doc.params.len() != NUM_PARAMS {
            return Err(ModelError::Checkpoint(format!(
                "expected {NUM_PARAMS} parameter tensors, found {}",
                doc.params.len()
            )));
        }
        let mut tensors = Vec::with_capacity(NUM_PARAMS);
        for (record, expected) in doc.params.into_iter().zip(PARAM_NAMES) {
            if record.name != expected {
                return Err(ModelError::Checkpoint(format!(
                    "parameter {:?} where {expected:?} was expected",
                    record.name
                )));
            }
            tensors.push(Tensor::new(record.shape, record.data)?);
        }
        let params: [Tensor; NUM_PARAMS] = tensors.try_into().expect("length checked above");
        let model = OlaModel {
            tokenizer: doc.tokenizer.rebuild(),
            params,
            freeze: doc.freeze,
        };
        model.validate()?;
        Ok(Self {
            scheme: doc.scheme,
            seed: doc.seed,
            test_accuracy: doc.test_accuracy,
            model,
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<(), ModelError> {
    fs::write(path, checkpoint.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    Checkpoint::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let tok = Tokenizer::from_entries(["she", "he", "they", "runs"].map(String::from));
        let mut model = OlaModel::init(tok, 42);
        model.freeze = TrainScheme::CE.freeze_mask();
        Checkpoint {
            scheme: TrainScheme::CE,
            seed: 42,
            test_accuracy: Some(0.5),
            model,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&c, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json().unwrap(), c.to_json().unwrap());
        assert_eq!(back.model.logits(&[3, 6]).unwrap(), c.model.logits(&[3, 6]).unwrap());
    }

    #[test]
    fn rejects_other_versions_and_bad_shapes() {
        let json = sample().to_json().unwrap();
        let v2 = json.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(Checkpoint::from_json(&v2), Err(ModelError::Checkpoint(_))));
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc["params"][1]["shape"] = serde_json::json!([32, 128]);
        assert!(Checkpoint::from_json(&doc.to_string()).is_err());
    }
}
