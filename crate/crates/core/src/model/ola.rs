//! One-layer-attention classifier.
//!
//! ```text
//! E = embed(ids)                      [L, 64]
//! A = softmax(E Wq (E Wk)^T / 8 + M)  [L, L]   M = -1e9 on PAD keys
//! H = A (E Wv) Wo                     [L, 64]
//! p = w H                             [1, 64]  w = mean weights over non-PAD rows
//! logits = relu(p W1 + b1) W2 + b2    [1, 3]
//! ```
//!
//! Row-vector convention throughout. There is no positional signal, so the
//! model is a function of the token multiset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::tokenizer::{Tokenizer, PAD};
use super::ModelError;
use crate::numerics::{log_sum_exp, matmul_raw, softmax, Axis, NodeId, NumericsError, Tape, Tensor};

pub const EMBED_DIM: usize = 64;
pub const NUM_CLASSES: usize = 3;
pub const NUM_PARAMS: usize = 9;
const MASK_PENALTY: f64 = -1e9;

/// Index of each parameter tensor in [`OlaModel::params`].
pub const P_EMBEDDING: usize = 0;
pub const P_QUERY: usize = 1;
pub const P_KEY: usize = 2;
pub const P_VALUE: usize = 3;
pub const P_OUTPUT: usize = 4;
pub const P_HIDDEN_W: usize = 5;
pub const P_HIDDEN_B: usize = 6;
pub const P_LOGIT_W: usize = 7;
pub const P_LOGIT_B: usize = 8;

pub const PARAM_NAMES: [&str; NUM_PARAMS] = [
    "embedding",
    "w_query",
    "w_key",
    "w_value",
    "w_output",
    "w_hidden",
    "b_hidden",
    "w_logit",
    "b_logit",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Embedding,
    Attention,
    Classifier,
}

impl ParamGroup {
    pub fn of(param: usize) -> Self {
        match param {
            P_EMBEDDING => Self::Embedding,
            P_QUERY..=P_OUTPUT => Self::Attention,
            _ => Self::Classifier,
        }
    }
}

/// Trainable flag per parameter group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FreezeMask {
    pub embedding: bool,
    pub attention: bool,
    pub classifier: bool,
}

impl FreezeMask {
    pub fn trainable(&self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::Embedding => self.embedding,
            ParamGroup::Attention => self.attention,
            ParamGroup::Classifier => self.classifier,
        }
    }

    pub fn any(&self) -> bool {
        self.embedding || self.attention || self.classifier
    }
}

/// Differentiable evaluation recorded on a tape.
#[derive(Debug)]
pub struct Trace {
    pub tape: Tape,
    /// `[L, 64]` token embeddings.
    pub embeddings: NodeId,
    /// `[L, L]` attention weights, rows sum to 1.
    pub attention: NodeId,
    /// `[1, 3]`.
    pub logits: NodeId,
}

impl Trace {
    pub fn logits(&self) -> &Tensor {
        self.tape.value(self.logits)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OlaModel {
    pub tokenizer: Tokenizer,
    pub params: [Tensor; NUM_PARAMS],
    pub freeze: FreezeMask,
}

impl OlaModel {
    /// Fresh parameters: embeddings `N(0, 1)`, every linear weight and bias
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`. Everything starts frozen.
    pub fn init(tokenizer: Tokenizer, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = tokenizer.vocab_size();
        let d = EMBED_DIM;
        let embedding = Tensor::matrix(
            vocab,
            d,
            (0..vocab * d).map(|_| StandardNormal.sample(&mut rng)).collect(),
        );
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Tensor::matrix(
                rows,
                cols,
                (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect(),
            )
        };
        let params = [
            embedding,
            uniform(d, d, d),
            uniform(d, d, d),
            uniform(d, d, d),
            uniform(d, d, d),
            uniform(d, d, d),
            uniform(1, d, d),
            uniform(d, NUM_CLASSES, d),
            uniform(1, NUM_CLASSES, d),
        ];
        Self {
            tokenizer,
            params,
            freeze: FreezeMask::default(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.params[P_EMBEDDING].shape()[0]
    }

    /// Checks shapes against the tokenizer and that every value is finite.
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = EMBED_DIM;
        let expected: [[usize; 2]; NUM_PARAMS] = [
            [self.tokenizer.vocab_size(), d],
            [d, d],
            [d, d],
            [d, d],
            [d, d],
            [d, d],
            [1, d],
            [d, NUM_CLASSES],
            [1, NUM_CLASSES],
        ];
        for ((p, shape), name) in self.params.iter().zip(expected).zip(PARAM_NAMES) {
            if p.shape() != shape {
                return Err(ModelError::Checkpoint(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    p.shape()
                )));
            }
            if !p.is_finite() {
                return Err(ModelError::Checkpoint(format!("{name} holds non-finite values")));
            }
        }
        Ok(())
    }

    fn check_ids(&self, ids: &[usize]) -> Result<(), ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        let size = self.vocab_size();
        match ids.iter().find(|&&i| i >= size) {
            Some(&id) => Err(ModelError::Vocabulary { id, size }),
            None => Ok(()),
        }
    }

    /// `[L, 64]` embedding rows for `ids`.
    pub fn embed(&self, ids: &[usize]) -> Result<Tensor, ModelError> {
        self.check_ids(ids)?;
        let table = &self.params[P_EMBEDDING];
        let mut data = Vec::with_capacity(ids.len() * EMBED_DIM);
        for &id in ids {
            data.extend_from_slice(table.row_slice(id));
        }
        Ok(Tensor::matrix(ids.len(), EMBED_DIM, data))
    }

    /// Embedding row of a single token id, repeated `len` times.
    pub fn repeated_embedding(&self, id: usize, len: usize) -> Result<Tensor, ModelError> {
        self.embed(&vec![id; len])
    }

    pub(crate) fn padding(ids: &[usize]) -> Vec<bool> {
        ids.iter().map(|&i| i == PAD).collect()
    }

    /// Tape evaluation with embeddings as the differentiable input and all
    /// parameters constant. No position is treated as padding.
    pub fn trace(&self, embeddings: &Tensor) -> Result<Trace, ModelError> {
        let (l, _) = embeddings.dims2()?;
        self.build(embeddings.clone(), &vec![false; l])
    }

    /// Tape evaluation from token ids; PAD positions are masked.
    pub fn trace_ids(&self, ids: &[usize]) -> Result<Trace, ModelError> {
        let emb = self.embed(ids)?;
        self.build(emb, &Self::padding(ids))
    }

    fn build(&self, embeddings: Tensor, padding: &[bool]) -> Result<Trace, ModelError> {
        let mut tape = Tape::new();
        let e = tape.leaf(embeddings)?;
        let (attention, logits) = self.graph(&mut tape, e, None, padding)?;
        Ok(Trace {
            tape,
            embeddings: e,
            attention,
            logits,
        })
    }

    /// Appends the forward graph to `tape`, reading token embeddings from
    /// `embeddings`. Parameters other than the embedding table come from
    /// `params` (in [`PARAM_NAMES`] order, skipping the table) or are added
    /// as constants. Returns `(attention, logits)`.
    pub fn graph(
        &self,
        tape: &mut Tape,
        embeddings: NodeId,
        params: Option<[NodeId; NUM_PARAMS - 1]>,
        padding: &[bool],
    ) -> Result<(NodeId, NodeId), ModelError> {
        let (l, d) = tape.value(embeddings).dims2()?;
        if d != EMBED_DIM || padding.len() != l {
            return Err(ModelError::Numerics(NumericsError::Shape {
                op: "ola_forward",
                left: vec![l, d],
                right: vec![padding.len(), EMBED_DIM],
            }));
        }
        if padding.iter().all(|p| *p) {
            return Err(ModelError::EmptySentence);
        }
        let nodes = match params {
            Some(nodes) => nodes,
            None => {
                let mut nodes = [embeddings; NUM_PARAMS - 1];
                for (slot, p) in nodes.iter_mut().zip(&self.params[1..]) {
                    *slot = tape.constant(p.clone())?;
                }
                nodes
            }
        };
        let [wq, wk, wv, wo, w1, b1, w2, b2] = nodes;
        let e = embeddings;

        let q = tape.matmul(e, wq)?;
        let k = tape.matmul(e, wk)?;
        let v = tape.matmul(e, wv)?;
        let kt = tape.transpose(k)?;
        let raw = tape.matmul(q, kt)?;
        let scores = tape.scale(raw, 1.0 / (EMBED_DIM as f64).sqrt())?;
        let mask = tape.constant(key_mask(padding))?;
        let masked = tape.add(scores, mask)?;
        let attention = tape.softmax(masked, Axis::Cols)?;
        let mixed = tape.matmul(attention, v)?;
        let h = tape.matmul(mixed, wo)?;
        let pool = tape.constant(Tensor::row(pool_weights(padding)))?;
        let pooled = tape.matmul(pool, h)?;
        let z1 = tape.matmul(pooled, w1)?;
        let z1 = tape.add(z1, b1)?;
        let a1 = tape.relu(z1)?;
        let z2 = tape.matmul(a1, w2)?;
        let logits = tape.add(z2, b2)?;
        Ok((attention, logits))
    }

    /// Class logits for token ids, without recording a tape.
    pub fn logits(&self, ids: &[usize]) -> Result<[f64; NUM_CLASSES], ModelError> {
        let emb = self.embed(ids)?;
        Ok(self.fast_forward(emb.data(), &Self::padding(ids))?.0)
    }

    /// Class logits for an embedding matrix (no padding), without a tape.
    pub fn logits_from_embeddings(&self, embeddings: &Tensor) -> Result<[f64; NUM_CLASSES], ModelError> {
        let (l, d) = embeddings.dims2()?;
        if d != EMBED_DIM {
            return Err(ModelError::Numerics(NumericsError::Shape {
                op: "ola_forward",
                left: embeddings.shape().to_vec(),
                right: vec![l, EMBED_DIM],
            }));
        }
        Ok(self.fast_forward(embeddings.data(), &vec![false; l])?.0)
    }

    /// `[L, L]` attention weights for token ids.
    pub fn attention(&self, ids: &[usize]) -> Result<Tensor, ModelError> {
        let emb = self.embed(ids)?;
        Ok(self.fast_forward(emb.data(), &Self::padding(ids))?.1)
    }

    fn fast_forward(&self, emb: &[f64], padding: &[bool]) -> Result<([f64; NUM_CLASSES], Tensor), ModelError> {
        let l = padding.len();
        let d = EMBED_DIM;
        let p = |i: usize| self.params[i].data();
        let q = matmul_raw(emb, p(P_QUERY), l, d, d);
        let k = matmul_raw(emb, p(P_KEY), l, d, d);
        let v = matmul_raw(emb, p(P_VALUE), l, d, d);
        self.attend_and_classify(&q, &k, &v, padding)
    }

    /// Everything after the query/key/value projections. Pooling is applied
    /// before the output projection, which is exact because both are linear.
    fn attend_and_classify(
        &self,
        q: &[f64],
        k: &[f64],
        v: &[f64],
        padding: &[bool],
    ) -> Result<([f64; NUM_CLASSES], Tensor), ModelError> {
        let l = padding.len();
        let d = EMBED_DIM;
        if padding.iter().all(|p| *p) {
            return Err(ModelError::EmptySentence);
        }
        let p = |i: usize| self.params[i].data();
        let scale = 1.0 / (d as f64).sqrt();
        let mut scores = vec![0.0; l * l];
        for i in 0..l {
            let qi = &q[i * d..(i + 1) * d];
            for j in 0..l {
                let dot: f64 = qi.iter().zip(&k[j * d..(j + 1) * d]).map(|(a, b)| a * b).sum();
                scores[i * l + j] = dot * scale + if padding[j] { MASK_PENALTY } else { 0.0 };
            }
        }
        let attention = softmax(&Tensor::matrix(l, l, scores), Axis::Cols)?;
        let column_weights = matmul_raw(&pool_weights(padding), attention.data(), 1, l, l);
        let pooled_values = matmul_raw(&column_weights, v, 1, l, d);
        let pooled = matmul_raw(&pooled_values, p(P_OUTPUT), 1, d, d);
        let mut hidden = matmul_raw(&pooled, p(P_HIDDEN_W), 1, d, d);
        for (z, b) in hidden.iter_mut().zip(p(P_HIDDEN_B)) {
            *z = (*z + b).max(0.0);
        }
        let out = matmul_raw(&hidden, p(P_LOGIT_W), 1, d, NUM_CLASSES);
        let mut logits = [0.0; NUM_CLASSES];
        for ((o, z), b) in logits.iter_mut().zip(out).zip(p(P_LOGIT_B)) {
            *o = z + b;
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(ModelError::Numerics(NumericsError::NonFinite { op: "ola_forward" }));
        }
        Ok((logits, attention))
    }

    /// Logits for many variants of one sentence in which each position holds
    /// either its own embedding row (`keep[t]`) or the matching row of
    /// `replacement`. Projections are computed once for both inputs.
    pub fn substitution_logits(
        &self,
        embeddings: &Tensor,
        replacement: &Tensor,
        keeps: &[Vec<bool>],
    ) -> Result<Vec<[f64; NUM_CLASSES]>, ModelError> {
        let (l, d) = embeddings.dims2()?;
        if replacement.shape() != embeddings.shape() || d != EMBED_DIM {
            return Err(ModelError::Numerics(NumericsError::Shape {
                op: "substitution_logits",
                left: embeddings.shape().to_vec(),
                right: replacement.shape().to_vec(),
            }));
        }
        let p = |i: usize| self.params[i].data();
        let project = |e: &[f64]| {
            [P_QUERY, P_KEY, P_VALUE].map(|w| matmul_raw(e, p(w), l, d, d))
        };
        let own = project(embeddings.data());
        let alt = project(replacement.data());
        let padding = vec![false; l];
        let mut qkv = [vec![0.0; l * d], vec![0.0; l * d], vec![0.0; l * d]];
        keeps
            .iter()
            .map(|keep| {
                if keep.len() != l {
                    return Err(ModelError::Numerics(NumericsError::Shape {
                        op: "substitution_logits",
                        left: vec![l],
                        right: vec![keep.len()],
                    }));
                }
                for (m, buf) in qkv.iter_mut().enumerate() {
                    for (t, &kept) in keep.iter().enumerate() {
                        let src = if kept { &own[m] } else { &alt[m] };
                        buf[t * d..(t + 1) * d].copy_from_slice(&src[t * d..(t + 1) * d]);
                    }
                }
                Ok(self.attend_and_classify(&qkv[0], &qkv[1], &qkv[2], &padding)?.0)
            })
            .collect()
    }

    /// Arg-max class; ties go to the lowest class id.
    pub fn predict(&self, ids: &[usize]) -> Result<usize, ModelError> {
        Ok(argmax(&self.logits(ids)?))
    }

    pub fn probabilities(&self, ids: &[usize]) -> Result<[f64; NUM_CLASSES], ModelError> {
        let z = self.logits(ids)?;
        let lse = log_sum_exp(&z);
        Ok(z.map(|v| (v - lse).exp()))
    }

    /// Mean cross-entropy over `(ids, target)` pairs.
    pub fn loss<'a>(&self, batch: impl IntoIterator<Item = (&'a [usize], usize)>) -> Result<f64, ModelError> {
        let mut total = 0.0;
        let mut n = 0usize;
        for (ids, target) in batch {
            let z = self.logits(ids)?;
            total += log_sum_exp(&z) - z[target];
            n += 1;
        }
        if n == 0 {
            return Err(ModelError::EmptySentence);
        }
        Ok(total / n as f64)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn key_mask(padding: &[bool]) -> Tensor {
    let l = padding.len();
    let mut data = vec![0.0; l * l];
    for row in data.chunks_mut(l) {
        for (m, &p) in row.iter_mut().zip(padding) {
            if p {
                *m = MASK_PENALTY;
            }
        }
    }
    Tensor::matrix(l, l, data)
}

fn pool_weights(padding: &[bool]) -> Vec<f64> {
    let valid = padding.iter().filter(|p| !**p).count() as f64;
    padding.iter().map(|&p| if p { 0.0 } else { 1.0 / valid }).collect()
}
