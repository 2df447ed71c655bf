//! Oracles shared by the integration tests. Each is written independently of
//! the library code it checks.

#![allow(dead_code)]

use std::collections::BTreeMap;

use attribench::attribution::{AttributionError, Explainable};
use attribench::numerics::{Axis, NodeId, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `logit_c(E) = sum_t w_c . e_t + b_c`; token 0 plays `[MASK]`.
pub struct LinearToy {
    pub table: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearToy {
    pub fn new(vocab: usize, dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut row = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        Self {
            table: (0..vocab).map(|_| row(dim)).collect(),
            weights: (0..classes).map(|_| row(dim)).collect(),
            bias: row(classes),
        }
    }

    fn dim(&self) -> usize {
        self.table[0].len()
    }

    /// Direct evaluation from ids, bypassing tensors.
    pub fn logit_of_ids(&self, ids: &[usize], class: usize) -> f64 {
        let w = &self.weights[class];
        ids.iter()
            .map(|&i| self.table[i].iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .sum::<f64>()
            + self.bias[class]
    }
}

impl Explainable for LinearToy {
    fn embed(&self, ids: &[usize]) -> Result<Tensor, AttributionError> {
        let data = ids.iter().flat_map(|&i| self.table[i].iter().copied()).collect();
        Ok(Tensor::matrix(ids.len(), self.dim(), data))
    }

    fn mask_id(&self) -> usize {
        0
    }

    fn logits(&self, embeddings: &Tensor) -> Result<Vec<f64>, AttributionError> {
        let (l, _) = embeddings.dims2()?;
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| {
                (0..l)
                    .map(|t| embeddings.row_slice(t).iter().zip(w).map(|(a, c)| a * c).sum::<f64>())
                    .sum::<f64>()
                    + b
            })
            .collect())
    }

    fn record(&self, tape: &mut Tape, embeddings: NodeId) -> Result<NodeId, AttributionError> {
        let (classes, dim) = (self.weights.len(), self.dim());
        let mut wt = vec![0.0; dim * classes];
        for (c, w) in self.weights.iter().enumerate() {
            for (k, v) in w.iter().enumerate() {
                wt[k * classes + c] = *v;
            }
        }
        let w = tape.constant(Tensor::matrix(dim, classes, wt))?;
        let b = tape.constant(Tensor::row(self.bias.clone()))?;
        let z = tape.matmul(embeddings, w)?;
        let s = tape.sum(z, Axis::Rows)?;
        Ok(tape.add(s, b)?)
    }
}

/// Shapley values from the subset formula over all `2^d` coalitions.
pub fn brute_force_shapley(d: usize, f: impl Fn(&[bool]) -> f64) -> Vec<f64> {
    let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    (0..d)
        .map(|i| {
            let mut phi = 0.0;
            for mask in 0..(1usize << d) {
                if mask >> i & 1 == 1 {
                    continue;
                }
                let without: Vec<bool> = (0..d).map(|j| mask >> j & 1 == 1).collect();
                let mut with = without.clone();
                with[i] = true;
                let s = mask.count_ones() as usize;
                phi += fact(s) * fact(d - s - 1) / fact(d) * (f(&with) - f(&without));
            }
            phi
        })
        .collect()
}

/// Minimal JSON value for the corpus conformance check.
#[derive(Clone, Debug, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(BTreeMap<String, Json>),
}

/// Recursive-descent reader for one JSON document; `None` on any syntax error.
pub fn parse_json(text: &str) -> Option<Json> {
    let mut p = Reader {
        s: text.as_bytes(),
        i: 0,
    };
    let v = p.value()?;
    p.ws();
    (p.i == p.s.len()).then_some(v)
}

struct Reader<'a> {
    s: &'a [u8],
    i: usize,
}

impl Reader<'_> {
    fn ws(&mut self) {
        while self.i < self.s.len() && matches!(self.s[self.i], b' ' | b'\t' | b'\n' | b'\r') {
            self.i += 1;
        }
    }

    fn eat(&mut self, c: u8) -> Option<()> {
        self.ws();
        (self.s.get(self.i) == Some(&c)).then(|| self.i += 1)
    }

    fn lit(&mut self, word: &str, v: Json) -> Option<Json> {
        self.s[self.i..].starts_with(word.as_bytes()).then(|| {
            self.i += word.len();
            v
        })
    }

    fn value(&mut self) -> Option<Json> {
        self.ws();
        match *self.s.get(self.i)? {
            b'{' => {
                self.i += 1;
                let mut m = BTreeMap::new();
                if self.eat(b'}').is_some() {
                    return Some(Json::Obj(m));
                }
                loop {
                    self.ws();
                    let Json::Str(k) = self.string()? else { return None };
                    self.eat(b':')?;
                    let v = self.value()?;
                    if m.insert(k, v).is_some() {
                        return None;
                    }
                    if self.eat(b',').is_none() {
                        self.eat(b'}')?;
                        return Some(Json::Obj(m));
                    }
                }
            }
            b'[' => {
                self.i += 1;
                let mut a = Vec::new();
                if self.eat(b']').is_some() {
                    return Some(Json::Arr(a));
                }
                loop {
                    a.push(self.value()?);
                    if self.eat(b',').is_none() {
                        self.eat(b']')?;
                        return Some(Json::Arr(a));
                    }
                }
            }
            b'"' => self.string(),
            b't' => self.lit("true", Json::Bool(true)),
            b'f' => self.lit("false", Json::Bool(false)),
            b'n' => self.lit("null", Json::Null),
            _ => {
                let start = self.i;
                while self.i < self.s.len() && matches!(self.s[self.i], b'-' | b'+' | b'.' | b'e' | b'E' | b'0'..=b'9')
                {
                    self.i += 1;
                }
                std::str::from_utf8(&self.s[start..self.i]).ok()?.parse().ok().map(Json::Num)
            }
        }
    }

    fn string(&mut self) -> Option<Json> {
        if self.s.get(self.i) != Some(&b'"') {
            return None;
        }
        self.i += 1;
        let mut out = Vec::new();
        loop {
            let c = *self.s.get(self.i)?;
            self.i += 1;
            match c {
                b'"' => return String::from_utf8(out).ok().map(Json::Str),
                b'\\' => {
                    let e = *self.s.get(self.i)?;
                    self.i += 1;
                    match e {
                        b'"' | b'\\' | b'/' => out.push(e),
                        b'n' => out.push(b'\n'),
                        b't' => out.push(b'\t'),
                        b'r' => out.push(b'\r'),
                        b'b' => out.push(8),
                        b'f' => out.push(12),
                        b'u' => {
                            let hex = std::str::from_utf8(self.s.get(self.i..self.i + 4)?).ok()?;
                            self.i += 4;
                            let ch = char::from_u32(u32::from_str_radix(hex, 16).ok()?)?;
                            out.extend(ch.to_string().as_bytes());
                        }
                        _ => return None,
                    }
                }
                _ => out.push(c),
            }
        }
    }
}
