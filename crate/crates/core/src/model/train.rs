//! Mini-batch Adam training under a layer-freezing scheme.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ola::{argmax, FreezeMask, OlaModel, ParamGroup, NUM_PARAMS, P_EMBEDDING};
use super::ModelError;
use crate::corpus::{DatasetBundle, LabeledSentence};
use crate::numerics::{BackwardPolicy, Tape, Tensor};

/// Which parameter groups receive updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrainScheme {
    /// No updates: the randomly initialized model.
    #[default]
    ZS,
    /// Classifier head only.
    C,
    /// Classifier head and embedding table.
    CE,
    /// Every group.
    CEA,
}

impl TrainScheme {
    pub const LADDER: [TrainScheme; 4] = [Self::ZS, Self::C, Self::CE, Self::CEA];

    pub fn freeze_mask(self) -> FreezeMask {
        let (embedding, attention, classifier) = match self {
            Self::ZS => (false, false, false),
            Self::C => (false, false, true),
            Self::CE => (true, false, true),
            Self::CEA => (true, true, true),
        };
        FreezeMask {
            embedding,
            attention,
            classifier,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ZS => "ZS",
            Self::C => "C",
            Self::CE => "CE",
            Self::CEA => "CEA",
        }
    }
}

impl fmt::Display for TrainScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainScheme {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::LADDER
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::Config(format!("unknown scheme {s:?}")))
    }
}

fn default_batch_size() -> usize {
    64
}
fn default_max_epochs() -> usize {
    200
}
fn default_learning_rate() -> f64 {
    0.01
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_validation_fraction() -> f64 {
    0.1
}
fn default_patience() -> usize {
    20
}

/// Optimizer and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Drives initialization, shuffling and the validation carve.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Share of training base sentences held out for snapshot selection.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(0)
    }
}

impl TrainConfig {
    pub const MAX_EPOCHS: usize = 200;

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            learning_rate: default_learning_rate(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            validation_fraction: default_validation_fraction(),
            patience: default_patience(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.max_epochs == 0 || self.max_epochs > Self::MAX_EPOCHS {
            return fail("max_epochs must lie in 1..=200");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail("validation_fraction must lie in [0, 1)");
        }
        if self.patience == 0 {
            return fail("patience must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the evaluation-only pass of an untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: OlaModel,
    pub scheme: TrainScheme,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub test_accuracy: f64,
}

type Example = (Vec<usize>, usize);

fn encode(model: &OlaModel, sentences: &[&LabeledSentence]) -> Result<Vec<Example>, ModelError> {
    sentences
        .iter()
        .map(|s| Ok((model.tokenizer.tokenize(s)?.ids, s.target())))
        .collect()
}

fn accuracy_of(model: &OlaModel, data: &[Example]) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (ids, target) in data {
        if model.predict(ids)? == *target {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Arg-max accuracy in `[0, 1]`; an empty slice scores 0.
pub fn evaluate_accuracy(model: &OlaModel, sentences: &[LabeledSentence]) -> Result<f64, ModelError> {
    let refs: Vec<&LabeledSentence> = sentences.iter().collect();
    accuracy_of(model, &encode(model, &refs)?)
}

/// Partitions training sentences into (fit, validation) by base sentence.
fn carve_validation(
    train: &[LabeledSentence],
    fraction: f64,
    seed: u64,
) -> (Vec<&LabeledSentence>, Vec<&LabeledSentence>) {
    let bases: BTreeSet<usize> = train.iter().map(|s| s.sentence_idx).collect();
    let n_val = (fraction * bases.len() as f64).round() as usize;
    if n_val == 0 || n_val >= bases.len() {
        return (train.iter().collect(), Vec::new());
    }
    let mut order: Vec<usize> = bases.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    order.shuffle(&mut rng);
    let val: BTreeSet<usize> = order[..n_val].iter().copied().collect();
    train.iter().partition(|s| !val.contains(&s.sentence_idx))
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &OlaModel) -> Self {
        let zeros = || model.params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut OlaModel, grads: &[Vec<f64>], trainable: &[bool; NUM_PARAMS], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for p in (0..NUM_PARAMS).filter(|&p| trainable[p]) {
            let (m, v) = (&mut self.m[p], &mut self.v[p]);
            for (((w, g), m), v) in model.params[p].data_mut().iter_mut().zip(&grads[p]).zip(m).zip(v) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *w -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Adds the cross-entropy gradient of one example to `grads`; returns the
/// loss and the logits.
fn accumulate(
    model: &OlaModel,
    (ids, target): &Example,
    trainable: &[bool; NUM_PARAMS],
    grads: &mut [Vec<f64>],
) -> Result<(f64, [f64; 3]), ModelError> {
    let mut tape = Tape::new();
    let emb = model.embed(ids)?;
    let e = if trainable[P_EMBEDDING] {
        tape.leaf(emb)?
    } else {
        tape.constant(emb)?
    };
    let mut nodes = [e; NUM_PARAMS - 1];
    for (i, slot) in nodes.iter_mut().enumerate() {
        let p = model.params[i + 1].clone();
        *slot = if trainable[i + 1] { tape.leaf(p)? } else { tape.constant(p)? };
    }
    let (_, logits) = model.graph(&mut tape, e, Some(nodes), &OlaModel::padding(ids))?;
    let z: [f64; 3] = tape.value(logits).data().try_into().expect("three logits");
    let loss = tape.cross_entropy(logits, *target)?;
    let loss_value = tape.value(loss).item()?;
    let mut g = tape.grad(loss, &BackwardPolicy::standard())?;

    if trainable[P_EMBEDDING] {
        let ge = g.take(e);
        let table = &mut grads[P_EMBEDDING];
        let dim = ge.shape()[1];
        for (t, &id) in ids.iter().enumerate() {
            for (acc, v) in table[id * dim..(id + 1) * dim].iter_mut().zip(ge.row_slice(t)) {
                *acc += v;
            }
        }
    }
    for (i, &node) in nodes.iter().enumerate() {
        if trainable[i + 1] {
            add_into(&mut grads[i + 1], &g.take(node));
        }
    }
    Ok((loss_value, z))
}

fn add_into(acc: &mut [f64], g: &Tensor) {
    for (a, v) in acc.iter_mut().zip(g.data()) {
        *a += v;
    }
}

/// Trains `model` under `scheme` on `bundle.train`, keeping the parameters
/// of the epoch with the best validation accuracy (first maximum wins).
/// Stops early after `patience` epochs without improvement or once
/// validation accuracy reaches 1.
pub fn train(
    mut model: OlaModel,
    scheme: TrainScheme,
    config: &TrainConfig,
    bundle: &DatasetBundle,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if bundle.train.is_empty() {
        return Err(ModelError::Data("training split is empty".into()));
    }
    model.validate()?;
    model.freeze = scheme.freeze_mask();
    let test_refs: Vec<&LabeledSentence> = bundle.test.iter().collect();
    let test = encode(&model, &test_refs)?;

    if scheme == TrainScheme::ZS {
        let all_train: Vec<&LabeledSentence> = bundle.train.iter().collect();
        let train_data = encode(&model, &all_train)?;
        let loss = model.loss(train_data.iter().map(|(ids, t)| (ids.as_slice(), *t)))?;
        let test_accuracy = accuracy_of(&model, &test)?;
        let record = EpochRecord {
            epoch: 0,
            train_loss: loss,
            train_accuracy: accuracy_of(&model, &train_data)?,
            validation_accuracy: None,
            test_accuracy,
        };
        return Ok(TrainOutcome {
            model,
            scheme,
            history: vec![record],
            best_epoch: 0,
            test_accuracy,
        });
    }

    let (fit_refs, val_refs) = carve_validation(&bundle.train, config.validation_fraction, config.seed);
    let fit = encode(&model, &fit_refs)?;
    let val = encode(&model, &val_refs)?;

    let mask = scheme.freeze_mask();
    let trainable: [bool; NUM_PARAMS] = std::array::from_fn(|p| mask.trainable(ParamGroup::of(p)));
    let mut adam = Adam::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut grads: Vec<Vec<f64>> = model.params.iter().map(|p| vec![0.0; p.len()]).collect();

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, OlaModel)> = None;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            for g in grads.iter_mut() {
                g.fill(0.0);
            }
            for &i in batch {
                let (loss, z) = accumulate(&model, &fit[i], &trainable, &mut grads)?;
                loss_sum += loss;
                if argmax(&z) == fit[i].1 {
                    correct += 1;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in grads.iter_mut() {
                g.iter_mut().for_each(|v| *v *= inv);
            }
            adam.update(&mut model, &grads, &trainable, config);
        }
        let train_accuracy = correct as f64 / fit.len() as f64;
        let selection = if val.is_empty() {
            accuracy_of(&model, &fit)?
        } else {
            accuracy_of(&model, &val)?
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / fit.len() as f64,
            train_accuracy,
            validation_accuracy: (!val.is_empty()).then_some(selection),
            test_accuracy: accuracy_of(&model, &test)?,
        });
        log::debug!("{scheme} seed {} epoch {epoch}: selection accuracy {selection:.4}", config.seed);
        let improved = best.as_ref().is_none_or(|(acc, _, _)| selection > *acc);
        if improved {
            best = Some((selection, epoch, model.clone()));
        }
        let since_best = epoch - best.as_ref().map_or(epoch, |b| b.1);
        if selection >= 1.0 || since_best >= config.patience {
            break;
        }
    }

    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    let test_accuracy = accuracy_of(&model, &test)?;
    Ok(TrainOutcome {
        model,
        scheme,
        history,
        best_epoch,
        test_accuracy,
    })
}
