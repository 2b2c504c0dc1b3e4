//! Transformer encoder with classification, localization and repair heads
//! attached to the last three layers according to a task order.

mod checkpoint;
mod forward;
mod params;
mod vocab;

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::syntax::BugKind;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use forward::{backward, forward, forward_cached, ForwardCache, OutputGrads};
pub use params::{Layer, ModelParams, RepHead};
pub use vocab::{Vocab, CLS, UNK};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("mask has no set bit")]
    EmptyMask,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Cls,
    Loc,
    Rep,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Cls => "cls",
            Task::Loc => "loc",
            Task::Rep => "rep",
        }
    }
}

/// Which encoder layer each head reads. In a hierarchy the first task reads
/// layer k-2, the second k-1 and the third k; `Flat` puts every head on k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadsOrder {
    Hierarchy([Task; 3]),
    Flat,
}

impl HeadsOrder {
    pub fn default_for(kind: BugKind) -> Self {
        use Task::*;
        HeadsOrder::Hierarchy(match kind {
            BugKind::VarMisuse => [Cls, Loc, Rep],
            BugKind::WrongBinop => [Rep, Loc, Cls],
            BugKind::ArgSwap => [Loc, Cls, Rep],
        })
    }

    /// Layer index read by `task`, where 0 is the embedding output and `k`
    /// the last encoder layer.
    pub fn layer_for(self, task: Task, k: usize) -> usize {
        match self {
            HeadsOrder::Flat => k,
            HeadsOrder::Hierarchy(order) => {
                let pos = order.iter().position(|&t| t == task).expect("order is a permutation");
                k - 2 + pos
            }
        }
    }
}

impl fmt::Display for HeadsOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadsOrder::Flat => f.write_str("flat"),
            HeadsOrder::Hierarchy(o) => write!(f, "{},{},{}", o[0].as_str(), o[1].as_str(), o[2].as_str()),
        }
    }
}

impl FromStr for HeadsOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "flat" {
            return Ok(HeadsOrder::Flat);
        }
        let tasks: Vec<Task> = s
            .split(',')
            .map(|t| match t.trim() {
                "cls" => Ok(Task::Cls),
                "loc" => Ok(Task::Loc),
                "rep" => Ok(Task::Rep),
                other => Err(format!("unknown task {other:?} in order {s:?}")),
            })
            .collect::<Result<_, _>>()?;
        let [a, b, c] = tasks[..] else {
            return Err(format!("order {s:?} must name three tasks"));
        };
        if a == b || b == c || a == c {
            return Err(format!("order {s:?} repeats a task"));
        }
        Ok(HeadsOrder::Hierarchy([a, b, c]))
    }
}

impl Serialize for HeadsOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for HeadsOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: BugKind,
    pub vocab_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads_order: HeadsOrder,
    /// Maximum number of program tokens; the positional table has one more
    /// row for the classification token.
    pub max_len: usize,
    pub gamma: f64,
    pub beta: f64,
    /// Replace the linear pointer losses with `-ln(sum P*C)`.
    pub log_pointer_loss: bool,
}

impl ModelConfig {
    pub fn new(kind: BugKind) -> Self {
        ModelConfig {
            kind,
            vocab_size: 2,
            dim: 128,
            layers: 6,
            heads_order: HeadsOrder::default_for(kind),
            max_len: 512,
            gamma: 2.0,
            beta: default_beta(kind),
            log_pointer_loss: false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim == 0 || self.layers == 0 || self.max_len == 0 {
            return Err(ModelError::Config("dim, layers and max_len must be positive".into()));
        }
        if self.vocab_size < 2 {
            return Err(ModelError::Config("vocabulary needs the two special tokens".into()));
        }
        if self.heads_order != HeadsOrder::Flat && self.layers < 3 {
            return Err(ModelError::Config(format!("a task hierarchy needs at least 3 layers, got {}", self.layers)));
        }
        if !(self.gamma >= 0.0) || !self.beta.is_finite() {
            return Err(ModelError::Config("gamma must be >= 0 and beta finite".into()));
        }
        Ok(())
    }
}

pub fn default_beta(kind: BugKind) -> f64 {
    match kind {
        BugKind::VarMisuse => 0.5,
        BugKind::WrongBinop => 4.0,
        BugKind::ArgSwap => 0.5,
    }
}

/// Model outputs for one sample. `p_loc` is over program tokens (the
/// classification token is not a position); `p_rep` is over program tokens
/// or over the operator vocabulary for wrong-binop.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<F> {
    pub p_cls: [F; 2],
    pub p_loc: Array1<F>,
    pub p_rep: Array1<F>,
    pub h_cls: Array1<F>,
}

impl<F: Scalar> Prediction<F> {
    pub fn p_buggy(&self) -> F {
        self.p_cls[1]
    }
}

/// Softmax over the set positions of `mask`; exact zeros elsewhere.
pub fn masked_softmax<F: Scalar>(scores: &[F], mask: &[bool]) -> Result<Array1<F>, ModelError> {
    if scores.len() != mask.len() {
        return Err(ModelError::Shape(format!("{} scores for a mask of {}", scores.len(), mask.len())));
    }
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(None, |acc: Option<F>, s| Some(acc.map_or(s, |a| a.max(s))))
        .ok_or(ModelError::EmptyMask)?;
    let mut out = Array1::zeros(scores.len());
    let mut total = F::zero();
    for (i, (&s, &m)) in scores.iter().zip(mask).enumerate() {
        if m {
            let e = (s - max).exp();
            out[i] = e;
            total += e;
        }
    }
    out.mapv_inplace(|x| x / total);
    Ok(out)
}

/// +1 iff the buggy probability reaches the threshold.
pub fn classify<F: Scalar>(pred: &Prediction<F>, threshold: F) -> i8 {
    if pred.p_cls[1] >= threshold {
        1
    } else {
        -1
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<F: Scalar>(v: &Array1<F>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Predicted (location, repair) pair.
pub fn point<F: Scalar>(pred: &Prediction<F>) -> (usize, usize) {
    (argmax(&pred.p_loc), argmax(&pred.p_rep))
}

/// Configuration, vocabulary and parameters together.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ModelParams<F>,
}

impl<F: Scalar> Model<F> {
    pub fn new<R: rand::Rng + ?Sized>(mut config: ModelConfig, vocab: Vocab, rng: &mut R) -> Result<Self, ModelError> {
        config.vocab_size = vocab.len();
        config.validate()?;
        let params = ModelParams::init(&config, rng);
        Ok(Model { config, vocab, params })
    }

    pub fn predict(&self, sample: &crate::corpus::Sample) -> Result<Prediction<F>, ModelError> {
        forward(&self.params, &self.config, &self.vocab.encode(&sample.tokens), sample)
    }
}
