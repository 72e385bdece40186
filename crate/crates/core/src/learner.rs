//! Full-batch gradient descent on fact weights with a cross-entropy loss over
//! softmaxed query responses.

use std::fmt;

use rayon::prelude::*;

use crate::autodiff::{backprop, ParamGradients};
use crate::compiler::FunctionRegistry;
use crate::error::{Error, Result};
use crate::factorgraph::Mode;
use crate::kb::{KnowledgeBase, WEIGHTED};
use crate::runtime::{eval_function, evaluate, Query};
use crate::sparse::{ConstId, SparseVector};

/// Loss charged to an example none of whose positives has proof mass.
pub const MISSING_ANSWER_LOSS: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub query: Query,
    pub positives: Vec<String>,
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.query.pred,
            self.query.mode,
            self.query.constant,
            self.positives.join(",")
        )
    }
}

/// Parses an examples file: `pred TAB mode TAB input TAB pos1[,pos2,...]`.
pub fn load_examples(text: &str) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Facts { line, message };
        let cols: Vec<&str> = content.split('\t').map(str::trim).collect();
        let [pred, mode, input, pos] = cols[..] else {
            return Err(err(format!("expected 4 tab-separated columns, found {}", cols.len())));
        };
        let mode: Mode = mode.parse().map_err(|e: Error| err(e.to_string()))?;
        let mut positives: Vec<String> = Vec::new();
        for p in pos.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if !positives.iter().any(|q| q == p) {
                positives.push(p.to_string());
            }
        }
        if positives.is_empty() {
            return Err(err("an example needs at least one positive answer".into()));
        }
        out.push(Example {
            query: Query::new(pred, mode, input),
            positives,
        });
    }
    Ok(out)
}

pub fn serialize_examples(examples: &[Example]) -> String {
    examples.iter().map(|e| format!("{e}\n")).collect()
}

/// Which fact weights the learner may change. Rule weights (`weighted`
/// facts) are always trainable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Trainable {
    AllFacts,
    TaggedOnly,
    Predicates(Vec<String>),
}

impl Trainable {
    pub fn mask(&self, kb: &KnowledgeBase) -> Vec<bool> {
        kb.facts()
            .map(|(_, f)| {
                f.pred == WEIGHTED
                    || match self {
                        Trainable::AllFacts => true,
                        Trainable::TaggedOnly => false,
                        Trainable::Predicates(ps) => ps.iter().any(|p| *p == f.pred),
                    }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub max_depth: usize,
    pub trainable: Trainable,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 30,
            max_depth: 10,
            trainable: Trainable::TaggedOnly,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Invalid("learning rate must be non-negative".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Invalid("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Softmax over the support of `g` against a uniform target on the positives
/// that have proof mass. Returns the loss and `dLoss/dg = p - t` on the
/// support. When no positive has mass the loss is [`MISSING_ANSWER_LOSS`] and
/// the gradient is zero.
pub fn loss_and_grad(g: &SparseVector, positives: &[ConstId]) -> (f64, SparseVector) {
    let dim = g.dim();
    let support: Vec<(ConstId, f64)> = g.iter().filter(|&(_, v)| v > 0.0).collect();
    let hits: Vec<ConstId> = support
        .iter()
        .map(|&(i, _)| i)
        .filter(|i| positives.contains(i))
        .collect();
    if hits.is_empty() {
        return (MISSING_ANSWER_LOSS, SparseVector::zeros(dim));
    }
    let max = support.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = support.iter().map(|&(_, v)| (v - max).exp()).sum();
    let log_z = z.ln() + max;
    let t = 1.0 / hits.len() as f64;
    let loss = hits.iter().map(|&i| -t * (g.get(i) - log_z)).sum();
    let grad = SparseVector::from_pairs(
        dim,
        support.iter().map(|&(i, v)| {
            let p = (v - log_z).exp();
            let target = if hits.contains(&i) { t } else { 0.0 };
            (i, p - target)
        }),
    );
    (loss, grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the dataset, before the epoch's update.
    pub loss: f64,
    /// Training accuracy before the epoch's update.
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

fn positive_ids(kb: &KnowledgeBase, ex: &Example) -> Result<Vec<ConstId>> {
    ex.positives.iter().map(|p| kb.id(p)).collect()
}

fn is_correct(g: &SparseVector, positives: &[ConstId]) -> bool {
    g.argmax().is_some_and(|a| positives.contains(&a))
}

fn example_error(index: usize, ex: &Example, e: Error) -> Error {
    Error::Example {
        index,
        query: ex.query.to_string(),
        source: Box::new(e),
    }
}

/// Trains in place. Each epoch evaluates every example (in parallel), sums
/// the per-example gradients in dataset order, averages, then applies
/// `θ ← max(θ - lr·grad, 0)` to the trainable facts.
pub fn train(
    registry: &FunctionRegistry,
    kb: &mut KnowledgeBase,
    dataset: &[Example],
    config: &TrainConfig,
) -> Result<TrainLog> {
    config.check()?;
    if dataset.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    let mask = config.trainable.mask(kb);
    let mut log = TrainLog::default();
    for epoch in 1..=config.epochs {
        let snapshot: &KnowledgeBase = kb;
        let per_example: Vec<Result<(f64, bool, ParamGradients)>> = dataset
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let run = || -> Result<(f64, bool, ParamGradients)> {
                    let pos = positive_ids(snapshot, ex)?;
                    let input = snapshot.one_hot(&ex.query.constant)?;
                    let (g, tape) =
                        eval_function(registry, snapshot, &ex.query.key(), &input, true)?;
                    let (loss, dg) = loss_and_grad(&g, &pos);
                    let grads = backprop(&tape, &dg, snapshot)?;
                    Ok((loss, is_correct(&g, &pos), grads))
                };
                run().map_err(|e| example_error(i, ex, e))
            })
            .collect();
        let mut total = ParamGradients::zeros(kb.num_facts());
        let mut loss = 0.0;
        let mut correct = 0usize;
        for r in per_example {
            let (l, ok, g) = r?;
            loss += l;
            correct += ok as usize;
            total.add_assign(&g);
        }
        let n = dataset.len() as f64;
        total.scale(1.0 / n);
        total.restrict(&mask);
        for (f, g) in total.nonzeros() {
            let w = kb.get_weight(f) - config.learning_rate * g;
            kb.set_weight(f, w);
        }
        log.epochs.push(EpochStats {
            epoch,
            loss: loss / n,
            accuracy: correct as f64 / n,
        });
    }
    Ok(log)
}

/// Fraction of examples whose highest-scoring answer (ties to the lowest id)
/// is a positive.
pub fn evaluate_accuracy(
    registry: &FunctionRegistry,
    kb: &KnowledgeBase,
    dataset: &[Example],
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Invalid("dataset is empty".into()));
    }
    let results: Vec<Result<bool>> = dataset
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let run = || -> Result<bool> {
                let pos = positive_ids(kb, ex)?;
                let g = evaluate(registry, kb, &ex.query.key(), &kb.one_hot(&ex.query.constant)?)?;
                Ok(is_correct(&g, &pos))
            };
            run().map_err(|e| example_error(i, ex, e))
        })
        .collect();
    let mut correct = 0usize;
    for r in results {
        correct += r? as usize;
    }
    Ok(correct as f64 / dataset.len() as f64)
}
