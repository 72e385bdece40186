//! Evaluation of compiled functions over sparse vectors.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::compiler::{FunctionKey, FunctionRegistry, Op};
use crate::error::{Error, Result};
use crate::factorgraph::Mode;
use crate::kb::{KnowledgeBase, ANY};
use crate::parser::{parse_literal, Term};
use crate::sparse::{ConstId, SparseVector};

/// One executed step, with registers numbered across call frames.
#[derive(Clone, Debug, PartialEq)]
pub enum TapeOp {
    /// Call input/output plumbing.
    Copy { dst: usize, src: usize },
    /// Result of a call past the depth bound.
    Zero { dst: usize },
    LoadUnary { dst: usize, pred: String },
    LoadOnes { dst: usize },
    VecMatMul {
        dst: usize,
        src: usize,
        pred: String,
        transposed: bool,
    },
    Hadamard { dst: usize, srcs: Vec<usize> },
    Add { dst: usize, a: usize, b: usize },
    ScaleByNorm { dst: usize, src: usize, norm_of: usize },
}

/// Forward trace of one evaluation. Call frames are inlined, so `ops` is a
/// flat topologically ordered list over `values`.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    pub ops: Vec<TapeOp>,
    pub values: Vec<SparseVector>,
    pub input: usize,
    pub output: usize,
    retained: bool,
}

impl Tape {
    pub fn is_retained(&self) -> bool {
        self.retained
    }

    pub fn output_value(&self) -> Option<&SparseVector> {
        self.values.get(self.output)
    }
}

struct Machine<'a> {
    registry: &'a FunctionRegistry,
    kb: &'a KnowledgeBase,
    record: bool,
    regs: Vec<Option<SparseVector>>,
    ops: Vec<TapeOp>,
}

impl Machine<'_> {
    fn value(&self, slot: usize) -> &SparseVector {
        self.regs[slot].as_ref().expect("registers are written before use")
    }

    fn set(&mut self, slot: usize, v: SparseVector, op: TapeOp) {
        self.regs[slot] = Some(v);
        if self.record {
            self.ops.push(op);
        }
    }

    /// Runs `key` with its input taken from `input`; returns the global slot
    /// of its output.
    fn run(&mut self, key: &FunctionKey, input: SparseVector, input_src: Option<usize>) -> Result<usize> {
        let f = self
            .registry
            .get(key)
            .ok_or_else(|| Error::NotCompiled(key.clone()))?;
        let dim = self.kb.num_constants();
        let base = self.regs.len();
        self.regs.resize(base + f.num_regs, None);
        let g = |r: usize| base + r;
        match input_src {
            Some(src) => self.set(g(f.input), input, TapeOp::Copy { dst: g(f.input), src }),
            None => self.regs[g(f.input)] = Some(input),
        }
        for op in &f.ops {
            match op {
                Op::LoadUnary { dst, pred } => {
                    let v = self.kb.vector(pred)?;
                    self.set(g(*dst), v, TapeOp::LoadUnary { dst: g(*dst), pred: pred.clone() });
                }
                Op::LoadOnes { dst } => {
                    self.set(g(*dst), SparseVector::ones(dim), TapeOp::LoadOnes { dst: g(*dst) });
                }
                Op::VecMatMul {
                    dst,
                    src,
                    pred,
                    transposed,
                } => {
                    let x = self.value(g(*src));
                    let v = if pred == ANY && self.kb.arity(ANY).is_none() {
                        SparseVector::ones(dim).scale(x.sum())
                    } else {
                        self.kb.matrix(pred, *transposed)?.vec_mul(x)
                    };
                    let t = TapeOp::VecMatMul {
                        dst: g(*dst),
                        src: g(*src),
                        pred: pred.clone(),
                        transposed: *transposed,
                    };
                    self.set(g(*dst), v, t);
                }
                Op::Hadamard { dst, srcs } => {
                    let mut v = self.value(g(srcs[0])).clone();
                    for s in &srcs[1..] {
                        v = v.hadamard(self.value(g(*s)));
                    }
                    let t = TapeOp::Hadamard {
                        dst: g(*dst),
                        srcs: srcs.iter().map(|s| g(*s)).collect(),
                    };
                    self.set(g(*dst), v, t);
                }
                Op::Add { dst, a, b } => {
                    let v = self.value(g(*a)).add(self.value(g(*b)));
                    self.set(g(*dst), v, TapeOp::Add { dst: g(*dst), a: g(*a), b: g(*b) });
                }
                Op::ScaleByNorm { dst, src, norm_of } => {
                    let v = self.value(g(*src)).scale(self.value(g(*norm_of)).sum());
                    let t = TapeOp::ScaleByNorm {
                        dst: g(*dst),
                        src: g(*src),
                        norm_of: g(*norm_of),
                    };
                    self.set(g(*dst), v, t);
                }
                Op::Call { dst, src, key } => {
                    if self.registry.is_beyond_depth(key) {
                        self.set(g(*dst), SparseVector::zeros(dim), TapeOp::Zero { dst: g(*dst) });
                        continue;
                    }
                    let arg = self.value(g(*src)).clone();
                    let callee_base = self.regs.len();
                    let out = self.run(key, arg, Some(g(*src)))?;
                    let v = if self.record {
                        self.value(out).clone()
                    } else {
                        let v = self.regs[out].take().expect("callee wrote its output");
                        self.regs.truncate(callee_base);
                        v
                    };
                    self.set(g(*dst), v, TapeOp::Copy { dst: g(*dst), src: out });
                }
            }
        }
        Ok(g(f.output))
    }
}

/// Rejects registries that mention predicates the store cannot evaluate.
pub fn preflight(registry: &FunctionRegistry, kb: &KnowledgeBase) -> Result<()> {
    for f in registry.functions() {
        for op in &f.ops {
            let (pred, arity) = match op {
                Op::LoadUnary { pred, .. } => (pred, 1),
                Op::VecMatMul { pred, .. } => (pred, 2),
                _ => continue,
            };
            if !kb.defines(pred, arity) {
                return Err(match kb.arity(pred) {
                    Some(found) => Error::Arity {
                        pred: pred.clone(),
                        expected: arity,
                        found,
                    },
                    None => Error::UnknownPredicate(pred.clone()),
                });
            }
        }
    }
    Ok(())
}

/// Evaluates `key` on `input`. With `retain` the returned tape records every
/// step for [`crate::autodiff::backprop`]; otherwise it is empty.
pub fn eval_function(
    registry: &FunctionRegistry,
    kb: &KnowledgeBase,
    key: &FunctionKey,
    input: &SparseVector,
    retain: bool,
) -> Result<(SparseVector, Tape)> {
    preflight(registry, kb)?;
    let dim = kb.num_constants();
    if input.dim() != dim {
        return Err(Error::Invalid(format!(
            "input has dimension {}, expected {dim}",
            input.dim()
        )));
    }
    if registry.is_beyond_depth(key) {
        let zero = SparseVector::zeros(dim);
        let tape = Tape {
            values: vec![zero.clone()],
            retained: retain,
            ..Tape::default()
        };
        return Ok((zero, tape));
    }
    let mut m = Machine {
        registry,
        kb,
        record: retain,
        regs: Vec::new(),
        ops: Vec::new(),
    };
    let out = m.run(key, input.clone(), None)?;
    let value = m.value(out).clone();
    let tape = if retain {
        Tape {
            ops: m.ops,
            values: m
                .regs
                .into_iter()
                .map(|r| r.unwrap_or_else(|| SparseVector::zeros(dim)))
                .collect(),
            input: 0,
            output: out,
            retained: true,
        }
    } else {
        Tape::default()
    };
    Ok((value, tape))
}

/// Evaluates without keeping a tape.
pub fn evaluate(
    registry: &FunctionRegistry,
    kb: &KnowledgeBase,
    key: &FunctionKey,
    input: &SparseVector,
) -> Result<SparseVector> {
    eval_function(registry, kb, key, input, false).map(|(v, _)| v)
}

/// An argument-retrieval query `pred(c,Y)` (mode io) or `pred(Y,c)` (oi).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub pred: String,
    pub mode: Mode,
    pub constant: String,
}

impl Query {
    pub fn new(pred: impl Into<String>, mode: Mode, constant: impl Into<String>) -> Self {
        Self {
            pred: pred.into(),
            mode,
            constant: constant.into(),
        }
    }

    pub fn key(&self) -> FunctionKey {
        FunctionKey::new(self.pred.clone(), self.mode, 0)
    }
}

impl FromStr for Query {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadQuery(s.to_string());
        let lit = parse_literal(s).map_err(|_| bad())?;
        match lit.args.as_slice() {
            [Term::Const(c), Term::Var(_)] => Ok(Query::new(lit.pred, Mode::Io, c.clone())),
            [Term::Var(_), Term::Const(c)] => Ok(Query::new(lit.pred, Mode::Oi, c.clone())),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            Mode::Io => write!(f, "{}({},Y)", self.pred, self.constant),
            Mode::Oi => write!(f, "{}(Y,{})", self.pred, self.constant),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResponse {
    pub query: Query,
    pub distribution: SparseVector,
    pub unnormalized: SparseVector,
    pub norm: f64,
}

impl QueryResponse {
    /// Answers sorted by descending score, ties by constant id.
    pub fn ranked(&self, normalized: bool) -> Vec<(ConstId, f64)> {
        let v = if normalized {
            &self.distribution
        } else {
            &self.unnormalized
        };
        let mut out: Vec<(ConstId, f64)> = v.iter().collect();
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        out
    }
}

/// Answers a query: the unnormalized score vector and its L1 normalization
/// (empty when no proofs exist).
pub fn respond(
    registry: &FunctionRegistry,
    kb: &KnowledgeBase,
    query: &Query,
) -> Result<QueryResponse> {
    let input = kb.one_hot(&query.constant)?;
    let key = query.key();
    if !registry.contains(&key) {
        return Err(Error::NotCompiled(key));
    }
    let unnormalized = evaluate(registry, kb, &key, &input)?;
    let norm = unnormalized.l1_norm();
    Ok(QueryResponse {
        query: query.clone(),
        distribution: unnormalized.normalized(),
        unnormalized,
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_queries() {
        assert_eq!(
            "uncle(joe,Y)".parse::<Query>().unwrap(),
            Query::new("uncle", Mode::Io, "joe")
        );
        assert_eq!(
            "uncle(Y, joe)".parse::<Query>().unwrap(),
            Query::new("uncle", Mode::Oi, "joe")
        );
        assert!("uncle(X,Y)".parse::<Query>().is_err());
        assert!("uncle(a,b)".parse::<Query>().is_err());
        assert!("uncle joe".parse::<Query>().is_err());
    }
}
