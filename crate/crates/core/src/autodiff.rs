//! Reverse-mode gradients of a recorded evaluation with respect to fact
//! weights.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compiler::{FunctionKey, FunctionRegistry};
use crate::error::{Error, Result};
use crate::kb::{FactId, KnowledgeBase, ANY};
use crate::runtime::{eval_function, evaluate, Tape, TapeOp};
use crate::sparse::SparseVector;

/// Gradient of a scalar objective with respect to every fact weight.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradients {
    values: Vec<f64>,
}

impl ParamGradients {
    pub fn zeros(num_facts: usize) -> Self {
        Self {
            values: vec![0.0; num_facts],
        }
    }

    pub fn get(&self, fact: FactId) -> f64 {
        self.values[fact.0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn add_assign(&mut self, other: &ParamGradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// Zeroes every entry outside `keep`.
    pub fn restrict(&mut self, keep: &[bool]) {
        for (v, k) in self.values.iter_mut().zip(keep) {
            if !k {
                *v = 0.0;
            }
        }
    }

    /// Nonzero entries.
    pub fn nonzeros(&self) -> impl Iterator<Item = (FactId, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (FactId(i), *v))
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], slot: usize, dim: usize) -> &mut Vec<f64> {
    adj[slot].get_or_insert_with(|| vec![0.0; dim])
}

/// Propagates `out_grad` (the gradient of the objective with respect to the
/// tape's output) back to the fact weights.
pub fn backprop(tape: &Tape, out_grad: &SparseVector, kb: &KnowledgeBase) -> Result<ParamGradients> {
    if !tape.is_retained() {
        return Err(Error::TapeNotRetained);
    }
    let dim = kb.num_constants();
    if out_grad.dim() != dim {
        return Err(Error::Invalid(format!(
            "output gradient has dimension {}, expected {dim}",
            out_grad.dim()
        )));
    }
    let params = kb.weights();
    let mut grads = ParamGradients::zeros(kb.num_facts());
    let mut adj: Vec<Option<Vec<f64>>> = vec![None; tape.values.len()];
    adj[tape.output] = Some(out_grad.to_dense());
    let val = |r: usize| &tape.values[r];

    for op in tape.ops.iter().rev() {
        let dst = match op {
            TapeOp::Copy { dst, .. }
            | TapeOp::Zero { dst }
            | TapeOp::LoadUnary { dst, .. }
            | TapeOp::LoadOnes { dst }
            | TapeOp::VecMatMul { dst, .. }
            | TapeOp::Hadamard { dst, .. }
            | TapeOp::Add { dst, .. }
            | TapeOp::ScaleByNorm { dst, .. } => *dst,
        };
        let Some(g) = adj[dst].take() else { continue };
        match op {
            TapeOp::Zero { .. } | TapeOp::LoadOnes { .. } => {}
            TapeOp::Copy { src, .. } => {
                let a = accumulate(&mut adj, *src, dim);
                a.iter_mut().zip(&g).for_each(|(a, g)| *a += g);
            }
            TapeOp::Add { a, b, .. } => {
                for s in [*a, *b] {
                    let acc = accumulate(&mut adj, s, dim);
                    acc.iter_mut().zip(&g).for_each(|(a, g)| *a += g);
                }
            }
            TapeOp::LoadUnary { pred, .. } => {
                // assign_c vectors are constants, not parameters
                if let Ok(entries) = kb.unary_entries(pred) {
                    for &(c, f) in entries {
                        grads.values[f.0] += g[c as usize];
                    }
                }
            }
            TapeOp::VecMatMul {
                src,
                pred,
                transposed,
                ..
            } => {
                let x = val(*src);
                let dx = accumulate(&mut adj, *src, dim);
                if pred == ANY && kb.arity(ANY).is_none() {
                    let total: f64 = g.iter().sum();
                    dx.iter_mut().for_each(|d| *d += total);
                    continue;
                }
                // iterate the stored orientation: entry (a, b) with weight θ
                let m = kb.matrix(pred, false)?;
                for (a, b, f) in m.entries() {
                    let (i, o) = if *transposed { (b, a) } else { (a, b) };
                    let go = g[o as usize];
                    if go == 0.0 {
                        continue;
                    }
                    dx[i as usize] += params[f.0] * go;
                    grads.values[f.0] += x.get(i) * go;
                }
            }
            TapeOp::Hadamard { srcs, .. } => {
                for (k, &s) in srcs.iter().enumerate() {
                    // product of the other operands, restricted to g's support
                    let mut partial: Vec<f64> = g.clone();
                    for (j, &o) in srcs.iter().enumerate() {
                        if j == k {
                            continue;
                        }
                        let other = val(o).to_dense();
                        partial.iter_mut().zip(&other).for_each(|(p, v)| *p *= v);
                    }
                    let acc = accumulate(&mut adj, s, dim);
                    acc.iter_mut().zip(&partial).for_each(|(a, p)| *a += p);
                }
            }
            TapeOp::ScaleByNorm { src, norm_of, .. } => {
                let s = val(*norm_of).sum();
                let x = val(*src);
                let inner: f64 = x.iter().map(|(i, xi)| xi * g[i as usize]).sum();
                let dx = accumulate(&mut adj, *src, dim);
                dx.iter_mut().zip(&g).for_each(|(d, g)| *d += g * s);
                let dz = accumulate(&mut adj, *norm_of, dim);
                dz.iter_mut().for_each(|d| *d += inner);
            }
        }
    }
    Ok(grads)
}

/// Compares [`backprop`] against central finite differences (step `1e-6`)
/// for a random positive linear functional of the output, on
/// `direction_count` randomly chosen facts. Returns the largest
/// `|analytic - numeric| / max(|numeric|, 1e-8)`.
pub fn grad_check(
    registry: &FunctionRegistry,
    kb: &KnowledgeBase,
    key: &FunctionKey,
    input: &SparseVector,
    direction_count: usize,
    seed: u64,
) -> Result<f64> {
    const STEP: f64 = 1e-6;
    let dim = kb.num_constants();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.1..1.0)).collect();
    let functional = SparseVector::from_dense(&weights);
    let (_, tape) = eval_function(registry, kb, key, input, true)?;
    let analytic = backprop(&tape, &functional, kb)?;
    let n = kb.num_facts();
    let picks: Vec<usize> = if direction_count >= n {
        (0..n).collect()
    } else {
        sample(&mut rng, n, direction_count).into_vec()
    };
    let objective = |kb: &KnowledgeBase| -> Result<f64> {
        let out = evaluate(registry, kb, key, input)?;
        Ok(out.iter().map(|(i, v)| v * weights[i as usize]).sum())
    };
    let mut probe = kb.clone();
    let mut worst: f64 = 0.0;
    for p in picks {
        let f = FactId(p);
        let theta = kb.get_weight(f);
        probe.set_weight(f, theta + STEP);
        let up = objective(&probe)?;
        probe.set_weight(f, theta - STEP);
        let down = objective(&probe)?;
        probe.set_weight(f, theta);
        let numeric = (up - down) / (2.0 * STEP);
        let err = (analytic.get(f) - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
