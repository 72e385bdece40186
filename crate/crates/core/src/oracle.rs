//! Exact reference semantics for small programs, computed by depth-bounded
//! top-down proof search rather than by the compiled message passing.
//!
//! Depth is counted the way the compiled functions count it: the query goal
//! is solved at depth 0 and every body literal over a clause-defined
//! predicate one level deeper; goals past `max_depth` have no proofs.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::factorgraph::Mode;
use crate::kb::{FactId, KnowledgeBase, ASSIGN_PREFIX, WEIGHTED};
use crate::parser::{Clause, Term, Theory};
use crate::runtime::Query;
use crate::sparse::ConstId;

/// Default cap on search nodes.
pub const NODE_BUDGET: usize = 1_000_000;
/// Cap on the number of distinct facts across the explanations of one answer.
pub const MAX_EXPLANATION_FACTS: usize = 25;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    /// Binding of the query's free argument.
    pub answer: ConstId,
    /// One entry per fact-literal occurrence, in proof order.
    pub fact_uses: Vec<FactId>,
    /// Clause ids (positions in the theory) in the order they were applied.
    pub clause_uses: Vec<usize>,
}

impl Proof {
    /// The set of facts underlying the proof.
    pub fn explanation(&self) -> BTreeSet<FactId> {
        self.fact_uses.iter().copied().collect()
    }
}

type Cont<'k> = dyn FnMut(&mut Search<'_>, [ConstId; 2]) -> Result<()> + 'k;
type BodyCont<'k> = dyn FnMut(&mut Search<'_>, &[Option<ConstId>]) -> Result<()> + 'k;

struct Search<'a> {
    theory: &'a Theory,
    kb: &'a KnowledgeBase,
    max_depth: usize,
    budget: usize,
    nodes: usize,
    facts: Vec<FactId>,
    clauses: Vec<usize>,
    vars: Vec<Vec<String>>,
}

impl Search<'_> {
    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            Err(Error::Budget(self.budget))
        } else {
            Ok(())
        }
    }

    /// Solves a binary goal; `k` receives each solution's bindings.
    fn goal(&mut self, pred: &str, args: [Option<ConstId>; 2], depth: usize, k: &mut Cont<'_>) -> Result<()> {
        self.tick()?;
        if self.theory.defines(pred) {
            if depth > self.max_depth {
                return Ok(());
            }
            let theory = self.theory;
            for &cid in theory.clause_ids_for(pred) {
                let clause = &theory.clauses()[cid];
                let vars = &self.vars[cid];
                let idx = |t: &Term| vars.iter().position(|v| Some(v.as_str()) == t.as_var()).expect("clause variable");
                let heads = [idx(&clause.head.args[0]), idx(&clause.head.args[1])];
                let mut frame = vec![None; vars.len()];
                frame[heads[0]] = args[0];
                frame[heads[1]] = args[1];
                self.clauses.push(cid);
                let r = self.body(clause, cid, 0, frame, depth, &mut |s, f| {
                    k(s, [f[heads[0]].expect("head bound"), f[heads[1]].expect("head bound")])
                });
                self.clauses.pop();
                r?;
            }
            return Ok(());
        }
        let m = self.kb.matrix(pred, false)?;
        let candidates: Vec<(ConstId, ConstId, FactId)> = match args[0] {
            Some(a) => m.row(a).iter().map(|&(b, f)| (a, b, f)).collect(),
            None => m.entries().collect(),
        };
        for (a, b, f) in candidates {
            if args[1].is_some_and(|x| x != b) {
                continue;
            }
            self.facts.push(f);
            let r = k(self, [a, b]);
            self.facts.pop();
            r?;
        }
        Ok(())
    }

    fn body(
        &mut self,
        clause: &Clause,
        cid: usize,
        pos: usize,
        frame: Vec<Option<ConstId>>,
        depth: usize,
        k: &mut BodyCont<'_>,
    ) -> Result<()> {
        self.tick()?;
        let Some(lit) = clause.body.get(pos) else {
            return k(self, &frame);
        };
        let vars = &self.vars[cid];
        let idx = |t: &Term| {
            vars.iter()
                .position(|v| Some(v.as_str()) == t.as_var())
                .expect("desugared literals only hold variables")
        };
        if lit.args.len() == 1 {
            let v = idx(&lit.args[0]);
            let stored = self.kb.arity(&lit.pred).is_some();
            if !stored {
                if let Some(c) = lit.pred.strip_prefix(ASSIGN_PREFIX) {
                    let Ok(c) = self.kb.id(c) else { return Ok(()) };
                    if frame[v].is_some_and(|x| x != c) {
                        return Ok(());
                    }
                    let mut f = frame;
                    f[v] = Some(c);
                    return self.body(clause, cid, pos + 1, f, depth, k);
                }
            }
            let entries: Vec<(ConstId, FactId)> = self.kb.unary_entries(&lit.pred)?.to_vec();
            for (c, fact) in entries {
                if frame[v].is_some_and(|x| x != c) {
                    continue;
                }
                let mut f = frame.clone();
                f[v] = Some(c);
                self.facts.push(fact);
                let r = self.body(clause, cid, pos + 1, f, depth, k);
                self.facts.pop();
                r?;
            }
            return Ok(());
        }
        let (a, b) = (idx(&lit.args[0]), idx(&lit.args[1]));
        let next_depth = if self.theory.defines(&lit.pred) { depth + 1 } else { depth };
        let pred = lit.pred.clone();
        self.goal(&pred, [frame[a], frame[b]], next_depth, &mut |s, [x, y]| {
            let mut f = frame.clone();
            if f[a].is_some_and(|v| v != x) || f[b].is_some_and(|v| v != y) {
                return Ok(());
            }
            f[a] = Some(x);
            if f[b].is_some_and(|v| v != y) {
                return Ok(());
            }
            f[b] = Some(y);
            s.body(clause, cid, pos + 1, f, depth, k)
        })
    }
}

/// All proofs of `query` with recursion depth at most `max_depth`, in
/// search order. The theory must be desugared.
pub fn enumerate_proofs(
    theory: &Theory,
    kb: &KnowledgeBase,
    query: &Query,
    max_depth: usize,
) -> Result<Vec<Proof>> {
    enumerate_proofs_with_budget(theory, kb, query, max_depth, NODE_BUDGET)
}

pub fn enumerate_proofs_with_budget(
    theory: &Theory,
    kb: &KnowledgeBase,
    query: &Query,
    max_depth: usize,
    budget: usize,
) -> Result<Vec<Proof>> {
    let c = kb.id(&query.constant)?;
    let args = match query.mode {
        Mode::Io => [Some(c), None],
        Mode::Oi => [None, Some(c)],
    };
    let mut search = Search {
        theory,
        kb,
        max_depth,
        budget,
        nodes: 0,
        facts: Vec::new(),
        clauses: Vec::new(),
        vars: theory.clauses().iter().map(Clause::variables).collect(),
    };
    let mut proofs = Vec::new();
    let answer_slot = match query.mode {
        Mode::Io => 1,
        Mode::Oi => 0,
    };
    search.goal(&query.pred, args, 0, &mut |s, bound| {
        proofs.push(Proof {
            answer: bound[answer_slot],
            fact_uses: s.facts.clone(),
            clause_uses: s.clauses.clone(),
        });
        Ok(())
    })?;
    Ok(proofs)
}

/// Per answer, the sum over proofs of the product of used fact weights (a
/// fact used twice in one proof contributes its weight twice).
pub fn score_proof_sum(proofs: &[Proof], kb: &KnowledgeBase) -> BTreeMap<ConstId, f64> {
    let mut out = BTreeMap::new();
    for p in proofs {
        let w: f64 = p.fact_uses.iter().map(|&f| kb.get_weight(f)).product();
        *out.entry(p.answer).or_insert(0.0) += w;
    }
    out
}

/// Distinct explanation sets per answer.
pub fn explanations(proofs: &[Proof]) -> BTreeMap<ConstId, Vec<BTreeSet<FactId>>> {
    let mut out: BTreeMap<ConstId, Vec<BTreeSet<FactId>>> = BTreeMap::new();
    for p in proofs {
        let e = p.explanation();
        let list = out.entry(p.answer).or_default();
        if !list.contains(&e) {
            list.push(e);
        }
    }
    out
}

/// Probability that an interpretation drawn by independent per-fact coin
/// flips (heads with probability `θ_f`) contains some explanation of the
/// answer. Exact, by enumerating subsets of the union of explanation facts.
pub fn tuple_independence(explanations: &[BTreeSet<FactId>], kb: &KnowledgeBase) -> Result<f64> {
    let universe: Vec<FactId> = explanations
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if universe.len() > MAX_EXPLANATION_FACTS {
        return Err(Error::Invalid(format!(
            "{} facts in the explanations exceed the enumeration limit of {MAX_EXPLANATION_FACTS}",
            universe.len()
        )));
    }
    let probs: Vec<f64> = universe.iter().map(|&f| kb.get_weight(f)).collect();
    if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Invalid(format!(
            "tuple independence needs weights in [0,1]; {} has {p}",
            kb.fact_name(universe[i])
        )));
    }
    let masks: Vec<u32> = explanations
        .iter()
        .map(|e| {
            e.iter()
                .map(|f| 1u32 << universe.binary_search(f).expect("in universe"))
                .fold(0, |a, b| a | b)
        })
        .collect();
    let n = universe.len();
    let mut total = 0.0;
    for subset in 0u32..(1u32 << n) {
        if !masks.iter().any(|&m| m & subset == m) {
            continue;
        }
        let mut p = 1.0;
        for (i, &q) in probs.iter().enumerate() {
            p *= if subset >> i & 1 == 1 { q } else { 1.0 - q };
        }
        total += p;
    }
    Ok(total)
}

/// Tuple-independence probability of every answer of a query.
pub fn score_tuple_independence(
    theory: &Theory,
    kb: &KnowledgeBase,
    query: &Query,
    max_depth: usize,
) -> Result<BTreeMap<ConstId, f64>> {
    let proofs = enumerate_proofs(theory, kb, query, max_depth)?;
    explanations(&proofs)
        .into_iter()
        .map(|(a, ex)| Ok((a, tuple_independence(&ex, kb)?)))
        .collect()
}

/// Clause weights implied by rule tags: `weighted(t)` for a clause tagged
/// `t`, 1 for untagged clauses.
pub fn clause_weights_from_tags(theory: &Theory, kb: &KnowledgeBase) -> Vec<f64> {
    theory
        .clauses()
        .iter()
        .map(|c| {
            c.rule_weight
                .as_ref()
                .or(c.tag.as_ref())
                .and_then(|t| kb.fact_id(WEIGHTED, &[t]).ok())
                .map_or(1.0, |f| kb.get_weight(f))
        })
        .collect()
}

/// Stochastic-logic-program distribution over answers: each proof scores
/// `Π_r θ_r^{N(r)}` over the clauses it applies (fact weights are ignored),
/// normalized over all answers of the query.
pub fn score_slp(
    theory: &Theory,
    kb: &KnowledgeBase,
    clause_weights: &[f64],
    query: &Query,
    max_depth: usize,
) -> Result<BTreeMap<ConstId, f64>> {
    if clause_weights.len() != theory.clauses().len() {
        return Err(Error::Invalid(format!(
            "{} clause weights for {} clauses",
            clause_weights.len(),
            theory.clauses().len()
        )));
    }
    let proofs = enumerate_proofs(theory, kb, query, max_depth)?;
    let mut out: BTreeMap<ConstId, f64> = BTreeMap::new();
    for p in &proofs {
        let w: f64 = p.clause_uses.iter().map(|&c| clause_weights[c]).product();
        *out.entry(p.answer).or_insert(0.0) += w;
    }
    let z: f64 = out.values().sum();
    if z > 0.0 {
        out.values_mut().for_each(|v| *v /= z);
    }
    Ok(out)
}

/// Encodes clause weights as rule-weight facts: every clause gets a fresh
/// tag `slp_rule_<i>` with `weighted(slp_rule_<i>) = θ_r`, and every other
/// fact weight is set to 1. Takes a raw (not desugared) theory and returns
/// the desugared theory with its store.
pub fn slp_transform(
    theory: &Theory,
    kb: &KnowledgeBase,
    clause_weights: &[f64],
) -> Result<(Theory, KnowledgeBase)> {
    let mut clauses = theory.clauses().to_vec();
    for (i, c) in clauses.iter_mut().enumerate() {
        c.tag = Some(format!("slp_rule_{i}"));
    }
    let tagged = Theory::from_clauses(clauses).desugar()?;
    let mut kb = kb.clone();
    let ids: Vec<FactId> = kb.facts().map(|(f, _)| f).collect();
    for f in ids {
        kb.set_weight(f, 1.0);
    }
    tagged.bind(&mut kb)?;
    for (i, w) in clause_weights.iter().enumerate() {
        let f = kb.fact_id(WEIGHTED, &[&format!("slp_rule_{i}")])?;
        kb.set_weight(f, *w);
    }
    Ok((tagged, kb))
}
