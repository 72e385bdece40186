//! Unrolls message passing on each clause graph into a straight-line,
//! single-assignment register program.
//!
//! Messages are requested from the output variable toward a virtual output
//! literal. A variable's outgoing message is the entrywise product of the
//! messages arriving from its other factors (all ones when there are none; the
//! evidence vector, multiplied by the others, at the input variable). A
//! factor's outgoing message is `v_q` for a unary literal, `x M_p` when leaving
//! through the second argument and `x M_p^T` through the first. Literals over
//! predicates defined by clauses become calls to the next-deeper function.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::factorgraph::{
    build_factor_graph, check_polytree, connect_components, FactorGraph, FactorKind, Mode,
};
use crate::kb::{KnowledgeBase, ANY};
use crate::parser::Theory;

pub type Reg = usize;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FunctionKey {
    pub pred: String,
    pub mode: Mode,
    pub depth: usize,
}

impl FunctionKey {
    pub fn new(pred: impl Into<String>, mode: Mode, depth: usize) -> Self {
        Self {
            pred: pred.into(),
            mode,
            depth,
        }
    }
}

impl fmt::Display for FunctionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.pred, self.mode, self.depth)
    }
}

/// A `pred/mode` target as written on the command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    pub pred: String,
    pub mode: Mode,
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (pred, mode) = s
            .split_once('/')
            .ok_or_else(|| Error::Invalid(format!("target `{s}` should look like pred/io")))?;
        Ok(Target {
            pred: pred.to_string(),
            mode: mode.parse()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// `dst = v_pred`
    LoadUnary { dst: Reg, pred: String },
    /// `dst = 1`
    LoadOnes { dst: Reg },
    /// `dst = src M_pred` (or `M_pred^T`)
    VecMatMul {
        dst: Reg,
        src: Reg,
        pred: String,
        transposed: bool,
    },
    /// `dst = srcs[0] ∘ srcs[1] ∘ ...`; a single source is a copy.
    Hadamard { dst: Reg, srcs: Vec<Reg> },
    Add { dst: Reg, a: Reg, b: Reg },
    /// `dst = src * ||norm_of||_1`
    ScaleByNorm { dst: Reg, src: Reg, norm_of: Reg },
    Call { dst: Reg, src: Reg, key: FunctionKey },
}

impl Op {
    pub fn dst(&self) -> Reg {
        match self {
            Op::LoadUnary { dst, .. }
            | Op::LoadOnes { dst }
            | Op::VecMatMul { dst, .. }
            | Op::Hadamard { dst, .. }
            | Op::Add { dst, .. }
            | Op::ScaleByNorm { dst, .. }
            | Op::Call { dst, .. } => *dst,
        }
    }

    pub fn srcs(&self) -> Vec<Reg> {
        match self {
            Op::LoadUnary { .. } | Op::LoadOnes { .. } => vec![],
            Op::VecMatMul { src, .. } | Op::Call { src, .. } => vec![*src],
            Op::Hadamard { srcs, .. } => srcs.clone(),
            Op::Add { a, b, .. } => vec![*a, *b],
            Op::ScaleByNorm { src, norm_of, .. } => vec![*src, *norm_of],
        }
    }

    fn map_regs(&mut self, f: &impl Fn(Reg) -> Reg) {
        match self {
            Op::LoadUnary { dst, .. } | Op::LoadOnes { dst } => *dst = f(*dst),
            Op::VecMatMul { dst, src, .. } | Op::Call { dst, src, .. } => {
                *dst = f(*dst);
                *src = f(*src);
            }
            Op::Hadamard { dst, srcs } => {
                *dst = f(*dst);
                srcs.iter_mut().for_each(|s| *s = f(*s));
            }
            Op::Add { dst, a, b } => {
                *dst = f(*dst);
                *a = f(*a);
                *b = f(*b);
            }
            Op::ScaleByNorm { dst, src, norm_of } => {
                *dst = f(*dst);
                *src = f(*src);
                *norm_of = f(*norm_of);
            }
        }
    }

    /// Short name of the op kind, used by structural comparisons.
    pub fn kind(&self) -> &'static str {
        match self {
            Op::LoadUnary { .. } => "load",
            Op::LoadOnes { .. } => "ones",
            Op::VecMatMul { .. } => "matmul",
            Op::Hadamard { .. } => "hadamard",
            Op::Add { .. } => "add",
            Op::ScaleByNorm { .. } => "scale_by_norm",
            Op::Call { .. } => "call",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::LoadUnary { dst, pred } => write!(f, "v{dst} = V[{pred}]"),
            Op::LoadOnes { dst } => write!(f, "v{dst} = ones"),
            Op::VecMatMul {
                dst,
                src,
                pred,
                transposed,
            } => write!(
                f,
                "v{dst} = v{src} @ M[{pred}]{}",
                if *transposed { "^T" } else { "" }
            ),
            Op::Hadamard { dst, srcs } => {
                let s: Vec<String> = srcs.iter().map(|r| format!("v{r}")).collect();
                write!(f, "v{dst} = {}", s.join(" * "))
            }
            Op::Add { dst, a, b } => write!(f, "v{dst} = v{a} + v{b}"),
            Op::ScaleByNorm { dst, src, norm_of } => write!(f, "v{dst} = v{src} * |v{norm_of}|"),
            Op::Call { dst, src, key } => write!(f, "v{dst} = call {key} (v{src})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompiledFunction {
    pub key: FunctionKey,
    pub input: Reg,
    pub output: Reg,
    pub num_regs: usize,
    pub ops: Vec<Op>,
}

impl CompiledFunction {
    /// Every register is written once, before any read; the output is written.
    pub fn verify(&self) -> Result<()> {
        let mut written = vec![false; self.num_regs];
        let bad = |m: String| Error::Invalid(format!("{}: {m}", self.key));
        if self.input >= self.num_regs {
            return Err(bad("input register out of range".into()));
        }
        written[self.input] = true;
        for op in &self.ops {
            for s in op.srcs() {
                if s >= self.num_regs || !written[s] {
                    return Err(bad(format!("`{op}` reads v{s} before it is written")));
                }
            }
            let d = op.dst();
            if d >= self.num_regs {
                return Err(bad(format!("`{op}` writes out of range")));
            }
            if std::mem::replace(&mut written[d], true) {
                return Err(bad(format!("`{op}` writes v{d} a second time")));
            }
        }
        if !written[self.output] {
            return Err(bad("output register is never written".into()));
        }
        Ok(())
    }

    pub fn calls(&self) -> impl Iterator<Item = &FunctionKey> {
        self.ops.iter().filter_map(|op| match op {
            Op::Call { key, .. } => Some(key),
            _ => None,
        })
    }

    /// Renames registers densely in definition order, input first.
    fn renumber(&mut self) {
        let mut map: HashMap<Reg, Reg> = HashMap::new();
        map.insert(self.input, 0);
        for op in &self.ops {
            let n = map.len();
            map.entry(op.dst()).or_insert(n);
        }
        let f = |r: Reg| map[&r];
        for op in &mut self.ops {
            op.map_regs(&f);
        }
        self.input = 0;
        self.output = map[&self.output];
        self.num_regs = map.len();
    }
}

impl fmt::Display for CompiledFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}(v{}):", self.key, self.input)?;
        for op in &self.ops {
            writeln!(f, "  {op}")?;
        }
        writeln!(f, "  return v{}", self.output)
    }
}

struct Emitter<'a> {
    g: &'a FactorGraph,
    is_theory_pred: &'a dyn Fn(&str) -> bool,
    depth: usize,
    ops: &'a mut Vec<Op>,
    next: &'a mut Reg,
    input_reg: Reg,
}

impl Emitter<'_> {
    fn fresh(&mut self) -> Reg {
        let r = *self.next;
        *self.next += 1;
        r
    }

    /// Message from a variable to a factor (or to the virtual output literal
    /// when `toward` is `None`).
    fn var_to_factor(&mut self, var: usize, toward: Option<usize>) -> Reg {
        let g = self.g;
        let mut others: Vec<usize> = g.neighbors(var).filter(|&f| Some(f) != toward).collect();
        if var == g.input && others.is_empty() {
            return self.input_reg;
        }
        // binary and connector subtrees are emitted before unary loads
        others.sort_by_key(|&f| (g.factors[f].kind == FactorKind::Unary, f));
        let mut msgs: Vec<(usize, Reg)> = others
            .into_iter()
            .map(|f| (f, self.factor_to_var(f, var)))
            .collect();
        msgs.sort_by_key(|&(f, _)| f);
        let mut srcs: Vec<Reg> = msgs.into_iter().map(|(_, r)| r).collect();
        if var == g.input {
            srcs.insert(0, self.input_reg);
        }
        let dst = self.fresh();
        if srcs.is_empty() {
            self.ops.push(Op::LoadOnes { dst });
        } else {
            self.ops.push(Op::Hadamard { dst, srcs });
        }
        dst
    }

    fn factor_to_var(&mut self, factor: usize, var: usize) -> Reg {
        let f = &self.g.factors[factor];
        if f.vars.len() == 1 {
            let dst = self.fresh();
            self.ops.push(Op::LoadUnary {
                dst,
                pred: f.pred.clone(),
            });
            return dst;
        }
        let (a, b) = (f.vars[0], f.vars[1]);
        // leaving through the second slot is forward (M_p), through the first backward (M_p^T)
        let (from, transposed) = if var == b { (a, false) } else { (b, true) };
        let src = self.var_to_factor(from, Some(factor));
        let dst = self.fresh();
        let pred = f.pred.clone();
        if f.kind == FactorKind::Binary && (self.is_theory_pred)(&pred) {
            let mode = if transposed { Mode::Oi } else { Mode::Io };
            self.ops.push(Op::Call {
                dst,
                src,
                key: FunctionKey::new(pred, mode, self.depth + 1),
            });
        } else {
            self.ops.push(Op::VecMatMul {
                dst,
                src,
                pred,
                transposed,
            });
        }
        dst
    }
}

/// Compiles one clause graph (already connected and checked) at a depth.
/// Literals whose predicate satisfies `is_theory_pred` become calls.
pub fn compile_clause(
    g: &FactorGraph,
    depth: usize,
    is_theory_pred: &dyn Fn(&str) -> bool,
) -> Result<CompiledFunction> {
    if g.input >= g.vars.len() || g.output >= g.vars.len() {
        return Err(Error::Invalid("evidence variable is not in the graph".into()));
    }
    let mode = mode_of(g);
    let mut ops = Vec::new();
    let mut next = 1;
    let output = emit_clause(g, depth, is_theory_pred, &mut ops, &mut next, 0);
    let f = CompiledFunction {
        key: FunctionKey::new(g.head.clone(), mode, depth),
        input: 0,
        output,
        num_regs: next,
        ops,
    };
    f.verify()?;
    Ok(f)
}

fn mode_of(g: &FactorGraph) -> Mode {
    // the head's first variable is the first entry of the variable list
    if g.input == 0 {
        Mode::Io
    } else {
        Mode::Oi
    }
}

fn emit_clause(
    g: &FactorGraph,
    depth: usize,
    is_theory_pred: &dyn Fn(&str) -> bool,
    ops: &mut Vec<Op>,
    next: &mut Reg,
    input_reg: Reg,
) -> Reg {
    let mut e = Emitter {
        g,
        is_theory_pred,
        depth,
        ops,
        next,
        input_reg,
    };
    e.var_to_factor(g.output, None)
}

/// Graph for one desugared clause in a mode, connected and checked.
pub fn clause_graph(clause: &crate::parser::Clause, mode: Mode) -> Result<FactorGraph> {
    let g = connect_components(build_factor_graph(clause, mode)?);
    check_polytree(&g)?;
    Ok(g)
}

/// `g^p = Σ_i g^{r_i}` over the clauses for `pred` (theory must be
/// desugared). A predicate with no clauses but a stored matrix compiles to a
/// single multiply.
pub fn compile_predicate(
    theory: &Theory,
    kb: &KnowledgeBase,
    pred: &str,
    mode: Mode,
    depth: usize,
) -> Result<CompiledFunction> {
    let key = FunctionKey::new(pred, mode, depth);
    let is_theory_pred = |p: &str| theory.defines(p);
    let mut ops = Vec::new();
    let mut next = 1;
    let output = if theory.defines(pred) {
        let mut acc: Option<Reg> = None;
        for clause in theory.clauses_for(pred) {
            let g = clause_graph(clause, mode)?;
            let out = emit_clause(&g, depth, &is_theory_pred, &mut ops, &mut next, 0);
            acc = Some(match acc {
                None => out,
                Some(prev) => {
                    let dst = next;
                    next += 1;
                    ops.push(Op::Add { dst, a: prev, b: out });
                    dst
                }
            });
        }
        acc.expect("defined predicates have at least one clause")
    } else if kb.arity(pred) == Some(2) {
        ops.push(Op::VecMatMul {
            dst: 1,
            src: 0,
            pred: pred.to_string(),
            transposed: mode == Mode::Oi,
        });
        next = 2;
        1
    } else {
        return Err(Error::UnknownPredicate(pred.to_string()));
    };
    let f = CompiledFunction {
        key,
        input: 0,
        output,
        num_regs: next,
        ops,
    };
    f.verify()?;
    Ok(f)
}

/// Replaces products with `M_any` by norm scalings:
/// `x ∘ (y M_any) = x · ||y||_1`, and a lone `y M_any` becomes `1 · ||y||_1`.
pub fn eliminate_any(f: &CompiledFunction) -> CompiledFunction {
    let any_src: HashMap<Reg, Reg> = f
        .ops
        .iter()
        .filter_map(|op| match op {
            Op::VecMatMul { dst, src, pred, .. } if pred == ANY => Some((*dst, *src)),
            _ => None,
        })
        .collect();
    if any_src.is_empty() {
        return f.clone();
    }
    let mut next = f.num_regs;
    let mut fresh = || {
        next += 1;
        next - 1
    };
    let mut ops = Vec::with_capacity(f.ops.len());
    let mut still_needed: HashSet<Reg> = HashSet::new();
    // first pass: rewrite hadamards that consume any-products
    let mut rewritten = Vec::with_capacity(f.ops.len());
    for op in &f.ops {
        match op {
            Op::Hadamard { dst, srcs } if srcs.iter().any(|s| any_src.contains_key(s)) => {
                let (anys, rest): (Vec<Reg>, Vec<Reg>) =
                    srcs.iter().partition(|s| any_src.contains_key(s));
                let mut cur = match rest.len() {
                    0 => {
                        let r = fresh();
                        rewritten.push(Op::LoadOnes { dst: r });
                        r
                    }
                    1 => rest[0],
                    _ => {
                        let r = fresh();
                        rewritten.push(Op::Hadamard { dst: r, srcs: rest });
                        r
                    }
                };
                for (i, a) in anys.iter().enumerate() {
                    let d = if i + 1 == anys.len() { *dst } else { fresh() };
                    rewritten.push(Op::ScaleByNorm {
                        dst: d,
                        src: cur,
                        norm_of: any_src[a],
                    });
                    cur = d;
                }
            }
            other => {
                for s in other.srcs() {
                    if any_src.contains_key(&s) {
                        still_needed.insert(s);
                    }
                }
                rewritten.push(other.clone());
            }
        }
    }
    if f.output != f.input && any_src.contains_key(&f.output) {
        still_needed.insert(f.output);
    }
    // second pass: drop any-products nobody reads, turn the rest into scalings
    for op in rewritten {
        match op {
            Op::VecMatMul { dst, src, ref pred, .. } if pred == ANY => {
                if still_needed.contains(&dst) {
                    let ones = fresh();
                    ops.push(Op::LoadOnes { dst: ones });
                    ops.push(Op::ScaleByNorm {
                        dst,
                        src: ones,
                        norm_of: src,
                    });
                }
            }
            other => ops.push(other),
        }
    }
    let mut out = CompiledFunction {
        key: f.key.clone(),
        input: f.input,
        output: f.output,
        num_regs: next,
        ops,
    };
    out.renumber();
    out
}

/// All compiled functions of a program, keyed by predicate, mode and depth.
#[derive(Clone, Debug, Default)]
pub struct FunctionRegistry {
    functions: IndexMap<FunctionKey, CompiledFunction>,
    max_depth: usize,
}

impl FunctionRegistry {
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn get(&self, key: &FunctionKey) -> Option<&CompiledFunction> {
        self.functions.get(key)
    }

    pub fn contains(&self, key: &FunctionKey) -> bool {
        self.functions.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &FunctionKey> {
        self.functions.keys()
    }

    pub fn functions(&self) -> impl Iterator<Item = &CompiledFunction> {
        self.functions.values()
    }

    /// Calls deeper than `max_depth` evaluate to the zero function.
    pub fn is_beyond_depth(&self, key: &FunctionKey) -> bool {
        key.depth > self.max_depth
    }

    /// Every call either targets a compiled function or lies past the depth
    /// bound.
    pub fn check_closure(&self) -> Result<()> {
        for f in self.functions.values() {
            for k in f.calls() {
                if !self.is_beyond_depth(k) && !self.contains(k) {
                    return Err(Error::NotCompiled(k.clone()));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for FunctionRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, func) in self.functions.values().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{func}")?;
        }
        Ok(())
    }
}

/// Compiles every `(pred, mode, depth <= max_depth)` reachable from the
/// targets. The theory must be desugared.
pub fn compile_program(
    theory: &Theory,
    kb: &KnowledgeBase,
    targets: &[(String, Mode)],
    max_depth: usize,
) -> Result<FunctionRegistry> {
    compile_program_with(theory, kb, targets, max_depth, true)
}

/// [`compile_program`], optionally keeping `M_any` products as they are.
pub fn compile_program_with(
    theory: &Theory,
    kb: &KnowledgeBase,
    targets: &[(String, Mode)],
    max_depth: usize,
    eliminate: bool,
) -> Result<FunctionRegistry> {
    let mut registry = FunctionRegistry {
        functions: IndexMap::new(),
        max_depth,
    };
    let mut queue: VecDeque<FunctionKey> = targets
        .iter()
        .map(|(p, m)| FunctionKey::new(p.clone(), *m, 0))
        .collect();
    while let Some(key) = queue.pop_front() {
        if registry.contains(&key) {
            continue;
        }
        let f = compile_predicate(theory, kb, &key.pred, key.mode, key.depth)?;
        let f = if eliminate { eliminate_any(&f) } else { f };
        f.verify()?;
        for k in f.calls() {
            if k.depth <= max_depth && !registry.contains(k) {
                queue.push_back(k.clone());
            }
        }
        registry.functions.insert(key, f);
    }
    registry.check_closure()?;
    Ok(registry)
}
