//! A differentiable deductive database.
//!
//! Facts are weighted entries of sparse matrices (binary predicates) and
//! vectors (unary predicates). Each tree-shaped Horn clause is compiled, by
//! unrolling belief propagation over its factor graph, into a straight-line
//! function of sparse vector ops. Evaluating `pred(c,Y)` returns a score per
//! constant, and the scores are differentiable in the fact weights.
//!
//! ```
//! use dtlog::Program;
//!
//! let program = Program::from_text(
//!     "uncle(X,Y):-child(X,W),brother(W,Y).",
//!     "child\tjoe\tliam\t0.9\nbrother\tliam\tbob\t0.9\n",
//! )
//! .unwrap();
//! let answer = program.query("uncle(joe,Y)", 10).unwrap();
//! let bob = program.kb.id("bob").unwrap();
//! assert!((answer.unnormalized.get(bob) - 0.81).abs() < 1e-12);
//! ```

pub mod autodiff;
pub mod cli;
pub mod compiler;
pub mod error;
pub mod factorgraph;
pub mod grid;
pub mod kb;
pub mod learner;
pub mod oracle;
pub mod parser;
pub mod runtime;
pub mod sparse;

pub use compiler::{compile_program, CompiledFunction, FunctionKey, FunctionRegistry, Op};
pub use error::{Error, Result};
pub use factorgraph::Mode;
pub use kb::{load_facts, FactId, KnowledgeBase};
pub use parser::{parse_theory, Clause, Diagnostic, Theory};
pub use runtime::{eval_function, evaluate, respond, Query, QueryResponse, Tape};
pub use sparse::{ConstId, SparseVector};

/// A checked theory bound to its fact store.
#[derive(Clone, Debug)]
pub struct Program {
    /// Desugared clauses.
    pub theory: Theory,
    pub kb: KnowledgeBase,
    /// Non-fatal diagnostics (singleton variables).
    pub warnings: Vec<Diagnostic>,
}

impl Program {
    /// Desugars `theory`, binds its constants and rule tags into `kb`, and
    /// validates the result. Error diagnostics become one [`Error::Invalid`].
    pub fn new(theory: &Theory, kb: KnowledgeBase) -> Result<Program> {
        Program::load(theory, kb, "<rules>")
    }

    /// [`Program::new`], naming `source` in diagnostics.
    pub fn load(theory: &Theory, mut kb: KnowledgeBase, source: &str) -> Result<Program> {
        let desugared = theory.desugar()?;
        desugared.bind(&mut kb)?;
        let diagnostics = parser::validate(theory, &kb);
        let (errors, warnings): (Vec<_>, Vec<_>) =
            diagnostics.into_iter().partition(Diagnostic::is_error);
        if !errors.is_empty() {
            let text: Vec<String> = errors.iter().map(|d| d.render(source)).collect();
            return Err(Error::Invalid(text.join("\n")));
        }
        Ok(Program {
            theory: desugared,
            kb,
            warnings,
        })
    }

    /// Parses a rules file and a facts file.
    pub fn from_text(rules: &str, facts: &str) -> Result<Program> {
        Program::new(&parse_theory(rules)?, load_facts(facts)?)
    }

    pub fn compile(&self, targets: &[(String, Mode)], max_depth: usize) -> Result<FunctionRegistry> {
        compile_program(&self.theory, &self.kb, targets, max_depth)
    }

    /// Compiles the query's target and answers it.
    pub fn query(&self, query: &str, max_depth: usize) -> Result<QueryResponse> {
        let q: Query = query.parse()?;
        let registry = self.compile(&[(q.pred.clone(), q.mode)], max_depth)?;
        respond(&registry, &self.kb, &q)
    }
}
