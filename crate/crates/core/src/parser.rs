//! Rule language: one Horn clause per line.
//!
//! ```text
//! uncle(X,Y):-child(X,W),brother(W,Y).
//! status(X,tired):-child(W,X),infant(W) {c3}.
//! ```
//!
//! Variables start with an uppercase letter or `_`. Lines starting with `#`
//! or `%` are comments.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::factorgraph::{self, Mode};
use crate::kb::{FactId, KnowledgeBase, ANY, ASSIGN_PREFIX, WEIGHTED};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn parse(name: &str) -> Term {
        if name.starts_with(|c: char| c.is_ascii_uppercase() || c == '_') {
            Term::Var(name.to_string())
        } else {
            Term::Const(name.to_string())
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Var(n) | Term::Const(n) => n,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(n) => Some(n),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct Literal {
    pub pred: String,
    pub args: Vec<Term>,
    /// 1-based source column, 0 when synthesized.
    pub col: usize,
}

impl PartialEq for Literal {
    fn eq(&self, other: &Self) -> bool {
        self.pred == other.pred && self.args == other.args
    }
}

impl Literal {
    pub fn new(pred: impl Into<String>, args: Vec<Term>) -> Self {
        Self {
            pred: pred.into(),
            args,
            col: 0,
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Term::as_var)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug)]
pub struct Clause {
    pub head: Literal,
    pub body: Vec<Literal>,
    /// `{tag}` annotation, present only before desugaring.
    pub tag: Option<String>,
    /// Rule-weight constant introduced by desugaring a `{tag}`.
    pub rule_weight: Option<String>,
    pub line: usize,
}

impl PartialEq for Clause {
    fn eq(&self, other: &Self) -> bool {
        self.head == other.head
            && self.body == other.body
            && self.tag == other.tag
            && self.rule_weight == other.rule_weight
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:-", self.head)?;
        for (i, l) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        if let Some(tag) = &self.tag {
            write!(f, " {{{tag}}}")?;
        }
        f.write_str(".")
    }
}

impl Clause {
    /// Distinct variables in order of first appearance (head, then body).
    pub fn variables(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for l in std::iter::once(&self.head).chain(&self.body) {
            for v in l.vars() {
                if !seen.iter().any(|s| s == v) {
                    seen.push(v.to_string());
                }
            }
        }
        seen
    }

    fn head_restriction_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut seen = HashSet::new();
        let body_vars: HashSet<&str> = self.body.iter().flat_map(Literal::vars).collect();
        for v in self.head.vars() {
            if !seen.insert(v) {
                errs.push(format!("repeated head variable {v} in {}", self.head));
            } else if !body_vars.contains(v) {
                errs.push(format!(
                    "head variable {v} of {} does not appear in the body",
                    self.head
                ));
            }
        }
        errs
    }

    /// Rewrites constants into `assign_c` literals and a `{tag}` into
    /// `assign_t(R),weighted(R)`. Fresh variables are `_A1`, `_A2`, ...
    pub fn desugar(&self) -> Result<Clause> {
        let mut taken: HashSet<String> = self.variables().into_iter().collect();
        let mut counter = 0;
        let mut fresh = || loop {
            counter += 1;
            let name = format!("_A{counter}");
            if taken.insert(name.clone()) {
                return name;
            }
        };
        let mut prefix = Vec::new();
        let mut head = self.head.clone();
        for arg in &mut head.args {
            if let Term::Const(c) = arg {
                let v = fresh();
                let mut l = Literal::new(format!("{ASSIGN_PREFIX}{c}"), vec![Term::Var(v.clone())]);
                l.col = self.head.col;
                prefix.push(l);
                *arg = Term::Var(v);
            }
        }
        let mut rule_weight = self.rule_weight.clone();
        if let Some(tag) = &self.tag {
            let v = fresh();
            prefix.push(Literal::new(
                format!("{ASSIGN_PREFIX}{tag}"),
                vec![Term::Var(v.clone())],
            ));
            prefix.push(Literal::new(WEIGHTED, vec![Term::Var(v)]));
            rule_weight = Some(tag.clone());
        }
        let mut body = prefix;
        for lit in &self.body {
            let is_assign = lit.pred.starts_with(ASSIGN_PREFIX) && lit.arity() == 1;
            let mut lit = lit.clone();
            if !is_assign {
                for arg in &mut lit.args {
                    if let Term::Const(c) = arg {
                        let v = fresh();
                        let mut a =
                            Literal::new(format!("{ASSIGN_PREFIX}{c}"), vec![Term::Var(v.clone())]);
                        a.col = lit.col;
                        body.push(a);
                        *arg = Term::Var(v);
                    }
                }
            }
            body.push(lit);
        }
        let out = Clause {
            head,
            body,
            tag: None,
            rule_weight,
            line: self.line,
        };
        if let Some(msg) = out.head_restriction_errors().into_iter().next() {
            return Err(Error::Clause {
                line: self.line,
                message: msg,
            });
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Theory {
    clauses: Vec<Clause>,
    by_pred: IndexMap<String, Vec<usize>>,
}

impl Theory {
    pub fn from_clauses(clauses: Vec<Clause>) -> Self {
        let mut by_pred: IndexMap<String, Vec<usize>> = IndexMap::new();
        for (i, c) in clauses.iter().enumerate() {
            by_pred.entry(c.head.pred.clone()).or_default().push(i);
        }
        Self { clauses, by_pred }
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn clause_ids_for(&self, pred: &str) -> &[usize] {
        self.by_pred.get(pred).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn clauses_for(&self, pred: &str) -> impl Iterator<Item = &Clause> {
        self.clause_ids_for(pred).iter().map(|&i| &self.clauses[i])
    }

    pub fn defines(&self, pred: &str) -> bool {
        self.by_pred.contains_key(pred)
    }

    pub fn predicates(&self) -> impl Iterator<Item = &str> {
        self.by_pred.keys().map(String::as_str)
    }

    pub fn desugar(&self) -> Result<Theory> {
        Ok(Theory::from_clauses(
            self.clauses
                .iter()
                .map(Clause::desugar)
                .collect::<Result<_>>()?,
        ))
    }

    /// Interns every constant the clauses mention and registers a
    /// `weighted(t)` fact (weight 1.0) for each rule tag that the store does
    /// not already define. Returns the rule-weight facts.
    pub fn bind(&self, kb: &mut KnowledgeBase) -> Result<Vec<FactId>> {
        let mut tags = Vec::new();
        for c in &self.clauses {
            for l in std::iter::once(&c.head).chain(&c.body) {
                if let Some(name) = l.pred.strip_prefix(ASSIGN_PREFIX) {
                    kb.intern(name);
                }
                for a in &l.args {
                    if let Term::Const(name) = a {
                        kb.intern(name);
                    }
                }
            }
            if let Some(t) = c.tag.as_ref().or(c.rule_weight.as_ref()) {
                kb.intern(t);
                let id = match kb.fact_id(WEIGHTED, &[t]) {
                    Ok(id) => id,
                    Err(_) => kb.add_fact(WEIGHTED, &[t], 1.0)?,
                };
                if !tags.contains(&id) {
                    tags.push(id);
                }
            }
        }
        Ok(tags)
    }
}

impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(line: usize, col: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            col,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(line: usize, col: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            col,
            severity: Severity::Warning,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `file:line:col: message`
    pub fn render(&self, file: &str) -> String {
        let kind = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        format!("{file}:{}:{}: {kind}: {}", self.line, self.col.max(1), self.message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render("<rules>"))
    }
}

/// Checks a theory (raw or desugared) against the fact store. Problems are
/// reported, not raised.
pub fn validate(theory: &Theory, kb: &KnowledgeBase) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for clause in theory.clauses() {
        let line = clause.line;
        let col = clause.head.col;
        let errs = clause.head_restriction_errors();
        if !errs.is_empty() {
            out.extend(errs.into_iter().map(|m| Diagnostic::error(line, col, m)));
            continue;
        }
        let c = match clause.desugar() {
            Ok(c) => c,
            Err(e) => {
                out.push(Diagnostic::error(line, col, e.to_string()));
                continue;
            }
        };
        let head = &c.head.pred;
        if c.head.arity() != 2 {
            out.push(Diagnostic::error(
                line,
                col,
                format!("clause head {} must be binary", c.head),
            ));
            continue;
        }
        if head == ANY || head.starts_with(ASSIGN_PREFIX) || head == WEIGHTED {
            out.push(Diagnostic::error(line, col, format!("`{head}` is reserved")));
            continue;
        }
        if kb.arity(head).is_some() {
            out.push(Diagnostic::error(
                line,
                col,
                format!("`{head}` is defined both by clauses and by facts"),
            ));
        }
        let mut bad_literal = false;
        for lit in &c.body {
            let lcol = lit.col;
            let defined = if theory.defines(&lit.pred) {
                if lit.arity() != 2 {
                    out.push(Diagnostic::error(
                        line,
                        lcol,
                        format!("`{}` is defined by binary clauses but used with arity {}", lit.pred, lit.arity()),
                    ));
                    bad_literal = true;
                }
                true
            } else if lit.pred.starts_with(ASSIGN_PREFIX) && lit.arity() == 1 {
                true
            } else if lit.pred == WEIGHTED && c.rule_weight.is_some() && lit.arity() == 1 {
                true
            } else if lit.pred == ANY {
                out.push(Diagnostic::error(line, lcol, "`any` may not appear in clauses"));
                bad_literal = true;
                true
            } else if let Some(a) = kb.arity(&lit.pred) {
                if a != lit.arity() {
                    out.push(Diagnostic::error(
                        line,
                        lcol,
                        format!("`{}` has arity {a} in the facts but {} here", lit.pred, lit.arity()),
                    ));
                    bad_literal = true;
                }
                true
            } else {
                false
            };
            if !defined {
                out.push(Diagnostic::error(
                    line,
                    lcol,
                    format!("undefined predicate `{}/{}`", lit.pred, lit.arity()),
                ));
                bad_literal = true;
            }
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for v in c.body.iter().flat_map(Literal::vars) {
            *counts.entry(v).or_default() += 1;
        }
        let head_vars: BTreeSet<&str> = c.head.vars().collect();
        let mut singletons: Vec<&str> = counts
            .iter()
            .filter(|(v, n)| **n == 1 && !head_vars.contains(**v) && !v.starts_with('_'))
            .map(|(v, _)| *v)
            .collect();
        singletons.sort_unstable();
        for v in singletons {
            out.push(Diagnostic::warning(
                line,
                col,
                format!("variable {v} is used only once"),
            ));
        }
        if !bad_literal {
            let graph = factorgraph::build_factor_graph(&c, Mode::Io)
                .and_then(|g| factorgraph::check_polytree(&factorgraph::connect_components(g)));
            if let Err(e) = graph {
                out.push(Diagnostic::error(line, col, e.to_string()));
            }
        }
    }
    out
}

/// Parses a rules file into a theory (not yet desugared).
pub fn parse_theory(text: &str) -> Result<Theory> {
    let mut clauses = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        clauses.push(LineParser::new(raw, line).clause()?);
    }
    Ok(Theory::from_clauses(clauses))
}

/// Parses a single clause.
pub fn parse_clause(text: &str) -> Result<Clause> {
    LineParser::new(text, 1).clause()
}

/// Parses a literal such as `uncle(joe,Y)`.
pub fn parse_literal(text: &str) -> Result<Literal> {
    let mut p = LineParser::new(text, 1);
    let lit = p.literal()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(lit)
}

struct LineParser {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl LineParser {
    fn new(text: &str, line: usize) -> Self {
        Self {
            chars: text.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            col: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        self.skip_ws();
        let end = self.pos + s.chars().count();
        if end <= self.chars.len() && self.chars[self.pos..end].iter().copied().eq(s.chars()) {
            self.pos = end;
            Ok(())
        } else {
            Err(self.error(format!("expected `{s}`")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len()
            && (self.chars[self.pos].is_alphanumeric() || self.chars[self.pos] == '_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected an identifier"));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn literal(&mut self) -> Result<Literal> {
        self.skip_ws();
        let col = self.pos + 1;
        let pred = self.ident()?;
        if pred.starts_with(|c: char| c.is_ascii_uppercase() || c == '_') {
            self.pos = col - 1;
            return Err(self.error(format!("predicate name `{pred}` must start lowercase")));
        }
        self.expect("(")?;
        let mut args = vec![Term::parse(&self.ident()?)];
        while self.peek() == Some(',') {
            self.pos += 1;
            args.push(Term::parse(&self.ident()?));
        }
        self.expect(")")?;
        if args.len() > 2 {
            let pos = self.pos;
            self.pos = col - 1;
            let e = self.error(format!(
                "`{pred}` has {} arguments; only unary and binary predicates are supported",
                args.len()
            ));
            self.pos = pos;
            return Err(e);
        }
        if pred == "assign" {
            return match args.as_slice() {
                [Term::Var(v), Term::Const(c)] => Ok(Literal {
                    pred: format!("{ASSIGN_PREFIX}{c}"),
                    args: vec![Term::Var(v.clone())],
                    col,
                }),
                _ => {
                    self.pos = col - 1;
                    Err(self.error("assign takes a variable and a constant: assign(W,c)"))
                }
            };
        }
        Ok(Literal { pred, args, col })
    }

    fn clause(&mut self) -> Result<Clause> {
        let head = self.literal()?;
        if self.peek() == Some('.') {
            return Err(self.error("clauses need a body; facts belong in the facts file"));
        }
        self.expect(":-")?;
        let mut body = vec![self.literal()?];
        while self.peek() == Some(',') {
            self.pos += 1;
            body.push(self.literal()?);
        }
        let mut tag = None;
        if self.peek() == Some('{') {
            self.pos += 1;
            let t = self.ident()?;
            if matches!(Term::parse(&t), Term::Var(_)) {
                return Err(self.error("rule tags must be constants"));
            }
            tag = Some(t);
            self.expect("}")?;
        }
        self.expect(".")?;
        match self.peek() {
            None | Some('#') | Some('%') => {}
            Some(_) => return Err(self.error("unexpected text after `.`")),
        }
        Ok(Clause {
            head,
            body,
            tag,
            rule_weight: None,
            line: self.line,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::load_facts;

    const FIG1_RULES: &str = "uncle(X,Y):-child(X,W),brother(W,Y).\n\
uncle(X,Y):-aunt(X,W),husband(W,Y).\n\
status(X,tired):-child(W,X),infant(W).\n";

    const FIG1_FACTS: &str = "child\tliam\teve\t0.99\nchild\tdave\teve\t0.99\nchild\tliam\tbob\t0.75\n\
husband\teve\tbob\t0.9\ninfant\tliam\t0.7\ninfant\tdave\t0.1\naunt\tjoe\teve\t0.9\nbrother\teve\tchip\t0.9\n";

    fn v(n: &str) -> Term {
        Term::Var(n.into())
    }

    #[test]
    fn parses_a_chain_clause() {
        let c = parse_clause("uncle(X,Y):-child(X,W),brother(W,Y).").unwrap();
        assert_eq!(c.head, Literal::new("uncle", vec![v("X"), v("Y")]));
        assert_eq!(
            c.body,
            vec![
                Literal::new("child", vec![v("X"), v("W")]),
                Literal::new("brother", vec![v("W"), v("Y")])
            ]
        );
        assert_eq!(c.tag, None);
    }

    #[test]
    fn parses_rule_tags() {
        let c = parse_clause("status(X,tired):-child(W,X),infant(W) {c3}.").unwrap();
        assert_eq!(c.tag.as_deref(), Some("c3"));
        assert_eq!(c.head.args[1], Term::Const("tired".into()));
    }

    #[test]
    fn rejects_ternary_and_facts() {
        let e = parse_clause("p(X,Y,Z):-q(X).").unwrap_err();
        assert!(e.to_string().contains("3 arguments"), "{e}");
        assert!(parse_clause("p(a,b).").is_err());
        let e = parse_theory("p(X,Y):-q(X,Y).\np(X,Y):-q(X,Y)\n").unwrap_err();
        assert!(matches!(e, Error::Syntax { line: 2, .. }), "{e}");
    }

    #[test]
    fn assign_surface_syntax_normalizes() {
        let c = parse_clause("p(X,Y):-assign(Y,c),q(X).").unwrap();
        assert_eq!(c.body[0], Literal::new("assign_c", vec![v("Y")]));
    }

    #[test]
    fn desugars_head_constants() {
        let c = parse_clause("status(X,tired):-child(W,X),infant(W).").unwrap();
        let d = c.desugar().unwrap();
        assert_eq!(
            d.to_string(),
            "status(X,_A1):-assign_tired(_A1),child(W,X),infant(W)."
        );
    }

    #[test]
    fn desugars_tags_and_body_constants() {
        let c = parse_clause("status(X,tired):-child(W,X),infant(W) {c3}.").unwrap();
        let d = c.desugar().unwrap();
        assert_eq!(
            d.to_string(),
            "status(X,_A1):-assign_tired(_A1),assign_c3(_A2),weighted(_A2),child(W,X),infant(W)."
        );
        assert_eq!(d.rule_weight.as_deref(), Some("c3"));
        let c = parse_clause("p(X,Y):-q(X,bob),r(X,Y).").unwrap().desugar().unwrap();
        assert_eq!(c.to_string(), "p(X,Y):-assign_bob(_A1),q(X,_A1),r(X,Y).");
    }

    #[test]
    fn desugar_without_constants_is_identity() {
        let c = parse_clause("uncle(X,Y):-child(X,W),brother(W,Y).").unwrap();
        assert_eq!(c.desugar().unwrap(), c);
    }

    #[test]
    fn desugar_rejects_bad_heads() {
        assert!(parse_clause("p(X,X):-q(X).").unwrap().desugar().is_err());
        assert!(parse_clause("p(X,Y):-q(X).").unwrap().desugar().is_err());
    }

    #[test]
    fn family_theory_validates_cleanly() {
        let theory = parse_theory(FIG1_RULES).unwrap();
        let mut kb = load_facts(FIG1_FACTS).unwrap();
        theory.bind(&mut kb).unwrap();
        assert_eq!(kb.num_constants(), 7);
        assert_eq!(validate(&theory, &kb), vec![]);
    }

    #[test]
    fn undefined_predicate_is_reported() {
        let theory = parse_theory("uncle(X,Y):-cousin(X,Y).").unwrap();
        let kb = load_facts(FIG1_FACTS).unwrap();
        let d = validate(&theory, &kb);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("undefined predicate `cousin/2`"));
        assert_eq!(d[0].render("r.rules"), "r.rules:1:13: error: undefined predicate `cousin/2`");
    }

    #[test]
    fn repeated_head_variable_is_reported() {
        let theory = parse_theory("p(X,X):-infant(X).").unwrap();
        let kb = load_facts(FIG1_FACTS).unwrap();
        let d = validate(&theory, &kb);
        assert!(d.iter().any(|d| d.message.contains("repeated head variable X")), "{d:?}");
    }

    #[test]
    fn cycles_are_reported() {
        let theory = parse_theory("p(X,Y):-child(X,Y),aunt(X,Y).").unwrap();
        let kb = load_facts(FIG1_FACTS).unwrap();
        let d = validate(&theory, &kb);
        assert!(d.iter().any(|d| d.message.contains("not a tree")), "{d:?}");
    }

    #[test]
    fn singleton_variables_warn() {
        let theory = parse_theory("p(X,Y):-child(X,Y),aunt(X,Z).").unwrap();
        let kb = load_facts(FIG1_FACTS).unwrap();
        let d = validate(&theory, &kb);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
    }
}
