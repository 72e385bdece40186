//! Per-clause factor graphs: one node per logical variable, one factor per
//! body literal.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kb::ANY;
use crate::parser::{Clause, Term};

/// Which head argument is given.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// `p(c,Y)`
    Io,
    /// `p(Y,c)`
    Oi,
}

impl Mode {
    pub fn flipped(self) -> Mode {
        match self {
            Mode::Io => Mode::Oi,
            Mode::Oi => Mode::Io,
        }
    }

    fn input_slot(self) -> usize {
        match self {
            Mode::Io => 0,
            Mode::Oi => 1,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Io => "io",
            Mode::Oi => "oi",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "io" => Ok(Mode::Io),
            "oi" => Ok(Mode::Oi),
            _ => Err(Error::Invalid(format!("unknown mode `{s}`, expected io or oi"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    Unary,
    Binary,
    /// All-ones connector added between components.
    Any,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factor {
    pub pred: String,
    /// Variable indices by argument slot.
    pub vars: Vec<usize>,
    /// Body position of the literal; `None` for connectors.
    pub literal: Option<usize>,
    pub kind: FactorKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorGraph {
    pub line: usize,
    pub head: String,
    pub vars: Vec<String>,
    pub factors: Vec<Factor>,
    pub input: usize,
    pub output: usize,
}

impl FactorGraph {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    /// Factors touching a variable, in factor order.
    pub fn neighbors(&self, var: usize) -> impl Iterator<Item = usize> + '_ {
        self.factors
            .iter()
            .enumerate()
            .filter(move |(_, f)| f.vars.contains(&var))
            .map(|(i, _)| i)
    }

    pub fn edge_count(&self) -> usize {
        self.factors.iter().map(|f| f.vars.len()).sum()
    }

    pub fn node_count(&self) -> usize {
        self.vars.len() + self.factors.len()
    }

    pub fn any_count(&self) -> usize {
        self.factors.iter().filter(|f| f.kind == FactorKind::Any).count()
    }

    /// Connected components as sorted lists of variable indices, ordered by
    /// their smallest index.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.vars.len()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut x = x;
            while p[x] != r {
                let next = p[x];
                p[x] = r;
                x = next;
            }
            r
        }
        for f in &self.factors {
            if let [a, b] = f.vars[..] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..self.vars.len() {
            let r = find(&mut parent, v);
            groups.entry(r).or_default().push(v);
        }
        groups.into_values().collect()
    }
}

impl fmt::Display for FactorGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "graph {} (line {}) input={} output={}",
            self.head, self.line, self.vars[self.input], self.vars[self.output]
        )?;
        for (i, v) in self.vars.iter().enumerate() {
            let ns: Vec<String> = self.neighbors(i).map(|n| format!("f{n}")).collect();
            writeln!(f, "  var {v}: {}", ns.join(" "))?;
        }
        for (i, fac) in self.factors.iter().enumerate() {
            let vs: Vec<&str> = fac.vars.iter().map(|&v| self.vars[v].as_str()).collect();
            writeln!(f, "  f{i} {}({}): {}", fac.pred, vs.join(","), vs.join(" "))?;
        }
        Ok(())
    }
}

/// Builds `G_r` for a desugared clause. Head arguments must be distinct
/// variables.
pub fn build_factor_graph(clause: &Clause, mode: Mode) -> Result<FactorGraph> {
    let bad = |message: String| Error::Clause {
        line: clause.line,
        message,
    };
    let head_vars: Vec<&str> = clause
        .head
        .args
        .iter()
        .map(|t| t.as_var().ok_or_else(|| bad(format!("head {} is not desugared", clause.head))))
        .collect::<Result<_>>()?;
    if head_vars.len() != 2 {
        return Err(bad(format!("clause head {} must be binary", clause.head)));
    }
    let vars = clause.variables();
    let idx = |name: &str| vars.iter().position(|v| v == name).expect("collected above");
    let mut factors = Vec::with_capacity(clause.body.len());
    for (pos, lit) in clause.body.iter().enumerate() {
        let args = lit
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => Ok(idx(v)),
                Term::Const(c) => Err(bad(format!("constant {c} in {lit} was not desugared"))),
            })
            .collect::<Result<Vec<_>>>()?;
        factors.push(Factor {
            pred: lit.pred.clone(),
            kind: if args.len() == 1 {
                FactorKind::Unary
            } else {
                FactorKind::Binary
            },
            vars: args,
            literal: Some(pos),
        });
    }
    Ok(FactorGraph {
        line: clause.line,
        head: clause.head.pred.clone(),
        input: idx(head_vars[mode.input_slot()]),
        output: idx(head_vars[1 - mode.input_slot()]),
        vars,
        factors,
    })
}

/// Adds `any` factors until the graph is connected. Each orphan component is
/// joined through its lexicographically-first variable to the
/// lexicographically-first variable of the output's component.
pub fn connect_components(mut g: FactorGraph) -> FactorGraph {
    let comps = g.components();
    if comps.len() <= 1 {
        return g;
    }
    let first = |c: &Vec<usize>, g: &FactorGraph| {
        *c.iter()
            .min_by(|&&a, &&b| g.vars[a].cmp(&g.vars[b]))
            .expect("components are nonempty")
    };
    let home = comps
        .iter()
        .find(|c| c.contains(&g.output))
        .expect("output variable belongs to a component");
    let anchor = first(home, &g);
    let mut orphans: Vec<usize> = comps
        .iter()
        .filter(|c| !c.contains(&g.output))
        .map(|c| first(c, &g))
        .collect();
    orphans.sort_by(|&a, &b| g.vars[a].cmp(&g.vars[b]));
    for o in orphans {
        g.factors.push(Factor {
            pred: ANY.to_string(),
            vars: vec![o, anchor],
            literal: None,
            kind: FactorKind::Any,
        });
    }
    g
}

/// Accepts the graph iff it is connected and acyclic.
pub fn check_polytree(g: &FactorGraph) -> Result<()> {
    let n_vars = g.vars.len();
    let n = g.node_count();
    // nodes: vars 0..n_vars, factors n_vars..
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut eid = 0;
    for (fi, f) in g.factors.iter().enumerate() {
        for &v in &f.vars {
            adj[v].push((n_vars + fi, eid));
            adj[n_vars + fi].push((v, eid));
            eid += 1;
        }
    }
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &(w, e) in &adj[u] {
            if parent[u].is_some_and(|(_, pe)| pe == e) {
                continue;
            }
            if seen[w] {
                return Err(Error::NotATree {
                    line: g.line,
                    vars: cycle_vars(g, &parent, u, w),
                });
            }
            seen[w] = true;
            parent[w] = Some((u, e));
            stack.push(w);
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Clause {
            line: g.line,
            message: "clause graph is disconnected".to_string(),
        });
    }
    debug_assert_eq!(g.edge_count() + 1, n);
    Ok(())
}

fn cycle_vars(g: &FactorGraph, parent: &[Option<(usize, usize)>], u: usize, w: usize) -> Vec<String> {
    let ancestors = |mut x: usize| {
        let mut path = vec![x];
        while let Some((p, _)) = parent[x] {
            path.push(p);
            x = p;
        }
        path
    };
    let pu = ancestors(u);
    let pw = ancestors(w);
    let meet = pu.iter().find(|x| pw.contains(x)).copied();
    let mut nodes: Vec<usize> = pu.iter().copied().take_while(|&x| Some(x) != meet).collect();
    nodes.extend(pw.iter().copied().take_while(|&x| Some(x) != meet));
    nodes.extend(meet);
    let mut vars: Vec<String> = nodes
        .into_iter()
        .filter(|&x| x < g.vars.len())
        .map(|x| g.vars[x].clone())
        .collect();
    vars.sort();
    vars.dedup();
    vars
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_clause;

    fn graph(text: &str, mode: Mode) -> FactorGraph {
        let c = parse_clause(text).unwrap().desugar().unwrap();
        connect_components(build_factor_graph(&c, mode).unwrap())
    }

    #[test]
    fn chain_clause_is_a_path() {
        let g = graph("uncle(X,Y):-child(X,W),brother(W,Y).", Mode::Io);
        assert_eq!(g.vars, vec!["X", "Y", "W"]);
        assert_eq!(g.vars[g.input], "X");
        assert_eq!(g.vars[g.output], "Y");
        assert_eq!(g.factors.len(), 2);
        assert_eq!(g.factors[0].vars, vec![0, 2]);
        assert_eq!(g.factors[1].vars, vec![2, 1]);
        check_polytree(&g).unwrap();
    }

    #[test]
    fn oi_mode_swaps_roles() {
        let g = graph("uncle(X,Y):-child(X,W),brother(W,Y).", Mode::Oi);
        assert_eq!(g.vars[g.input], "Y");
        assert_eq!(g.vars[g.output], "X");
    }

    #[test]
    fn single_literal_clause() {
        let g = graph("p(X,Y):-q(X,Y).", Mode::Io);
        assert_eq!(g.factors.len(), 1);
        assert_eq!(g.edge_count(), 2);
        check_polytree(&g).unwrap();
    }

    #[test]
    fn status_clause_gets_any_between_w_and_t() {
        let c = parse_clause("status(X,tired):-child(W,X),infant(W).")
            .unwrap()
            .desugar()
            .unwrap();
        let g = build_factor_graph(&c, Mode::Io).unwrap();
        assert_eq!(g.components().len(), 2);
        let g = connect_components(g);
        assert_eq!(g.any_count(), 1);
        let any = g.factors.last().unwrap();
        assert_eq!(any.kind, FactorKind::Any);
        let names: Vec<&str> = any.vars.iter().map(|&v| g.vars[v].as_str()).collect();
        assert_eq!(names, vec!["W", "_A1"]);
        check_polytree(&g).unwrap();
    }

    #[test]
    fn connected_graph_is_unchanged() {
        let c = parse_clause("uncle(X,Y):-child(X,W),brother(W,Y).").unwrap();
        let g = build_factor_graph(&c, Mode::Io).unwrap();
        assert_eq!(connect_components(g.clone()), g);
    }

    #[test]
    fn three_components_get_two_connectors() {
        let g = graph("p(X,Y):-q(X),r(Y),s(Z,V).", Mode::Io);
        assert_eq!(g.any_count(), 2);
        assert_eq!(g.components().len(), 1);
        check_polytree(&g).unwrap();
    }

    #[test]
    fn cycles_are_rejected() {
        let g = graph("p(X,Y):-q(X,Y),r(X,Y).", Mode::Io);
        match check_polytree(&g) {
            Err(Error::NotATree { vars, .. }) => assert_eq!(vars, vec!["X", "Y"]),
            other => panic!("{other:?}"),
        }
        let g = graph("p(X,Y):-q(X,Z),r(Z,Y),s(X,Y).", Mode::Io);
        match check_polytree(&g) {
            Err(Error::NotATree { vars, .. }) => assert_eq!(vars, vec!["X", "Y", "Z"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn self_loop_literal_is_a_cycle() {
        let g = graph("p(X,Y):-q(X,X),r(X,Y).", Mode::Io);
        assert!(check_polytree(&g).is_err());
    }
}
