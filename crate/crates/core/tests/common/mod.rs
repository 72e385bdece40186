#![allow(dead_code)]

use dtlog::{Mode, Program, Query};
use rand::seq::SliceRandom;
use rand::Rng;

pub const FAMILY_RULES: &str = include_str!("../../examples/data/family.rules");
pub const FAMILY_FACTS: &str = include_str!("../../examples/data/family.facts");

pub fn family() -> Program {
    Program::from_text(FAMILY_RULES, FAMILY_FACTS).unwrap()
}

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    /// Allow `p` in clause bodies.
    pub recursive: bool,
    /// Use each stored predicate at most once per body.
    pub reuse_free: bool,
}

pub const GENERAL: Shape = Shape {
    recursive: true,
    reuse_free: false,
};

pub const REUSE_FREE: Shape = Shape {
    recursive: false,
    reuse_free: true,
};

#[derive(Clone, Debug)]
pub struct RandomProgram {
    pub rules: String,
    pub facts: String,
    pub program: Program,
    pub max_depth: usize,
    pub constants: Vec<String>,
}

impl RandomProgram {
    /// Every `p(c,Y)` and `p(Y,c)` query.
    pub fn queries(&self) -> Vec<Query> {
        self.constants
            .iter()
            .flat_map(|c| [Query::new("p", Mode::Io, c.clone()), Query::new("p", Mode::Oi, c.clone())])
            .collect()
    }
}

/// Weight in (0, 1].
fn weight(rng: &mut impl Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}

fn random_facts(rng: &mut impl Rng, constants: &[String]) -> String {
    let n = constants.len();
    let mut out = String::new();
    for pred in ["e0", "e1"] {
        let mut any = false;
        for a in constants {
            for b in constants {
                if rng.gen_bool(1.5 / n as f64) {
                    out.push_str(&format!("{pred}\t{a}\t{b}\t{}\n", weight(rng)));
                    any = true;
                }
            }
        }
        if !any {
            let a = constants.choose(rng).unwrap();
            let b = constants.choose(rng).unwrap();
            out.push_str(&format!("{pred}\t{a}\t{b}\t{}\n", weight(rng)));
        }
    }
    let mut any = false;
    for c in constants {
        if rng.gen_bool(0.5) {
            out.push_str(&format!("u0\t{c}\t{}\n", weight(rng)));
            any = true;
        }
    }
    if !any {
        out.push_str(&format!("u0\t{}\t{}\n", constants[0], weight(rng)));
    }
    out
}

fn random_clause(rng: &mut impl Rng, shape: Shape, first: bool, constants: &[String]) -> String {
    let mut unused = vec!["e0", "e1"];
    unused.shuffle(rng);
    let mut unary_free = true;
    let mut recursion_free = true;
    let mut body: Vec<String> = Vec::new();
    let max_len = if shape.reuse_free { 2 } else { 3 };
    let len = rng.gen_range(1..=max_len);
    let mut chain = vec!["X".to_string()];
    for i in 1..len {
        chain.push(["A", "B"][i - 1].to_string());
    }
    chain.push("Y".to_string());
    for w in chain.windows(2) {
        let pred = if shape.recursive && !first && recursion_free && rng.gen_bool(0.4) {
            recursion_free = false;
            "p"
        } else if shape.reuse_free {
            unused.pop().unwrap()
        } else {
            ["e0", "e1"][rng.gen_range(0..2)]
        };
        let (a, b) = if rng.gen_bool(0.5) { (&w[0], &w[1]) } else { (&w[1], &w[0]) };
        body.push(format!("{pred}({a},{b})"));
    }
    if unary_free && rng.gen_bool(0.4) {
        let v = chain.choose(rng).unwrap();
        body.push(format!("u0({v})"));
        unary_free = false;
    }
    if rng.gen_bool(0.3) && (!shape.reuse_free || !unused.is_empty()) {
        let pred = if shape.reuse_free { unused.pop().unwrap() } else { "e0" };
        let v = chain.choose(rng).unwrap();
        let c = constants.choose(rng).unwrap();
        body.push(format!("{pred}({v},{c})"));
    }
    if rng.gen_bool(0.25) && (!shape.reuse_free || unary_free) {
        body.push("u0(Z)".to_string());
    }
    body.shuffle(rng);
    let head = if rng.gen_bool(0.15) {
        format!("p(X,{})", constants.choose(rng).unwrap())
    } else {
        "p(X,Y)".to_string()
    };
    format!("{head}:-{}.", body.join(","))
}

/// A random program over `e0/2`, `e1/2`, `u0/1` and the clause-defined
/// `p/2`: 3 to 10 constants, 1 to 4 tree-shaped clauses, depth 0 to 5,
/// weights in (0, 1].
pub fn random_program(rng: &mut impl Rng, shape: Shape) -> RandomProgram {
    let n = rng.gen_range(3..=10);
    let constants: Vec<String> = (0..n).map(|i| format!("k{i}")).collect();
    let facts = random_facts(rng, &constants);
    let clauses = rng.gen_range(1..=4);
    let rules: String = (0..clauses)
        .map(|i| random_clause(rng, shape, i == 0, &constants) + "\n")
        .collect();
    let program = Program::from_text(&rules, &facts)
        .unwrap_or_else(|e| panic!("generated program rejected: {e}\n{rules}\n{facts}"));
    let constants = constants.into_iter().filter(|c| program.kb.id(c).is_ok()).collect();
    RandomProgram {
        rules,
        facts,
        program,
        max_depth: rng.gen_range(0..=5),
        constants,
    }
}

/// `|a - b| <= tol · max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
