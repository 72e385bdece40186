//! Runs a stochastic logic program through the engine by rewriting each
//! clause with a weighted tag and fixing database weights at 1.
//!
//! cargo run --example slp -- 0.2 0.5 0.3

use dtlog::oracle::{score_slp, slp_transform};
use dtlog::{load_facts, parse_theory, Program};

const RULES: &str = include_str!("data/family.rules");
const FACTS: &str = include_str!("data/family.facts");

fn main() -> dtlog::Result<()> {
    let mut weights: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("clause weights are numbers"))
        .collect();
    if weights.is_empty() {
        weights = vec![0.2, 0.5, 0.3];
    }
    let raw = parse_theory(RULES)?;
    let (theory, kb) = slp_transform(&raw, &load_facts(FACTS)?, &weights)?;
    for c in theory.clauses() {
        println!("{c}");
    }
    let engine = Program::new(&theory, kb)?;
    let reference = Program::from_text(RULES, FACTS)?;
    for text in ["uncle(joe,Y)", "uncle(Y,bob)", "status(Y,tired)"] {
        let direct = score_slp(&reference.theory, &reference.kb, &weights, &text.parse()?, 10)?;
        let r = engine.query(text, 10)?;
        println!("{text}");
        for (c, p) in direct {
            let name = reference.kb.name(c);
            println!("  {name:<6} slp {p:.4}  engine {:.4}", r.distribution.get(engine.kb.id(name)?));
        }
    }

    // two rules competing for the same query
    let rules = "route(X,Y):-road(X,Y).\nroute(X,Y):-rail(X,Z),road(Z,Y).\n";
    let facts = "road\ta\tb\nroad\tc\td\nrail\ta\tc\n";
    let (theory, kb) = slp_transform(&parse_theory(rules)?, &load_facts(facts)?, &[0.25, 0.75])?;
    let engine = Program::new(&theory, kb)?;
    println!("route(a,Y) with clause weights 0.25, 0.75");
    for (c, p) in engine.query("route(a,Y)", 10)?.ranked(true) {
        println!("  {:<6} {p:.4}", engine.kb.name(c));
    }
    Ok(())
}
