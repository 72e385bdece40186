//! Prints the factor graph and the compiled op sequence for every clause of a
//! target, before and after `any` elimination.
//!
//! cargo run --example compile_listing -- status io

use dtlog::compiler::{clause_graph, compile_program_with};
use dtlog::{Mode, Program};

const RULES: &str = include_str!("data/family.rules");
const FACTS: &str = include_str!("data/family.facts");

fn main() -> dtlog::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let pred = args.first().map_or("status", String::as_str);
    let mode: Mode = args.get(1).map_or("io", String::as_str).parse()?;
    let program = Program::from_text(RULES, FACTS)?;

    for clause in program.theory.clauses_for(pred) {
        println!("{clause}");
        println!("{}", clause_graph(clause, mode)?);
    }
    let targets = [(pred.to_string(), mode)];
    for eliminate in [false, true] {
        let registry = compile_program_with(&program.theory, &program.kb, &targets, 10, eliminate)?;
        println!("-- any elimination {}", if eliminate { "on" } else { "off" });
        print!("{registry}");
    }
    Ok(())
}
