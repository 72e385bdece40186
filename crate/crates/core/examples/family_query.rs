//! Loads the family program and answers queries in both modes.
//!
//! cargo run --example family_query -- 'uncle(joe,Y)' 'status(Y,tired)'

use dtlog::Program;

const RULES: &str = include_str!("data/family.rules");
const FACTS: &str = include_str!("data/family.facts");

fn main() -> dtlog::Result<()> {
    let program = Program::from_text(RULES, FACTS)?;
    let mut queries: Vec<String> = std::env::args().skip(1).collect();
    if queries.is_empty() {
        queries = ["uncle(joe,Y)", "uncle(liam,Y)", "status(eve,Y)", "status(Y,tired)"]
            .map(String::from)
            .to_vec();
    }
    for q in &queries {
        let r = program.query(q, 10)?;
        println!("{q}");
        if r.norm == 0.0 {
            println!("  (no answers)");
        }
        for (c, v) in r.ranked(false) {
            println!("  {:<6} score {v:.4}  p {:.4}", program.kb.name(c), r.distribution.get(c));
        }
    }
    Ok(())
}
