//! Compares the engine's scores with explicit proof enumeration under
//! proof-sum and tuple-independence semantics.
//!
//! cargo run --example proof_semantics

use dtlog::oracle::{enumerate_proofs, explanations, score_proof_sum, tuple_independence};
use dtlog::Program;

const RULES: &str = include_str!("data/family.rules");
const FACTS: &str = include_str!("data/family.facts");

fn main() -> dtlog::Result<()> {
    let program = Program::from_text(RULES, FACTS)?;
    let kb = &program.kb;
    for text in ["uncle(joe,Y)", "status(eve,Y)", "status(Y,tired)"] {
        let query = text.parse()?;
        let engine = program.query(text, 10)?.unnormalized;
        let proofs = enumerate_proofs(&program.theory, kb, &query, 10)?;
        let sums = score_proof_sum(&proofs, kb);
        println!("{text}: {} proofs", proofs.len());
        for (answer, sets) in explanations(&proofs) {
            for set in &sets {
                let facts: Vec<String> = set.iter().map(|&f| kb.fact_name(f)).collect();
                println!("  {} <- {}", kb.name(answer), facts.join(", "));
            }
            println!(
                "  {}: engine {:.6}  proof-sum {:.6}  tuple-independence {:.6}",
                kb.name(answer),
                engine.get(answer),
                sums[&answer],
                tuple_independence(&sets, kb)?
            );
        }
    }
    Ok(())
}
