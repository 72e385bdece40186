//! Checks reverse-mode fact-weight gradients against central finite
//! differences on the family program and on grid path programs.
//!
//! cargo run --example gradient_check

use dtlog::autodiff::grad_check;
use dtlog::grid::generate;
use dtlog::{FunctionKey, Mode, Program};

const RULES: &str = include_str!("data/family.rules");
const FACTS: &str = include_str!("data/family.facts");

fn main() -> dtlog::Result<()> {
    let family = Program::from_text(RULES, FACTS)?;
    for (pred, mode, input) in [("uncle", Mode::Io, "joe"), ("status", Mode::Io, "eve"), ("uncle", Mode::Oi, "bob"), ("status", Mode::Oi, "tired")] {
        let registry = family.compile(&[(pred.to_string(), mode)], 10)?;
        let key = FunctionKey::new(pred, mode, 0);
        let err = grad_check(&registry, &family.kb, &key, &family.kb.one_hot(input)?, usize::MAX, 1)?;
        println!("{key} from {input}: max relative error {err:.2e}");
    }

    let task = generate(16, 0)?;
    let grid = Program::new(&task.theory(), task.kb.clone())?;
    for depth in [2, 4] {
        let registry = grid.compile(&[("path".to_string(), Mode::Io)], depth)?;
        let key = FunctionKey::new("path", Mode::Io, 0);
        let err = grad_check(&registry, &grid.kb, &key, &grid.kb.one_hot("c_8_8")?, 40, 7)?;
        println!("grid path depth {depth}: max relative error over 40 edges {err:.2e}");
    }
    Ok(())
}
