//! Learns rule weights only: two tagged candidate rules for `gp`, of which
//! one matches the labels. Fact weights stay fixed.
//!
//! cargo run --example rule_learning

use dtlog::learner::{evaluate_accuracy, train, Example, TrainConfig, Trainable};
use dtlog::{Mode, Program, Query};

const RULES: &str = "\
gp(X,Y):-parent(X,Z),parent(Z,Y) {chain}.
gp(X,Y):-parent(X,Y) {direct}.
";

fn main() -> dtlog::Result<()> {
    let mut facts = String::new();
    let mut examples = Vec::new();
    for i in 0..6 {
        facts.push_str(&format!("parent\ta{i}\tb{i}\nparent\tb{i}\tc{i}\n"));
        examples.push(Example {
            query: Query::new("gp", Mode::Io, format!("a{i}")),
            positives: vec![format!("c{i}")],
        });
    }
    let mut program = Program::from_text(RULES, &facts)?;
    let registry = program.compile(&[("gp".to_string(), Mode::Io)], 10)?;
    let weight = |p: &Program, tag: &str| p.kb.get_weight(p.kb.parse_fact(&format!("weighted({tag})")).unwrap());

    println!("before: chain {:.3} direct {:.3} accuracy {:.3}", weight(&program, "chain"), weight(&program, "direct"), evaluate_accuracy(&registry, &program.kb, &examples)?);
    let config = TrainConfig {
        epochs: 20,
        learning_rate: 0.5,
        trainable: Trainable::TaggedOnly,
        ..TrainConfig::default()
    };
    let log = train(&registry, &mut program.kb, &examples, &config)?;
    for e in log.epochs.iter().step_by(5) {
        println!("epoch {:>2} loss {:.4}", e.epoch, e.loss);
    }
    println!("after:  chain {:.3} direct {:.3} accuracy {:.3}", weight(&program, "chain"), weight(&program, "direct"), evaluate_accuracy(&registry, &program.kb, &examples)?);
    Ok(())
}
