//! Learns edge weights on the 16×16 grid so that `path(c,Y)` ranks the
//! nearest corner first.
//!
//! cargo run --release --example grid_training [-- n epochs seed]

use std::time::Instant;

use dtlog::grid::generate;
use dtlog::learner::{evaluate_accuracy, train, TrainConfig, Trainable};
use dtlog::{Mode, Program};

fn main() -> dtlog::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let n = args.first().copied().unwrap_or(16);
    let epochs = args.get(1).copied().unwrap_or(30);
    let seed = args.get(2).copied().unwrap_or(0) as u64;

    let task = generate(n, seed)?;
    let mut program = Program::new(&task.theory(), task.kb.clone())?;
    let registry = program.compile(&[("path".to_string(), Mode::Io)], 10)?;
    let config = TrainConfig {
        epochs,
        trainable: Trainable::Predicates(vec!["edge".into()]),
        seed,
        ..TrainConfig::default()
    };

    println!("initial test accuracy {:.3}", evaluate_accuracy(&registry, &program.kb, &task.test)?);
    let start = Instant::now();
    let log = train(&registry, &mut program.kb, &task.train, &config)?;
    for e in &log.epochs {
        println!("epoch {:2}  loss {:9.4}  train accuracy {:.3}", e.epoch, e.loss, e.accuracy);
    }
    let secs = start.elapsed().as_secs_f64();
    println!("{:.2}s total, {:.3}s per epoch", secs, secs / epochs as f64);
    println!("test accuracy {:.3}", evaluate_accuracy(&registry, &program.kb, &task.test)?);
    Ok(())
}
