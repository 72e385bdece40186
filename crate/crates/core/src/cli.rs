//! Command-line front end. Each subcommand is a thin binding over the
//! library; [`run`] returns the process exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::autodiff::grad_check;
use crate::compiler::{clause_graph, FunctionKey, Target};
use crate::error::{Error, Result};
use crate::grid::{generate_with, DEFAULT_INIT_WEIGHT};
use crate::kb::load_facts;
use crate::learner::{evaluate_accuracy, load_examples, Example, train, TrainConfig, Trainable};
use crate::oracle::{
    clause_weights_from_tags, enumerate_proofs, score_proof_sum, score_slp, score_tuple_independence,
};
use crate::parser::parse_theory;
use crate::runtime::{respond, Query};
use crate::{Mode, Program};

#[derive(Debug, Parser)]
#[command(name = "dtlog", version, about = "Differentiable deductive database")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ProgramArgs {
    /// Rules file.
    #[arg(long)]
    pub rules: PathBuf,
    /// Facts file.
    #[arg(long)]
    pub facts: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub max_depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Semantics {
    Proofsum,
    Tupind,
    Slp,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the compiled functions for a target.
    Compile {
        #[command(flatten)]
        program: ProgramArgs,
        /// `pred/io` or `pred/oi`.
        #[arg(long)]
        target: String,
        /// Also print each clause's factor graph.
        #[arg(long)]
        dump_graph: bool,
    },
    /// Answer a query such as `uncle(joe,Y)`.
    Query {
        #[command(flatten)]
        program: ProgramArgs,
        #[arg(long)]
        query: String,
        /// Print raw scores instead of the normalized distribution.
        #[arg(long)]
        unnormalized: bool,
        /// Print only the K best answers.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Learn fact weights from examples.
    Train {
        #[command(flatten)]
        program: ProgramArgs,
        /// Training examples.
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        /// `all`, `tagged`, or a comma-separated list of predicates.
        #[arg(long, default_value = "tagged")]
        trainable: String,
        /// Where to write the trained facts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print accuracy on held-out examples.
    Eval {
        #[command(flatten)]
        program: ProgramArgs,
        #[arg(long)]
        test: PathBuf,
    },
    /// Compare gradients with finite differences.
    Gradcheck {
        #[command(flatten)]
        program: ProgramArgs,
        #[arg(long)]
        target: String,
        /// Facts to perturb per input.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Input constant; defaults to every constant with a nonzero answer.
        #[arg(long)]
        input: Option<String>,
    },
    /// Score a query with an exact reference semantics.
    Oracle {
        #[command(flatten)]
        program: ProgramArgs,
        #[arg(long)]
        query: String,
        #[arg(long, value_enum, default_value_t = Semantics::Proofsum)]
        semantics: Semantics,
    },
    /// Write the grid path-finding task.
    Gridgen {
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_INIT_WEIGHT)]
        init_weight: f64,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn load(args: &ProgramArgs) -> Result<Program> {
    let name = args.rules.display().to_string();
    let theory = parse_theory(&read(&args.rules)?).map_err(|e| match e {
        Error::Syntax { .. } => Error::Invalid(format!("{name}:{e}")),
        e => e,
    })?;
    let kb = load_facts(&read(&args.facts)?)
        .map_err(|e| Error::Invalid(format!("{}: {e}", args.facts.display())))?;
    let program = Program::load(&theory, kb, &name)?;
    for w in &program.warnings {
        eprintln!("{}", w.render(&name));
    }
    Ok(program)
}

fn score(v: f64) -> String {
    format!("{v:?}")
}

fn trainable(spec: &str) -> Trainable {
    match spec {
        "all" => Trainable::AllFacts,
        "tagged" => Trainable::TaggedOnly,
        list => Trainable::Predicates(
            list.split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(String::from)
                .collect(),
        ),
    }
}

fn targets(examples: &[Example]) -> Vec<(String, Mode)> {
    let mut out: Vec<(String, Mode)> = Vec::new();
    for e in examples {
        let t = (e.query.pred.clone(), e.query.mode);
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Runs one command and returns its standard output.
pub fn execute(cli: &Cli) -> Result<String> {
    let mut out = String::new();
    match &cli.command {
        Command::Compile {
            program,
            target,
            dump_graph,
        } => {
            let p = load(program)?;
            let t: Target = target.parse()?;
            if *dump_graph {
                for c in p.theory.clauses_for(&t.pred) {
                    writeln!(out, "{}", clause_graph(c, t.mode)?).unwrap();
                }
            }
            let registry = p.compile(&[(t.pred, t.mode)], program.max_depth)?;
            write!(out, "{registry}").unwrap();
        }
        Command::Query {
            program,
            query,
            unnormalized,
            top,
        } => {
            let p = load(program)?;
            let q: Query = query.parse()?;
            let registry = p.compile(&[(q.pred.clone(), q.mode)], program.max_depth)?;
            let response = respond(&registry, &p.kb, &q)?;
            let ranked = response.ranked(!unnormalized);
            for (c, v) in ranked.into_iter().take(top.unwrap_or(usize::MAX)) {
                writeln!(out, "{}\t{}", p.kb.name(c), score(v)).unwrap();
            }
        }
        Command::Train {
            program,
            train: path,
            epochs,
            lr,
            trainable: spec,
            out: dest,
        } => {
            let mut p = load(program)?;
            let examples = load_examples(&read(path)?)?;
            let registry = p.compile(&targets(&examples), program.max_depth)?;
            let config = TrainConfig {
                learning_rate: *lr,
                epochs: *epochs,
                max_depth: program.max_depth,
                trainable: trainable(spec),
                seed: cli.seed,
            };
            let log = train(&registry, &mut p.kb, &examples, &config)?;
            for e in &log.epochs {
                writeln!(out, "epoch {}\tloss {:.6}\taccuracy {:.4}", e.epoch, e.loss, e.accuracy).unwrap();
            }
            let acc = evaluate_accuracy(&registry, &p.kb, &examples)?;
            writeln!(out, "final\taccuracy {acc:.4}").unwrap();
            fs::write(dest, p.kb.serialize())?;
        }
        Command::Eval { program, test } => {
            let p = load(program)?;
            let examples = load_examples(&read(test)?)?;
            let registry = p.compile(&targets(&examples), program.max_depth)?;
            writeln!(out, "{:.4}", evaluate_accuracy(&registry, &p.kb, &examples)?).unwrap();
        }
        Command::Gradcheck {
            program,
            target,
            samples,
            input,
        } => {
            let p = load(program)?;
            let t: Target = target.parse()?;
            let registry = p.compile(&[(t.pred.clone(), t.mode)], program.max_depth)?;
            let key = FunctionKey::new(t.pred, t.mode, 0);
            let inputs: Vec<String> = match input {
                Some(c) => vec![c.clone()],
                None => p.kb.symbols().names().to_vec(),
            };
            let mut worst: f64 = 0.0;
            for (i, c) in inputs.iter().enumerate() {
                let x = p.kb.one_hot(c)?;
                if input.is_none() && crate::evaluate(&registry, &p.kb, &key, &x)?.is_zero() {
                    continue;
                }
                let seed = cli.seed.wrapping_add(i as u64);
                worst = worst.max(grad_check(&registry, &p.kb, &key, &x, *samples, seed)?);
            }
            writeln!(out, "{worst:e}").unwrap();
        }
        Command::Oracle {
            program,
            query,
            semantics,
        } => {
            let p = load(program)?;
            let q: Query = query.parse()?;
            let scores = match semantics {
                Semantics::Proofsum => {
                    let proofs = enumerate_proofs(&p.theory, &p.kb, &q, program.max_depth)?;
                    score_proof_sum(&proofs, &p.kb)
                }
                Semantics::Tupind => score_tuple_independence(&p.theory, &p.kb, &q, program.max_depth)?,
                Semantics::Slp => {
                    let weights = clause_weights_from_tags(&p.theory, &p.kb);
                    score_slp(&p.theory, &p.kb, &weights, &q, program.max_depth)?
                }
            };
            let mut ranked: Vec<_> = scores.into_iter().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (c, v) in ranked {
                writeln!(out, "{}\t{}", p.kb.name(c), score(v)).unwrap();
            }
        }
        Command::Gridgen {
            n,
            out: dir,
            init_weight,
        } => {
            let task = generate_with(*n, cli.seed, *init_weight)?;
            task.write(dir)?;
            writeln!(
                out,
                "wrote {} cells, {} edges, {} train and {} test examples to {}",
                n * n,
                task.kb.num_facts(),
                task.train.len(),
                task.test.len(),
                dir.display()
            )
            .unwrap();
        }
    }
    Ok(out)
}

/// Parses `args`, runs the command, prints its output, and returns the exit
/// code: 0 on success, 1 on domain errors, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
