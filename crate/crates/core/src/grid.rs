//! Synthetic grid path-finding task: cells of an n×n grid, an `edge`
//! relation over 8-connected neighbours plus self-loops, and one query per
//! cell whose answer is the nearest corner.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::factorgraph::Mode;
use crate::kb::KnowledgeBase;
use crate::learner::{serialize_examples, Example};
use crate::parser::{parse_theory, Theory};
use crate::runtime::Query;

/// Initial edge weight. Much above 0.2 the walk counts over ten hops reach
/// 1e5 and more, softmax saturates, and the first update at lr 0.1 clamps
/// most edges to zero.
pub const DEFAULT_INIT_WEIGHT: f64 = 0.19;

pub const GRID_RULES: &str = "path(X,Y):-edge(X,Y).\npath(X,Y):-edge(X,Z),path(Z,Y).\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid(format!("grid side must be at least 2, got {n}")));
        }
        Ok(Self { n })
    }

    /// `c_<row>_<col>`, 1-based.
    pub fn cell(row: usize, col: usize) -> String {
        format!("c_{row}_{col}")
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        (1..=self.n)
            .flat_map(|r| (1..=self.n).map(move |c| (r, c)))
            .collect()
    }

    /// Directed edges: every cell to itself and to each of its up to eight
    /// neighbours.
    pub fn edges(&self) -> Vec<((usize, usize), (usize, usize))> {
        let n = self.n as isize;
        let mut out = Vec::new();
        for (r, c) in self.cells() {
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (r2, c2) = (r as isize + dr, c as isize + dc);
                    if (1..=n).contains(&r2) && (1..=n).contains(&c2) {
                        out.push(((r, c), (r2 as usize, c2 as usize)));
                    }
                }
            }
        }
        out
    }

    /// Closed form for `edges().len()`.
    pub fn edge_count(&self) -> usize {
        let n = self.n;
        2 * (2 * n * (n - 1) + 2 * (n - 1) * (n - 1)) + n * n
    }

    /// Corners in row-major order.
    pub fn corners(&self) -> [(usize, usize); 4] {
        let n = self.n;
        [(1, 1), (1, n), (n, 1), (n, n)]
    }

    /// Nearest corner by Chebyshev distance; ties go to the earlier corner.
    pub fn nearest_corner(&self, row: usize, col: usize) -> (usize, usize) {
        let dist = |(r, c): (usize, usize)| r.abs_diff(row).max(c.abs_diff(col));
        let corners = self.corners();
        let mut best = corners[0];
        for &k in &corners[1..] {
            if dist(k) < dist(best) {
                best = k;
            }
        }
        best
    }
}

/// A generated task instance.
#[derive(Clone, Debug)]
pub struct GridTask {
    pub spec: GridSpec,
    pub kb: KnowledgeBase,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

impl GridTask {
    pub fn theory(&self) -> Theory {
        parse_theory(GRID_RULES).expect("grid rules parse")
    }

    /// Writes `grid.facts`, `grid.rules`, `train.examples` and
    /// `test.examples` into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("grid.facts"), self.kb.serialize())?;
        fs::write(dir.join("grid.rules"), GRID_RULES)?;
        fs::write(dir.join("train.examples"), serialize_examples(&self.train))?;
        fs::write(dir.join("test.examples"), serialize_examples(&self.test))?;
        Ok(())
    }
}

/// [`generate_with`] at [`DEFAULT_INIT_WEIGHT`].
pub fn generate(n: usize, seed: u64) -> Result<GridTask> {
    generate_with(n, seed, DEFAULT_INIT_WEIGHT)
}

/// Builds the grid task: edge weights `init · (1 + U(-0.1, 0.1))`, and a
/// seeded shuffle of the cells putting `floor(n²/3)` queries in the test
/// split.
pub fn generate_with(n: usize, seed: u64, init: f64) -> Result<GridTask> {
    let spec = GridSpec::new(n)?;
    if !(init > 0.0 && init.is_finite()) {
        return Err(Error::Invalid(format!("initial weight must be positive, got {init}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kb = KnowledgeBase::new();
    for (r, c) in spec.cells() {
        kb.intern(&GridSpec::cell(r, c));
    }
    for ((r, c), (r2, c2)) in spec.edges() {
        let w = init * (1.0 + rng.gen_range(-0.1..0.1));
        kb.add_fact("edge", &[&GridSpec::cell(r, c), &GridSpec::cell(r2, c2)], w)?;
    }
    let mut examples: Vec<Example> = spec
        .cells()
        .into_iter()
        .map(|(r, c)| {
            let (kr, kc) = spec.nearest_corner(r, c);
            Example {
                query: Query::new("path", Mode::Io, GridSpec::cell(r, c)),
                positives: vec![GridSpec::cell(kr, kc)],
            }
        })
        .collect();
    examples.shuffle(&mut rng);
    let train = examples.split_off(n * n / 3);
    Ok(GridTask {
        spec,
        kb,
        train,
        test: examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_by_sixteen_grid() {
        let t = generate(16, 0).unwrap();
        assert_eq!(t.kb.num_constants(), 256);
        assert_eq!(t.kb.num_facts(), 2116);
        assert_eq!(t.train.len(), 171);
        assert_eq!(t.test.len(), 85);
    }

    #[test]
    fn smallest_grid() {
        let s = GridSpec::new(2).unwrap();
        assert_eq!(s.edges().len(), 16);
        for (r, c) in s.cells() {
            assert_eq!(s.nearest_corner(r, c), (r, c));
        }
        assert!(GridSpec::new(1).is_err());
    }

    #[test]
    fn ties_go_to_the_first_corner() {
        let s = GridSpec::new(3).unwrap();
        assert_eq!(s.nearest_corner(2, 2), (1, 1));
        assert_eq!(s.nearest_corner(2, 3), (1, 3));
        assert_eq!(s.nearest_corner(3, 2), (3, 1));
    }

    #[test]
    fn weights_are_jittered_around_the_init() {
        let t = generate_with(4, 7, 0.5).unwrap();
        assert!(t.kb.weights().iter().all(|w| (0.45..0.55).contains(w)));
        assert!(generate_with(4, 7, 0.0).is_err());
        let again = generate_with(4, 7, 0.5).unwrap();
        assert_eq!(t.kb.serialize(), again.kb.serialize());
    }
}
