//! Weighted fact store.
//!
//! Every ground fact owns one slot in the parameter vector; binary relations
//! are sparse matrices and unary relations sparse vectors whose stored entries
//! point back at those slots. The support is fixed once facts are loaded.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::sparse::{ConstId, SparseVector};

/// Prefix of the virtual unary predicates that bind a variable to a constant.
pub const ASSIGN_PREFIX: &str = "assign_";
/// The all-ones virtual relation used to connect clause components.
pub const ANY: &str = "any";
/// Unary predicate holding rule weights introduced by `{tag}` annotations.
pub const WEIGHTED: &str = "weighted";

#[derive(Clone, Debug, Default)]
pub struct SymbolTable {
    names: Vec<String>,
    ids: HashMap<String, ConstId>,
}

impl SymbolTable {
    pub fn intern(&mut self, name: &str) -> ConstId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as ConstId;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn lookup(&self, name: &str) -> Option<ConstId> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: ConstId) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FactArgs {
    Unary(ConstId),
    Binary(ConstId, ConstId),
}

impl FactArgs {
    pub fn arity(&self) -> usize {
        match self {
            FactArgs::Unary(_) => 1,
            FactArgs::Binary(..) => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fact {
    pub pred: String,
    pub args: FactArgs,
}

type Rows = Vec<Vec<(ConstId, FactId)>>;

/// Sparse `|C| x |C|` matrix whose entries index into the parameter vector.
/// Rows are kept sorted by column. The transpose is built on first use.
#[derive(Debug, Default)]
pub struct SparseMatrix {
    rows: Rows,
    nnz: usize,
    transposed: OnceLock<Rows>,
}

impl Clone for SparseMatrix {
    fn clone(&self) -> Self {
        Self {
            rows: self.rows.clone(),
            nnz: self.nnz,
            transposed: OnceLock::new(),
        }
    }
}

impl SparseMatrix {
    fn insert(&mut self, row: ConstId, col: ConstId, fact: FactId) {
        let r = row as usize;
        if self.rows.len() <= r {
            self.rows.resize_with(r + 1, Vec::new);
        }
        let row = &mut self.rows[r];
        let pos = row.partition_point(|&(c, _)| c < col);
        row.insert(pos, (col, fact));
        self.nnz += 1;
        self.transposed = OnceLock::new();
    }

    fn transposed_rows(&self) -> &Rows {
        self.transposed.get_or_init(|| {
            let mut t: Rows = Vec::new();
            for (r, row) in self.rows.iter().enumerate() {
                for &(c, f) in row {
                    let c = c as usize;
                    if t.len() <= c {
                        t.resize_with(c + 1, Vec::new);
                    }
                    // rows are visited in increasing order, so each column list stays sorted
                    t[c].push((r as ConstId, f));
                }
            }
            t
        })
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }
}

/// Read-only view of `M_p` or `M_p^T` with the current parameter values.
#[derive(Clone, Copy)]
pub struct MatrixView<'a> {
    rows: &'a Rows,
    params: &'a [f64],
    dim: usize,
}

impl<'a> MatrixView<'a> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: ConstId, col: ConstId) -> f64 {
        self.rows
            .get(row as usize)
            .and_then(|r| {
                r.binary_search_by_key(&col, |&(c, _)| c)
                    .ok()
                    .map(|p| self.params[r[p].1 .0])
            })
            .unwrap_or(0.0)
    }

    /// Nonzeros of this view as `(row, col, fact)`.
    pub fn entries(&self) -> impl Iterator<Item = (ConstId, ConstId, FactId)> + 'a {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, f)| (r as ConstId, c, f)))
    }

    pub fn row(&self, row: ConstId) -> &'a [(ConstId, FactId)] {
        self.rows.get(row as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Row-vector times matrix.
    pub fn vec_mul(&self, x: &SparseVector) -> SparseVector {
        let mut acc = vec![0.0; self.dim];
        let mut touched = Vec::new();
        for (a, xa) in x.iter() {
            for &(b, f) in self.row(a) {
                let slot = &mut acc[b as usize];
                if *slot == 0.0 {
                    touched.push(b);
                }
                *slot += xa * self.params[f.0];
            }
        }
        touched.sort_unstable();
        touched.dedup();
        SparseVector::from_pairs(
            self.dim,
            touched.into_iter().map(|b| (b, acc[b as usize])),
        )
    }
}

#[derive(Clone, Debug)]
enum Relation {
    Unary(Vec<(ConstId, FactId)>),
    Binary(SparseMatrix),
}

impl Relation {
    fn arity(&self) -> usize {
        match self {
            Relation::Unary(_) => 1,
            Relation::Binary(_) => 2,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct KnowledgeBase {
    symbols: SymbolTable,
    facts: Vec<Fact>,
    params: Vec<f64>,
    index: HashMap<Fact, FactId>,
    relations: IndexMap<String, Relation>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn num_constants(&self) -> usize {
        self.symbols.len()
    }

    pub fn num_facts(&self) -> usize {
        self.facts.len()
    }

    pub fn intern(&mut self, name: &str) -> ConstId {
        self.symbols.intern(name)
    }

    pub fn id(&self, name: &str) -> Result<ConstId> {
        self.symbols
            .lookup(name)
            .ok_or_else(|| Error::UnknownConstant(name.to_string()))
    }

    pub fn name(&self, id: ConstId) -> &str {
        self.symbols.name(id)
    }

    pub fn one_hot(&self, name: &str) -> Result<SparseVector> {
        Ok(SparseVector::one_hot(self.num_constants(), self.id(name)?))
    }

    /// Arity of a stored predicate, if any facts for it exist.
    pub fn arity(&self, pred: &str) -> Option<usize> {
        self.relations.get(pred).map(Relation::arity)
    }

    pub fn predicates(&self) -> impl Iterator<Item = (&str, usize)> {
        self.relations.iter().map(|(p, r)| (p.as_str(), r.arity()))
    }

    /// Adds a fact with an initial weight. Used while loading; the support is
    /// considered frozen once inference starts.
    pub fn add_fact(&mut self, pred: &str, args: &[&str], weight: f64) -> Result<FactId> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::Invalid(format!(
                "weight of {pred}({}) must be positive, got {weight}",
                args.join(",")
            )));
        }
        let args = match *args {
            [a] => FactArgs::Unary(self.intern(a)),
            [a, b] => FactArgs::Binary(self.intern(a), self.intern(b)),
            _ => {
                return Err(Error::Invalid(format!(
                    "{pred}: only unary and binary facts are supported, got {} arguments",
                    args.len()
                )))
            }
        };
        if let Some(existing) = self.arity(pred) {
            if existing != args.arity() {
                return Err(Error::Arity {
                    pred: pred.to_string(),
                    expected: existing,
                    found: args.arity(),
                });
            }
        }
        let fact = Fact {
            pred: pred.to_string(),
            args,
        };
        if self.index.contains_key(&fact) {
            return Err(Error::Invalid(format!(
                "duplicate fact {}",
                self.display_fact(&fact)
            )));
        }
        let id = FactId(self.facts.len());
        let relation = self
            .relations
            .entry(pred.to_string())
            .or_insert_with(|| match args {
                FactArgs::Unary(_) => Relation::Unary(Vec::new()),
                FactArgs::Binary(..) => Relation::Binary(SparseMatrix::default()),
            });
        match (relation, args) {
            (Relation::Unary(entries), FactArgs::Unary(a)) => {
                let pos = entries.partition_point(|&(c, _)| c < a);
                entries.insert(pos, (a, id));
            }
            (Relation::Binary(m), FactArgs::Binary(a, b)) => m.insert(a, b, id),
            _ => unreachable!("arity checked above"),
        }
        self.index.insert(fact.clone(), id);
        self.facts.push(fact);
        self.params.push(weight);
        Ok(id)
    }

    pub fn fact(&self, id: FactId) -> &Fact {
        &self.facts[id.0]
    }

    pub fn facts(&self) -> impl Iterator<Item = (FactId, &Fact)> {
        self.facts.iter().enumerate().map(|(i, f)| (FactId(i), f))
    }

    pub fn fact_id(&self, pred: &str, args: &[&str]) -> Result<FactId> {
        let unknown = || Error::UnknownFact(format!("{pred}({})", args.join(",")));
        let ids: Option<Vec<ConstId>> = args.iter().map(|a| self.symbols.lookup(a)).collect();
        let ids = ids.ok_or_else(unknown)?;
        let args = match ids[..] {
            [a] => FactArgs::Unary(a),
            [a, b] => FactArgs::Binary(a, b),
            _ => return Err(unknown()),
        };
        self.index
            .get(&Fact {
                pred: pred.to_string(),
                args,
            })
            .copied()
            .ok_or_else(unknown)
    }

    /// Looks up a fact written as `pred(a,b)` or `pred(a)`.
    pub fn parse_fact(&self, text: &str) -> Result<FactId> {
        let text = text.trim();
        let bad = || Error::UnknownFact(text.to_string());
        let open = text.find('(').ok_or_else(bad)?;
        let inner = text[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let args: Vec<&str> = inner.split(',').map(str::trim).collect();
        self.fact_id(text[..open].trim(), &args)
    }

    pub fn display_fact(&self, fact: &Fact) -> String {
        match fact.args {
            FactArgs::Unary(a) => format!("{}({})", fact.pred, self.name(a)),
            FactArgs::Binary(a, b) => format!("{}({},{})", fact.pred, self.name(a), self.name(b)),
        }
    }

    pub fn fact_name(&self, id: FactId) -> String {
        self.display_fact(self.fact(id))
    }

    pub fn get_weight(&self, id: FactId) -> f64 {
        self.params[id.0]
    }

    /// Writes a weight, clamping negatives to zero. The entry stays in the
    /// support even when it becomes zero.
    pub fn set_weight(&mut self, id: FactId, weight: f64) {
        self.params[id.0] = weight.max(0.0);
    }

    pub fn weights(&self) -> &[f64] {
        &self.params
    }

    /// `M_p` or `M_p^T`. The virtual `any` relation is not materialized.
    pub fn matrix(&self, pred: &str, transposed: bool) -> Result<MatrixView<'_>> {
        match self.relations.get(pred) {
            Some(Relation::Binary(m)) => Ok(MatrixView {
                rows: if transposed { m.transposed_rows() } else { &m.rows },
                params: &self.params,
                dim: self.num_constants(),
            }),
            Some(Relation::Unary(_)) => Err(Error::Arity {
                pred: pred.to_string(),
                expected: 2,
                found: 1,
            }),
            None => Err(Error::UnknownPredicate(pred.to_string())),
        }
    }

    /// Facts of a unary relation as `(constant, fact)` pairs.
    pub fn unary_entries(&self, pred: &str) -> Result<&[(ConstId, FactId)]> {
        match self.relations.get(pred) {
            Some(Relation::Unary(entries)) => Ok(entries),
            Some(Relation::Binary(_)) => Err(Error::Arity {
                pred: pred.to_string(),
                expected: 1,
                found: 2,
            }),
            None => Err(Error::UnknownPredicate(pred.to_string())),
        }
    }

    /// `v_q` for a unary predicate. `assign_c` resolves to the one-hot vector
    /// of `c` unless a stored relation of that name exists.
    pub fn vector(&self, pred: &str) -> Result<SparseVector> {
        if !self.relations.contains_key(pred) {
            if let Some(c) = pred.strip_prefix(ASSIGN_PREFIX) {
                return self.one_hot(c);
            }
        }
        let entries = self.unary_entries(pred)?;
        Ok(SparseVector::from_pairs(
            self.num_constants(),
            entries.iter().map(|&(c, f)| (c, self.params[f.0])),
        ))
    }

    /// Whether a body predicate of the given arity can be evaluated against
    /// this store (stored, `any`, or an `assign_c` over an interned `c`).
    pub fn defines(&self, pred: &str, arity: usize) -> bool {
        match self.arity(pred) {
            Some(a) => a == arity,
            None => match arity {
                1 => pred
                    .strip_prefix(ASSIGN_PREFIX)
                    .is_some_and(|c| self.symbols.lookup(c).is_some()),
                2 => pred == ANY,
                _ => false,
            },
        }
    }

    /// Writes the facts file: one fact per line, weights with 17 significant
    /// digits so that reloading reproduces every weight exactly.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (id, fact) in self.facts() {
            let w = format_weight(self.get_weight(id));
            match fact.args {
                FactArgs::Unary(a) => {
                    out.push_str(&format!("{}\t{}\t{}\n", fact.pred, self.name(a), w))
                }
                FactArgs::Binary(a, b) => out.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    fact.pred,
                    self.name(a),
                    self.name(b),
                    w
                )),
            }
        }
        out
    }
}

impl fmt::Display for KnowledgeBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// Decimal rendering with 17 significant digits.
pub fn format_weight(w: f64) -> String {
    if w == 0.0 {
        return "0.0".to_string();
    }
    let exp = format!("{w:e}")
        .split('e')
        .nth(1)
        .and_then(|e| e.parse::<i32>().ok())
        .unwrap_or(0);
    if (-5..=16).contains(&exp) {
        let decimals = (16 - exp).max(1) as usize;
        format!("{w:.decimals$}")
    } else {
        format!("{w:.16e}")
    }
}

/// Parses a facts file: `pred TAB arg1 [TAB arg2] [TAB weight]`, `#` comments.
///
/// A three-column line is a weighted unary fact when its last column parses
/// as a number, otherwise an unweighted binary fact.
pub fn load_facts(text: &str) -> Result<KnowledgeBase> {
    let mut kb = KnowledgeBase::new();
    extend_facts(&mut kb, text)?;
    Ok(kb)
}

/// Loads more facts into an existing store, with the same rules as
/// [`load_facts`].
pub fn extend_facts(kb: &mut KnowledgeBase, text: &str) -> Result<()> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let cols: Vec<&str> = content.split('\t').map(str::trim).collect();
        let err = |message: String| Error::Facts { line, message };
        let (pred, args, weight) = match cols.as_slice() {
            [p, a] => (*p, vec![*a], None),
            [p, a, x] => match x.parse::<f64>() {
                Ok(w) => (*p, vec![*a], Some(w)),
                Err(_) => (*p, vec![*a, *x], None),
            },
            [p, a, b, w] => {
                let w = w
                    .parse::<f64>()
                    .map_err(|_| err(format!("cannot parse weight `{w}`")))?;
                (*p, vec![*a, *b], Some(w))
            }
            _ => {
                return Err(err(format!(
                    "expected 2 to 4 tab-separated columns, found {}",
                    cols.len()
                )))
            }
        };
        if pred.is_empty() || args.iter().any(|a| a.is_empty()) {
            return Err(err("empty predicate or argument".to_string()));
        }
        let weight = weight.unwrap_or(1.0);
        if !(weight > 0.0) {
            return Err(err(format!("weight must be positive, got {weight}")));
        }
        kb.add_fact(pred, &args, weight).map_err(|e| match e {
            Error::Invalid(m) => err(m),
            other => err(other.to_string()),
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIG1: &str = "child\tliam\teve\t0.99\n\
child\tdave\teve\t0.99\n\
child\tliam\tbob\t0.75\n\
husband\teve\tbob\t0.9\n\
infant\tliam\t0.7\n\
infant\tdave\t0.1\n\
aunt\tjoe\teve\t0.9\n\
brother\teve\tchip\t0.9\n";

    #[test]
    fn loads_family_facts() {
        let kb = load_facts(FIG1).unwrap();
        assert_eq!(kb.num_facts(), 8);
        assert_eq!(kb.num_constants(), 6);
        let liam = kb.id("liam").unwrap();
        let eve = kb.id("eve").unwrap();
        assert_eq!(kb.matrix("child", false).unwrap().get(liam, eve), 0.99);
        assert_eq!(kb.matrix("child", true).unwrap().get(eve, liam), 0.99);
        assert_eq!(kb.vector("infant").unwrap().get(liam), 0.7);
        assert_eq!(kb.arity("infant"), Some(1));
    }

    #[test]
    fn empty_file() {
        let kb = load_facts("# nothing here\n\n").unwrap();
        assert_eq!(kb.num_constants(), 0);
        assert_eq!(kb.predicates().count(), 0);
    }

    #[test]
    fn default_weight_is_one() {
        let kb = load_facts("edge\ta\tb\n").unwrap();
        assert_eq!(kb.get_weight(kb.parse_fact("edge(a,b)").unwrap()), 1.0);
    }

    #[test]
    fn rejects_duplicates_bad_weights_and_arity_conflicts() {
        let e = load_facts("p\ta\tb\np\ta\tb\n").unwrap_err();
        assert!(matches!(e, Error::Facts { line: 2, .. }), "{e}");
        assert!(load_facts("p\ta\tb\t0\n").is_err());
        assert!(load_facts("p\ta\tb\t-1\n").is_err());
        let e = load_facts("p\ta\tb\np\tc\n").unwrap_err();
        assert!(matches!(e, Error::Facts { line: 2, .. }), "{e}");
    }

    #[test]
    fn one_hot_and_unknown_constant() {
        let kb = load_facts(FIG1).unwrap();
        let joe = kb.one_hot("joe").unwrap();
        assert_eq!(joe.entries(), &[(kb.id("joe").unwrap(), 1.0)]);
        let liam = kb.one_hot("liam").unwrap();
        let eve = kb.one_hot("eve").unwrap();
        assert!(liam.hadamard(&eve).is_zero());
        assert!(matches!(kb.one_hot("nobody"), Err(Error::UnknownConstant(_))));
    }

    #[test]
    fn matrix_of_unary_is_an_arity_error() {
        let kb = load_facts(FIG1).unwrap();
        assert!(matches!(kb.matrix("infant", false), Err(Error::Arity { .. })));
        assert!(matches!(
            kb.matrix("cousin", false),
            Err(Error::UnknownPredicate(_))
        ));
    }

    #[test]
    fn weights_clamp_and_unknown_facts() {
        let mut kb = load_facts(FIG1).unwrap();
        let f = kb.parse_fact("child(liam,eve)").unwrap();
        assert_eq!(kb.get_weight(f), 0.99);
        kb.set_weight(f, -0.3);
        assert_eq!(kb.get_weight(f), 0.0);
        assert!(kb.parse_fact("uncle(liam,bob)").is_err());
    }

    #[test]
    fn assign_vectors_are_virtual() {
        let mut kb = load_facts(FIG1).unwrap();
        assert!(kb.vector("assign_tired").is_err());
        kb.intern("tired");
        let v = kb.vector("assign_tired").unwrap();
        assert_eq!(v.entries(), &[(kb.id("tired").unwrap(), 1.0)]);
    }

    #[test]
    fn vec_mul_matches_dense() {
        let kb = load_facts(FIG1).unwrap();
        let x = kb.one_hot("liam").unwrap().add(&kb.one_hot("dave").unwrap().scale(2.0));
        let y = kb.matrix("child", false).unwrap().vec_mul(&x);
        let eve = kb.id("eve").unwrap();
        let bob = kb.id("bob").unwrap();
        assert!((y.get(eve) - (0.99 + 2.0 * 0.99)).abs() < 1e-15);
        assert!((y.get(bob) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn format_weight_has_17_significant_digits() {
        assert_eq!(format_weight(0.99), "0.98999999999999999");
        assert_eq!(format_weight(1.0), "1.0000000000000000");
        for w in [0.1, 1.0 / 3.0, 12345.678, 1e-9, 7e20] {
            assert_eq!(format_weight(w).parse::<f64>().unwrap(), w);
        }
    }
}
