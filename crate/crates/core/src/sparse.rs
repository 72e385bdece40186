//! Sparse vectors over the constant domain.
//!
//! Entries are kept sorted by id with no explicit zeros. Forward values are
//! always non-negative; the type itself does not enforce the sign so the same
//! representation can carry signed loss gradients.

use std::fmt;

/// Dense integer id of an interned constant.
pub type ConstId = u32;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(ConstId, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn one_hot(dim: usize, id: ConstId) -> Self {
        assert!((id as usize) < dim, "id {id} out of range for dim {dim}");
        Self {
            dim,
            entries: vec![(id, 1.0)],
        }
    }

    pub fn ones(dim: usize) -> Self {
        Self {
            dim,
            entries: (0..dim as ConstId).map(|i| (i, 1.0)).collect(),
        }
    }

    /// Builds a vector from unsorted `(id, value)` pairs; duplicates are summed
    /// and zeros dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (ConstId, f64)>) -> Self {
        let mut entries: Vec<(ConstId, f64)> = pairs.into_iter().collect();
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(ConstId, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            assert!((i as usize) < dim, "id {i} out of range for dim {dim}");
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        Self {
            dim,
            entries: merged,
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i as ConstId, *v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(ConstId, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (ConstId, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn get(&self, id: ConstId) -> f64 {
        match self.entries.binary_search_by_key(&id, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v.abs()).sum()
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }

    pub fn scale(&self, factor: f64) -> Self {
        if factor == 0.0 {
            return Self::zeros(self.dim);
        }
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, v)| (i, v * factor)).collect(),
        }
    }

    /// Entrywise product.
    pub fn hadamard(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut entries = Vec::with_capacity(self.nnz().min(other.nnz()));
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    let p = x * y;
                    if p != 0.0 {
                        entries.push((i, p));
                    }
                    a.next();
                    b.next();
                }
            }
        }
        Self {
            dim: self.dim,
            entries,
        }
    }

    /// Entrywise sum.
    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut entries = Vec::with_capacity(self.nnz() + other.nnz());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(i, x)), Some(&&(j, y))) => match i.cmp(&j) {
                    std::cmp::Ordering::Less => {
                        entries.push((i, x));
                        a.next();
                    }
                    std::cmp::Ordering::Greater => {
                        entries.push((j, y));
                        b.next();
                    }
                    std::cmp::Ordering::Equal => {
                        let s = x + y;
                        if s != 0.0 {
                            entries.push((i, s));
                        }
                        a.next();
                        b.next();
                    }
                },
                (Some(&&e), None) => {
                    entries.push(e);
                    a.next();
                }
                (None, Some(&&e)) => {
                    entries.push(e);
                    b.next();
                }
                (None, None) => break,
            }
        }
        Self {
            dim: self.dim,
            entries,
        }
    }

    /// Divides by the L1 norm; a zero vector stays zero.
    pub fn normalized(&self) -> Self {
        let z = self.l1_norm();
        if z > 0.0 {
            self.scale(1.0 / z)
        } else {
            Self::zeros(self.dim)
        }
    }

    /// Index of the largest entry, ties going to the lowest id. `None` for the
    /// zero vector.
    pub fn argmax(&self) -> Option<ConstId> {
        let mut best: Option<(ConstId, f64)> = None;
        for &(i, v) in &self.entries {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }
}

impl fmt::Display for SparseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, (i, v)) in self.entries.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{i}: {v}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_pairs_merges_and_drops_zeros() {
        let v = SparseVector::from_pairs(5, [(3, 1.0), (1, 2.0), (3, -1.0), (4, 0.5)]);
        assert_eq!(v.entries(), &[(1, 2.0), (4, 0.5)]);
    }

    #[test]
    fn hadamard_and_add() {
        let a = SparseVector::from_pairs(4, [(0, 2.0), (2, 3.0)]);
        let b = SparseVector::from_pairs(4, [(2, 4.0), (3, 1.0)]);
        assert_eq!(a.hadamard(&b).entries(), &[(2, 12.0)]);
        assert_eq!(a.add(&b).entries(), &[(0, 2.0), (2, 7.0), (3, 1.0)]);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let v = SparseVector::from_pairs(4, [(3, 1.0), (1, 1.0), (2, 0.5)]);
        assert_eq!(v.argmax(), Some(1));
        assert_eq!(SparseVector::zeros(3).argmax(), None);
    }

    #[test]
    fn normalized_zero_stays_zero() {
        assert!(SparseVector::zeros(3).normalized().is_zero());
        let v = SparseVector::from_pairs(3, [(0, 1.0), (2, 3.0)]).normalized();
        assert!((v.sum() - 1.0).abs() < 1e-15);
    }
}
