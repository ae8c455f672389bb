use std::collections::{BTreeMap, BTreeSet};

use super::SparsityError;

/// Jacobian support `F` as a set of `(row, col)` pairs, 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportPattern {
    dim: usize,
    entries: BTreeSet<(usize, usize)>,
}

impl SupportPattern {
    pub fn new(
        dim: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, SparsityError> {
        let mut entries = BTreeSet::new();
        for (row, col) in pairs {
            if row >= dim || col >= dim {
                return Err(SparsityError::IndexOutOfRange { row, col, dim });
            }
            entries.insert((row, col));
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            entries: (0..dim).map(|i| (i, i)).collect(),
        }
    }

    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            entries: (0..dim).flat_map(|r| (0..dim).map(move |c| (r, c))).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.entries.contains(&(row, col))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.iter().copied()
    }

    /// `F_{i,:}` for every row.
    pub fn row_supports(&self) -> Vec<BTreeSet<usize>> {
        let mut rows = vec![BTreeSet::new(); self.dim];
        for &(r, c) in &self.entries {
            rows[r].insert(c);
        }
        rows
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuralReport {
    pub satisfied: bool,
    /// For each column `k`, the rows `C_k = {i : k in F_i}` used as witness.
    pub witnesses: BTreeMap<usize, Vec<usize>>,
    /// Columns that fail, with the intersection that was found instead of
    /// `{k}` (empty when no row touches `k`).
    pub failures: BTreeMap<usize, Vec<usize>>,
}

/// For each column `k`, intersects the supports of every row containing `k`.
///
/// The set of all such rows gives the smallest possible intersection, so if
/// it does not reduce to `{k}` no subset does.
pub fn check_structural_sparsity(pattern: &SupportPattern) -> StructuralReport {
    let rows = pattern.row_supports();
    let mut witnesses = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for k in 0..pattern.dim {
        let candidates: Vec<usize> = (0..pattern.dim).filter(|&i| rows[i].contains(&k)).collect();
        if candidates.is_empty() {
            failures.insert(k, Vec::new());
            continue;
        }
        let mut inter = rows[candidates[0]].clone();
        for &i in &candidates[1..] {
            inter = inter.intersection(&rows[i]).copied().collect();
        }
        if inter.len() == 1 && inter.contains(&k) {
            witnesses.insert(k, candidates);
        } else {
            failures.insert(k, inter.into_iter().collect());
        }
    }
    StructuralReport {
        satisfied: failures.is_empty(),
        witnesses,
        failures,
    }
}
