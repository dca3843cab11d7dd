//! Multi-indices, orthonormal Legendre polynomials under `dy/2` on `[-1, 1]`,
//! the coupling matrices `G_m` and the detail index set.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Finitely supported multi-index, stored as sorted `(m, ν_m)` pairs with
/// `m ≥ 1` and `ν_m ≥ 1`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<(u32, u32)>);

impl MultiIndex {
    pub fn zero() -> Self {
        MultiIndex(Vec::new())
    }

    /// `ε_m`.
    pub fn unit(m: usize) -> Self {
        assert!(m >= 1, "parameters are numbered from 1");
        MultiIndex(vec![(m as u32, 1)])
    }

    /// Builds an index from dense entries `ν_1, ν_2, ...`.
    pub fn from_dense(entries: &[u32]) -> Self {
        MultiIndex(
            entries
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(i, &k)| (i as u32 + 1, k))
                .collect(),
        )
    }

    pub fn get(&self, m: usize) -> u32 {
        match self.0.binary_search_by_key(&(m as u32), |p| p.0) {
            Ok(i) => self.0[i].1,
            Err(_) => 0,
        }
    }

    /// Total degree `|ν| = sum_m ν_m`.
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|p| p.1).sum()
    }

    pub fn max_entry(&self) -> u32 {
        self.0.iter().map(|p| p.1).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|p| p.0 as usize)
    }

    /// Largest active parameter, 0 for the zero index.
    pub fn max_parameter(&self) -> usize {
        self.0.last().map_or(0, |p| p.0 as usize)
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.0
    }

    /// `ν + ε_m`.
    pub fn raised(&self, m: usize) -> Self {
        let mut v = self.0.clone();
        match v.binary_search_by_key(&(m as u32), |p| p.0) {
            Ok(i) => v[i].1 += 1,
            Err(i) => v.insert(i, (m as u32, 1)),
        }
        MultiIndex(v)
    }

    /// `ν − ε_m`, or `None` if `ν_m = 0`.
    pub fn lowered(&self, m: usize) -> Option<Self> {
        let mut v = self.0.clone();
        let i = v.binary_search_by_key(&(m as u32), |p| p.0).ok()?;
        if v[i].1 == 1 {
            v.remove(i);
        } else {
            v[i].1 -= 1;
        }
        Some(MultiIndex(v))
    }

    /// The unique `(m, β)` with `[G_m]_{νμ} = β ≠ 0`, if any.
    ///
    /// `ν = μ` couples through `m = 0` only; `ν = μ ± ε_m` couples through `m`
    /// with weight `β_{min(ν_m, μ_m)}`.
    pub fn coupling(&self, other: &MultiIndex, table: &RecurrenceTable) -> Option<(usize, f64)> {
        if self == other {
            return Some((0, 1.0));
        }
        let diff = self.single_difference(other)?;
        let n = self.get(diff).min(other.get(diff)) as usize;
        Some((diff, table.beta(n)))
    }

    /// `m` if the two indices differ by exactly `±ε_m`.
    pub fn single_difference(&self, other: &MultiIndex) -> Option<usize> {
        if self.degree().abs_diff(other.degree()) != 1 {
            return None;
        }
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        let mut found = None;
        while i < a.len() || j < b.len() {
            let (ma, mb) = (a.get(i).map_or(u32::MAX, |p| p.0), b.get(j).map_or(u32::MAX, |p| p.0));
            let (m, da, db) = match ma.cmp(&mb) {
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                    (ma, a[i - 1].1, b[j - 1].1)
                }
                Ordering::Less => {
                    i += 1;
                    (ma, a[i - 1].1, 0)
                }
                Ordering::Greater => {
                    j += 1;
                    (mb, 0, b[j - 1].1)
                }
            };
            if da != db {
                if da.abs_diff(db) != 1 || found.is_some() {
                    return None;
                }
                found = Some(m as usize);
            }
        }
        found
    }

    /// Dense form padded to `width` entries.
    pub fn display_padded(&self, width: usize) -> String {
        let width = width.max(self.max_parameter()).max(1);
        let entries: Vec<String> = (1..=width).map(|m| self.get(m).to_string()).collect();
        format!("({})", entries.join(" "))
    }
}

impl Ord for MultiIndex {
    /// Graded: total degree first, then lexicographic on the `(m, ν_m)` pairs.
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_padded(0))
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    /// Parses the dense form `(1 0 2)`.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("multi-index '{s}' must be parenthesised")))?;
        let entries: Vec<u32> = inner
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("multi-index '{s}' has a non-integer entry")))?;
        Ok(MultiIndex::from_dense(&entries))
    }
}

/// Ordered set of distinct multi-indices with position lookup.
#[derive(Clone, Debug, Default)]
pub struct IndexSet {
    indices: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
}

impl PartialEq for IndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.indices == other.indices
    }
}

impl IndexSet {
    /// Sorted, deduplicated set built from arbitrary indices.
    pub fn new(mut indices: Vec<MultiIndex>) -> Self {
        indices.sort();
        indices.dedup();
        let position = indices.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
        IndexSet { indices, position }
    }

    /// `{0}`.
    pub fn initial() -> Self {
        Self::new(vec![MultiIndex::zero()])
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, nu: &MultiIndex) -> bool {
        self.position.contains_key(nu)
    }

    pub fn position(&self, nu: &MultiIndex) -> Option<usize> {
        self.position.get(nu).copied()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    pub fn as_slice(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.indices[i]
    }

    /// `supp(P)`: all active parameters.
    pub fn support(&self) -> BTreeSet<usize> {
        self.indices.iter().flat_map(|nu| nu.support()).collect()
    }

    /// `M_P = #supp(P)`.
    pub fn n_active_parameters(&self) -> usize {
        self.support().len()
    }

    /// `deg P = max_ν |ν|`.
    pub fn degree(&self) -> u32 {
        self.indices.iter().map(MultiIndex::degree).max().unwrap_or(0)
    }

    pub fn max_entry(&self) -> u32 {
        self.indices.iter().map(MultiIndex::max_entry).max().unwrap_or(0)
    }

    /// Union with `extra`.
    pub fn extended<'a>(&self, extra: impl IntoIterator<Item = &'a MultiIndex>) -> IndexSet {
        let mut all = self.indices.clone();
        all.extend(extra.into_iter().cloned());
        IndexSet::new(all)
    }
}

impl<'a> IntoIterator for &'a IndexSet {
    type Item = &'a MultiIndex;
    type IntoIter = std::slice::Iter<'a, MultiIndex>;

    fn into_iter(self) -> Self::IntoIter {
        self.indices.iter()
    }
}

/// `Q`: all `ν ± ε_m ∉ P` with `ν ∈ P` and `m ≤ M_P + M̄` (and `m ≤ max_parameters`).
pub fn detail_set(p: &IndexSet, m_bar: usize, max_parameters: Option<usize>) -> IndexSet {
    let mut m_top = p.n_active_parameters() + m_bar;
    if let Some(cap) = max_parameters {
        m_top = m_top.min(cap);
    }
    let mut q = Vec::new();
    for nu in p {
        for m in 1..=m_top {
            let up = nu.raised(m);
            if !p.contains(&up) {
                q.push(up);
            }
            if let Some(down) = nu.lowered(m) {
                if !p.contains(&down) {
                    q.push(down);
                }
            }
        }
    }
    IndexSet::new(q)
}

/// Recurrence coefficients `β_n` of the orthonormal Legendre polynomials
/// under `dy/2`, with `β_n P_{n+1}(y) = y P_n(y) − β_{n−1} P_{n−1}(y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrenceTable {
    beta: Vec<f64>,
}

impl RecurrenceTable {
    pub fn new(n_max: usize) -> Self {
        RecurrenceTable {
            beta: (0..=n_max)
                .map(|n| {
                    let n = n as f64;
                    (n + 1.0) / ((2.0 * n + 1.0) * (2.0 * n + 3.0)).sqrt()
                })
                .collect(),
        }
    }

    pub fn n_max(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn beta(&self, n: usize) -> f64 {
        self.beta[n]
    }

    /// `P_0(y), ..., P_{n}(y)`, requires `n ≤ n_max + 1`.
    pub fn evaluate(&self, n: usize, y: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(n + 1);
        p.push(1.0);
        if n >= 1 {
            p.push(y / self.beta[0]);
        }
        for k in 1..n {
            p.push((y * p[k] - self.beta[k - 1] * p[k - 1]) / self.beta[k]);
        }
        p
    }
}

/// `[G_m]_{νμ}` for `ν` in `rows`, `μ` in `cols`.
pub fn build_g(m: usize, rows: &IndexSet, cols: &IndexSet, table: &RecurrenceTable) -> Result<SparseMatrix> {
    for nu in rows.iter().chain(cols.iter()) {
        if nu.max_entry() as usize > table.n_max() {
            return Err(Error::DegreeExceedsTable {
                degree: nu.max_entry() as usize,
                n_max: table.n_max(),
            });
        }
    }
    let mut t = Vec::new();
    for (j, mu) in cols.iter().enumerate() {
        if m == 0 {
            if let Some(i) = rows.position(mu) {
                t.push((i as u32, j as u32, 1.0));
            }
            continue;
        }
        if let Some(i) = rows.position(&mu.raised(m)) {
            t.push((i as u32, j as u32, table.beta(mu.get(m) as usize)));
        }
        if let Some(i) = mu.lowered(m).and_then(|down| rows.position(&down)) {
            t.push((i as u32, j as u32, table.beta(mu.get(m) as usize - 1)));
        }
    }
    Ok(SparseMatrix::from_triplets(rows.len(), cols.len(), t))
}
