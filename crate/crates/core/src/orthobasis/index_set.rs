use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subset::{Subset, MAX_VARIABLES};

/// Default cap on index-set cardinality and tensor-rule size.
pub const DEFAULT_SIZE_CAP: u128 = 10_000_000;

/// Degrees of the univariate factors of one multivariate basis polynomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(degrees: Vec<u32>) -> Self {
        MultiIndex(degrees)
    }

    pub fn zeros(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    pub fn degrees(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// Sorted 1-based positions of the nonzero degrees.
    pub fn nz(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &k)| k > 0)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Variables the basis polynomial depends on.
    pub fn support(&self) -> Subset {
        let mut bits = 0u64;
        for (i, &k) in self.0.iter().enumerate() {
            if k > 0 {
                bits |= 1 << i;
            }
        }
        Subset::from_bits(bits)
    }

    /// Copy with the degrees of the positions in `s` kept and all others
    /// zeroed.
    pub fn restrict_to(&self, s: Subset) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .enumerate()
                .map(|(i, &k)| if s.contains(i) { k } else { 0 })
                .collect(),
        )
    }

    /// Copy with the degrees of the positions in `s` zeroed.
    pub fn zero_out(&self, s: Subset) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .enumerate()
                .map(|(i, &k)| if s.contains(i) { 0 } else { k })
                .collect(),
        )
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "order", rename_all = "snake_case")]
pub enum IndexScheme {
    TotalOrder(u32),
    TensorGrid(u32),
    Explicit,
}

/// Ordered collection of multi-indices defining a polynomial basis. The
/// first element is always the constant term.
///
/// Generated sets use graded lexicographic order: total degree ascending,
/// then degree vectors in descending lexicographic order, so `x1` precedes
/// `x2`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "IndexSetRepr", into = "IndexSetRepr")]
pub struct IndexSet {
    dim: usize,
    scheme: IndexScheme,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
}

impl PartialEq for IndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.scheme == other.scheme && self.indices == other.indices
    }
}

#[derive(Serialize, Deserialize)]
struct IndexSetRepr {
    dim: usize,
    scheme: IndexScheme,
    indices: Vec<MultiIndex>,
}

impl TryFrom<IndexSetRepr> for IndexSet {
    type Error = Error;

    fn try_from(r: IndexSetRepr) -> Result<Self> {
        let set = IndexSet::build(r.dim, r.scheme, r.indices)?;
        Ok(set)
    }
}

impl From<IndexSet> for IndexSetRepr {
    fn from(s: IndexSet) -> Self {
        IndexSetRepr { dim: s.dim, scheme: s.scheme, indices: s.indices }
    }
}

fn graded_lex(a: &MultiIndex, b: &MultiIndex) -> std::cmp::Ordering {
    a.total_degree().cmp(&b.total_degree()).then_with(|| b.0.cmp(&a.0))
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

impl IndexSet {
    pub fn new(scheme: IndexScheme, d: usize, cap: u128) -> Result<Self> {
        match scheme {
            IndexScheme::TotalOrder(p) => Self::total_order_capped(d, p, cap),
            IndexScheme::TensorGrid(p) => Self::tensor_grid_capped(d, p, cap),
            IndexScheme::Explicit => Err(Error::invalid("explicit index sets need their indices")),
        }
    }

    pub fn total_order(d: usize, p: u32) -> Result<Self> {
        Self::total_order_capped(d, p, DEFAULT_SIZE_CAP)
    }

    pub fn tensor_grid(d: usize, p: u32) -> Result<Self> {
        Self::tensor_grid_capped(d, p, DEFAULT_SIZE_CAP)
    }

    pub fn total_order_capped(d: usize, p: u32, cap: u128) -> Result<Self> {
        check_dim(d)?;
        let size = binomial(d as u128 + p as u128, p as u128);
        if size > cap {
            return Err(Error::CapExceeded { what: "total-order index set", size, cap });
        }
        let mut out = Vec::with_capacity(size as usize);
        let mut cur = vec![0u32; d];
        fill_total_order(&mut cur, 0, p, &mut out);
        Self::build(d, IndexScheme::TotalOrder(p), out)
    }

    pub fn tensor_grid_capped(d: usize, p: u32, cap: u128) -> Result<Self> {
        check_dim(d)?;
        let size = (p as u128 + 1).checked_pow(d as u32).unwrap_or(u128::MAX);
        if size > cap {
            return Err(Error::CapExceeded { what: "tensor-grid index set", size, cap });
        }
        let mut out = Vec::with_capacity(size as usize);
        let mut cur = vec![0u32; d];
        fill_tensor(&mut cur, 0, p, &mut out);
        Self::build(d, IndexScheme::TensorGrid(p), out)
    }

    /// Index set from an explicit list; the list is kept in the given order
    /// but must start with the zero multi-index and contain no duplicates.
    pub fn explicit(d: usize, indices: Vec<MultiIndex>) -> Result<Self> {
        check_dim(d)?;
        Self::build(d, IndexScheme::Explicit, indices)
    }

    fn build(d: usize, scheme: IndexScheme, mut indices: Vec<MultiIndex>) -> Result<Self> {
        if indices.iter().any(|m| m.dim() != d) {
            return Err(Error::invalid(format!("multi-indices must all have length {d}")));
        }
        if !matches!(scheme, IndexScheme::Explicit) {
            indices.sort_by(graded_lex);
        }
        match indices.first() {
            Some(first) if first.is_zero() => {}
            _ => return Err(Error::invalid("index set must start with the zero multi-index")),
        }
        let mut lookup = HashMap::with_capacity(indices.len());
        for (i, m) in indices.iter().enumerate() {
            if lookup.insert(m.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate multi-index {:?}", m.degrees())));
            }
        }
        Ok(IndexSet { dim: d, scheme, indices, lookup })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scheme(&self) -> IndexScheme {
        self.scheme
    }

    /// Cardinality `r`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.indices[i]
    }

    pub fn position(&self, m: &MultiIndex) -> Option<usize> {
        self.lookup.get(m).copied()
    }

    pub fn max_total_degree(&self) -> u32 {
        self.indices.iter().map(|m| m.total_degree()).max().unwrap_or(0)
    }

    /// Largest degree appearing in each dimension.
    pub fn max_degree_per_dim(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.dim];
        for m in &self.indices {
            for (o, &k) in out.iter_mut().zip(m.degrees()) {
                *o = (*o).max(k);
            }
        }
        out
    }

    /// Sub-basis made of the given positions, in the given order; position 0
    /// (the constant) is prepended when missing.
    pub fn select(&self, positions: &[usize]) -> Result<IndexSet> {
        let mut chosen = vec![MultiIndex::zeros(self.dim)];
        for &p in positions {
            if p >= self.len() {
                return Err(Error::invalid(format!("basis position {p} out of range")));
            }
            if p != 0 {
                chosen.push(self.indices[p].clone());
            }
        }
        IndexSet::explicit(self.dim, chosen)
    }

    /// Downward closure: every multi-index dominated by a member is a member.
    pub fn is_downward_closed(&self) -> bool {
        self.indices.iter().all(|m| {
            (0..self.dim).all(|j| {
                if m.0[j] == 0 {
                    return true;
                }
                let mut lower = m.0.clone();
                lower[j] -= 1;
                self.lookup.contains_key(&MultiIndex(lower))
            })
        })
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("index set dimension must be at least 1"));
    }
    if d > MAX_VARIABLES {
        return Err(Error::invalid(format!("at most {MAX_VARIABLES} variables are supported")));
    }
    Ok(())
}

fn fill_total_order(cur: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos == cur.len() {
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for k in 0..=remaining {
        cur[pos] = k;
        fill_total_order(cur, pos + 1, remaining - k, out);
    }
    cur[pos] = 0;
}

fn fill_tensor(cur: &mut Vec<u32>, pos: usize, p: u32, out: &mut Vec<MultiIndex>) {
    if pos == cur.len() {
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for k in 0..=p {
        cur[pos] = k;
        fill_tensor(cur, pos + 1, p, out);
    }
    cur[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nz_example() {
        let m = MultiIndex::new(vec![0, 1, 2, 0, 4]);
        assert_eq!(m.nz(), vec![2, 3, 5]);
        assert_eq!(m.support(), Subset::of(&[1, 2, 4]));
    }

    #[test]
    fn cardinalities_from_benchmarks() {
        for (d, p, r) in [(6, 3, 84), (6, 4, 210), (8, 3, 165), (7, 4, 330), (8, 4, 495), (7, 5, 792), (1, 0, 1)] {
            assert_eq!(IndexSet::total_order(d, p).unwrap().len(), r, "d={d} p={p}");
        }
    }

    #[test]
    fn graded_lexicographic_order() {
        let s = IndexSet::total_order(2, 2).unwrap();
        let got: Vec<Vec<u32>> = s.indices().iter().map(|m| m.degrees().to_vec()).collect();
        assert_eq!(got, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert!(s.is_downward_closed());
    }

    #[test]
    fn explicit_validation() {
        let z = MultiIndex::zeros(2);
        let a = MultiIndex::new(vec![1, 0]);
        assert!(IndexSet::explicit(2, vec![a.clone(), z.clone()]).is_err());
        assert!(IndexSet::explicit(2, vec![z.clone(), a.clone(), a.clone()]).is_err());
        assert!(IndexSet::explicit(2, vec![z.clone(), MultiIndex::new(vec![1])]).is_err());
        let ok = IndexSet::explicit(2, vec![z, a.clone()]).unwrap();
        assert_eq!(ok.position(&a), Some(1));
    }

    #[test]
    fn caps_are_enforced() {
        assert!(matches!(IndexSet::total_order_capped(10, 6, 1000), Err(Error::CapExceeded { .. })));
        assert!(IndexSet::tensor_grid(10, 9).is_err());
        assert!(IndexSet::total_order(0, 2).is_err());
    }

    #[test]
    fn serde_roundtrip_rebuilds_lookup() {
        let s = IndexSet::total_order(3, 2).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: IndexSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back.len(), s.len());
        assert_eq!(back.position(s.get(5)), Some(5));
    }
}
