use std::fmt;

use serde::{Deserialize, Serialize};

/// A set of input variables, stored as a bitmask over 0-based positions.
///
/// At most 64 variables are supported. `Display` uses 1-based labels, e.g.
/// `{1,3}`, matching the usual notation for Sobol' indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Subset(u64);

pub const MAX_VARIABLES: usize = 64;

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn from_bits(bits: u64) -> Self {
        Subset(bits)
    }

    /// Builds a subset from 0-based variable positions.
    pub fn of(positions: &[usize]) -> Self {
        let mut bits = 0u64;
        for &p in positions {
            assert!(p < MAX_VARIABLES, "variable position {p} out of range");
            bits |= 1 << p;
        }
        Subset(bits)
    }

    /// Builds a subset from 1-based variable labels.
    pub fn of_labels(labels: &[usize]) -> Self {
        let positions: Vec<usize> = labels
            .iter()
            .map(|&l| {
                assert!(l >= 1, "variable labels are 1-based");
                l - 1
            })
            .collect();
        Self::of(&positions)
    }

    pub fn single(position: usize) -> Self {
        Self::of(&[position])
    }

    /// All variables `0..d`.
    pub fn full(d: usize) -> Self {
        assert!(d <= MAX_VARIABLES);
        if d == MAX_VARIABLES {
            Subset(u64::MAX)
        } else {
            Subset((1u64 << d) - 1)
        }
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, position: usize) -> bool {
        position < MAX_VARIABLES && self.0 & (1 << position) != 0
    }

    pub fn is_subset_of(self, other: Subset) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: Subset) -> Subset {
        Subset(self.0 | other.0)
    }

    pub fn intersection(self, other: Subset) -> Subset {
        Subset(self.0 & other.0)
    }

    pub fn without(self, position: usize) -> Subset {
        Subset(self.0 & !(1 << position))
    }

    /// Highest position + 1, or 0 for the empty set.
    pub fn span(self) -> usize {
        (64 - self.0.leading_zeros()) as usize
    }

    /// 0-based positions in increasing order.
    pub fn positions(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let p = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(p)
            }
        })
    }

    /// All subsets of `self`, including the empty set and `self`, in
    /// increasing order of their bit patterns.
    pub fn subsets(self) -> impl Iterator<Item = Subset> {
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full { None } else { Some((cur.wrapping_sub(full)) & full) };
            Some(Subset(cur))
        })
    }

    /// Every non-empty subset of `0..d`, ordered by size then
    /// lexicographically.
    pub fn all_nonempty(d: usize) -> Vec<Subset> {
        let mut all: Vec<Subset> = Subset::full(d).subsets().filter(|s| !s.is_empty()).collect();
        all.sort_by_key(|s| (s.len(), s.positions().collect::<Vec<_>>()));
        all
    }

    /// Label using the supplied variable names, e.g. `r_w,K_w`.
    pub fn label_with(self, names: &[String]) -> String {
        self.positions()
            .map(|p| names.get(p).cloned().unwrap_or_else(|| format!("x{}", p + 1)))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, p) in self.positions().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", p + 1)?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_enumerates_power_set() {
        let s = Subset::of(&[0, 2, 5]);
        let all: Vec<_> = s.subsets().collect();
        assert_eq!(all.len(), 8);
        assert!(all.iter().all(|t| t.is_subset_of(s)));
        assert_eq!(all[0], Subset::EMPTY);
        assert_eq!(*all.last().unwrap(), s);
    }

    #[test]
    fn display_is_one_based() {
        assert_eq!(Subset::of(&[0, 2]).to_string(), "{1,3}");
        assert_eq!(Subset::of_labels(&[2, 4]), Subset::of(&[1, 3]));
    }

    #[test]
    fn all_nonempty_is_graded() {
        let all = Subset::all_nonempty(3);
        assert_eq!(all.len(), 7);
        assert_eq!(all[0], Subset::of(&[0]));
        assert_eq!(all[3], Subset::of(&[0, 1]));
        assert_eq!(all[6], Subset::full(3));
    }
}
