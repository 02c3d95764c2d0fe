//! Skewness sensitivity indices: the third central moment of a full-space
//! surrogate split by the variable subset owning each triple product of
//! basis terms.
//!
//! Two evaluation routes share the same definitions. [`SkewnessWorkspace`]
//! stores the weighted evaluation matrix on a tensor Gauss rule and forms
//! every expectation as a weighted dot product; it is meant for small bases.
//! [`SkewnessIndices`] factorizes each expectation into per-dimension triple
//! products of univariate polynomials, which is exact and scales to the
//! benchmark bases.

use std::collections::{BTreeMap, HashMap};

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::orthobasis::{gauss_rule_std, tensor_rule_capped, BasisEvaluator, MarginalFamily};
use crate::pce::Surrogate;
use crate::report::{ReportKind, ReportMetadata, SensitivityReport};
use crate::subset::Subset;

/// Outputs with `|gamma|` below this are treated as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Largest basis handled by the triple sums.
pub const DEFAULT_MAX_TERMS: usize = 2000;
/// Largest `points x terms` product for which the third moment is also
/// integrated directly on a tensor rule.
pub const QUADRATURE_WORK_CAP: u128 = 500_000_000;

/// Tensor level (points per dimension minus one) integrating triple
/// products of degree-`p` polynomials exactly.
pub fn required_level(p: u32) -> usize {
    (3 * p as usize).saturating_sub(1).div_ceil(2)
}

fn require_full_space(s: &Surrogate) -> Result<()> {
    if s.subspace().is_some() {
        return Err(Error::invalid("skewness indices need a full-space surrogate; lift the ridge coefficients first"));
    }
    if s.index_set().len() > DEFAULT_MAX_TERMS {
        return Err(Error::CapExceeded {
            what: "skewness basis size",
            size: s.index_set().len() as u128,
            cap: DEFAULT_MAX_TERMS as u128,
        });
    }
    Ok(())
}

/// Weighted evaluation matrix of a surrogate on a tensor Gauss rule.
#[derive(Clone, Debug)]
pub struct SkewnessWorkspace {
    ew: DMatrix<f64>,
    weights: Vec<f64>,
    f_tilde: Vec<f64>,
    supports: Vec<Subset>,
    mean: f64,
    sigma: f64,
    mu3: f64,
    gamma: f64,
    dim: usize,
}

impl SkewnessWorkspace {
    /// Builds the workspace on the `(level + 1)^d`-point tensor rule.
    pub fn build(s: &Surrogate, level: usize) -> Result<Self> {
        require_full_space(s)?;
        let needed = s.index_set().max_degree_per_dim().into_iter().map(required_level).max().unwrap_or(0);
        if level < needed {
            return Err(Error::QuadratureTooCoarse { points: level + 1, needed: needed + 1 });
        }
        let rule = tensor_rule_capped(s.families(), level, 2_000_000)?;
        let a = BasisEvaluator::new(s.families(), s.index_set())?.design(rule.points())?;
        let mut ew = a.transpose();
        for (i, c) in s.coefficients().iter().enumerate() {
            ew.row_mut(i).scale_mut(*c);
        }
        let f_tilde: Vec<f64> = ew.row_sum().iter().copied().collect();
        let weights = rule.weights().to_vec();
        let mean = s.mean();
        let sigma = s.variance();
        let mu3: f64 = f_tilde.iter().zip(&weights).map(|(f, w)| (f - mean).powi(3) * w).sum();
        let gamma = if sigma > 0.0 { mu3 / sigma.powf(1.5) } else { 0.0 };
        let supports = s.index_set().indices().iter().map(|m| m.support()).collect();
        Ok(SkewnessWorkspace { ew, weights, f_tilde, supports, mean, sigma, mu3, gamma, dim: s.input_dim() })
    }

    pub fn weighted_evaluations(&self) -> &DMatrix<f64> {
        &self.ew
    }

    pub fn f_tilde(&self) -> &[f64] {
        &self.f_tilde
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Centered third moment of the surrogate.
    pub fn mu3(&self) -> f64 {
        self.mu3
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn check(&self, s: Subset) -> Result<()> {
        if s.is_empty() || s.span() > self.dim {
            return Err(Error::invalid(format!("subset {s} is not a nonempty subset of 1..={}", self.dim)));
        }
        if self.gamma.abs() < SYMMETRY_TOL || !self.gamma.is_finite() {
            return Err(Error::SymmetricOutput { gamma: self.gamma });
        }
        Ok(())
    }

    fn triple(&self, a: usize, b: usize, c: usize) -> f64 {
        let (ra, rb, rc) = (self.ew.row(a), self.ew.row(b), self.ew.row(c));
        (0..self.weights.len()).map(|q| ra[q] * rb[q] * rc[q] * self.weights[q]).sum()
    }

    /// Skewness index of `s`, skipping terms that vanish analytically: only
    /// non-constant terms supported inside `s` are scanned, and a triple
    /// is skipped when some dimension occurs in exactly one factor.
    pub fn skewness_index(&self, s: Subset) -> Result<f64> {
        self.check(s)?;
        let valid: Vec<usize> =
            (0..self.supports.len()).filter(|&a| !self.supports[a].is_empty() && self.supports[a].is_subset_of(s)).collect();
        let mut r1 = 0.0;
        for &a in &valid {
            if self.supports[a] == s {
                r1 += self.triple(a, a, a);
            }
        }
        let mut r2 = 0.0;
        for &a in &valid {
            for &b in &valid {
                // a dimension of b missing from a appears once
                if a == b || !self.supports[b].is_subset_of(self.supports[a]) || self.supports[a] != s {
                    continue;
                }
                r2 += 3.0 * self.triple(a, a, b);
            }
        }
        let r3: f64 = valid
            .par_iter()
            .enumerate()
            .map(|(ia, &a)| {
                let mut acc = 0.0;
                for (ib, &b) in valid.iter().enumerate().skip(ia + 1) {
                    let (sa, sb) = (self.supports[a], self.supports[b]);
                    for &c in &valid[ib + 1..] {
                        let sc = self.supports[c];
                        let once = Subset::from_bits((sa.bits() ^ sb.bits() ^ sc.bits()) & !(sa.bits() & sb.bits() & sc.bits()));
                        if !once.is_empty() || sa.union(sb).union(sc) != s {
                            continue;
                        }
                        acc += 6.0 * self.triple(a, b, c);
                    }
                }
                acc
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        Ok((r1 + r2 + r3) / self.mu3)
    }

    /// Same sums without any pruning: every non-constant pair and triple is
    /// integrated and kept when the union of its supports equals `s`.
    pub fn skewness_index_unpruned(&self, s: Subset) -> Result<f64> {
        self.check(s)?;
        let r = self.supports.len();
        let nz: Vec<usize> = (0..r).filter(|&a| !self.supports[a].is_empty()).collect();
        let mut acc = 0.0;
        for &a in &nz {
            if self.supports[a] == s {
                acc += self.triple(a, a, a);
            }
            for &b in &nz {
                if a != b && self.supports[a].union(self.supports[b]) == s {
                    acc += 3.0 * self.triple(a, a, b);
                }
            }
        }
        for (ia, &a) in nz.iter().enumerate() {
            for (ib, &b) in nz.iter().enumerate().skip(ia + 1) {
                for &c in &nz[ib + 1..] {
                    if self.supports[a].union(self.supports[b]).union(self.supports[c]) == s {
                        acc += 6.0 * self.triple(a, b, c);
                    }
                }
            }
        }
        Ok(acc / self.mu3)
    }

    pub fn total_skewness(&self, i: usize) -> Result<f64> {
        if i >= self.dim {
            return Err(Error::invalid(format!("variable {} out of range 1..={}", i + 1, self.dim)));
        }
        let mut total = 0.0;
        for s in Subset::all_nonempty(self.dim) {
            if s.contains(i) {
                total += self.skewness_index(s)?;
            }
        }
        Ok(total)
    }
}

/// `E[psi_a psi_b psi_c]` for one univariate family, `a, b, c <= p`.
struct TripleTable {
    p: usize,
    values: Vec<f64>,
}

impl TripleTable {
    fn new(family: &MarginalFamily, p: usize) -> Result<Self> {
        let n = (3 * p + 2) / 2;
        let (nodes, weights) = gauss_rule_std(family, n.max(1))?;
        let mut psi = vec![0.0; p + 1];
        let m = p + 1;
        let mut values = vec![0.0; m * m * m];
        for (z, w) in nodes.iter().zip(&weights) {
            family.eval_all_std(*z, &mut psi);
            for a in 0..m {
                for b in 0..m {
                    let ab = w * psi[a] * psi[b];
                    for c in 0..m {
                        values[(a * m + b) * m + c] += ab * psi[c];
                    }
                }
            }
        }
        // parity and the triangle rule make many entries exactly zero
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    if (a + b + c) % 2 == 1 || a > b + c || b > a + c || c > a + b {
                        values[(a * m + b) * m + c] = 0.0;
                    }
                }
            }
        }
        Ok(TripleTable { p, values })
    }

    #[inline]
    fn get(&self, a: u32, b: u32, c: u32) -> f64 {
        let m = self.p + 1;
        self.values[(a as usize * m + b as usize) * m + c as usize]
    }
}

/// All skewness indices of a full-space surrogate.
#[derive(Clone, Debug)]
pub struct SkewnessIndices {
    dim: usize,
    /// Unnormalized third-moment contribution of each subset.
    parts: BTreeMap<u64, f64>,
    mean: f64,
    sigma: f64,
    mu3: f64,
    gamma: f64,
    /// Third moment integrated on a tensor rule, when affordable.
    mu3_quadrature: Option<f64>,
}

impl SkewnessIndices {
    pub fn compute(s: &Surrogate) -> Result<Self> {
        Self::compute_with(s, true)
    }

    /// `pruned = false` visits every ordered-unique triple and integrates it,
    /// including those that vanish analytically.
    pub fn compute_with(s: &Surrogate, pruned: bool) -> Result<Self> {
        require_full_space(s)?;
        let dim = s.input_dim();
        let maxdeg = s.index_set().max_degree_per_dim();
        let tables =
            s.families().iter().zip(&maxdeg).map(|(f, &p)| TripleTable::new(f, p as usize)).collect::<Result<Vec<_>>>()?;
        let terms: Vec<(Subset, &[u32], f64)> = s
            .index_set()
            .indices()
            .iter()
            .zip(s.coefficients().iter())
            .filter(|(m, c)| !m.is_zero() && **c != 0.0)
            .map(|(m, c)| (m.support(), m.degrees(), *c))
            .collect();
        let parts = if pruned { pruned_parts(&terms, &tables) } else { unpruned_parts(&terms, &tables) };
        let mu3_sum: f64 = parts.values().sum();
        let sigma = s.variance();
        let mean = s.mean();
        let mu3_quadrature = quadrature_mu3(s, &maxdeg)?;
        let mu3 = mu3_quadrature.unwrap_or(mu3_sum);
        let gamma = if sigma > 0.0 { mu3 / sigma.powf(1.5) } else { 0.0 };
        Ok(SkewnessIndices { dim, parts, mean, sigma, mu3, gamma, mu3_quadrature })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mu3(&self) -> f64 {
        self.mu3
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu3_quadrature(&self) -> Option<f64> {
        self.mu3_quadrature
    }

    pub fn is_symmetric(&self) -> bool {
        !(self.gamma.abs() >= SYMMETRY_TOL)
    }

    fn check(&self) -> Result<()> {
        if self.is_symmetric() {
            return Err(Error::SymmetricOutput { gamma: self.gamma });
        }
        Ok(())
    }

    pub fn index(&self, s: Subset) -> Result<f64> {
        self.check()?;
        if s.is_empty() || s.span() > self.dim {
            return Err(Error::invalid(format!("subset {s} is not a nonempty subset of 1..={}", self.dim)));
        }
        Ok(self.parts.get(&s.bits()).copied().unwrap_or(0.0) / self.mu3)
    }

    pub fn total(&self, i: usize) -> Result<f64> {
        self.check()?;
        if i >= self.dim {
            return Err(Error::invalid(format!("variable {} out of range 1..={}", i + 1, self.dim)));
        }
        Ok(self.parts.iter().filter(|(b, _)| (*b >> i) & 1 == 1).map(|(_, v)| v).sum::<f64>() / self.mu3)
    }

    /// Every subset with a nonzero contribution, sorted by size then
    /// position.
    pub fn entries(&self) -> Result<Vec<(Subset, f64)>> {
        self.check()?;
        let mut out: Vec<(Subset, f64)> =
            self.parts.iter().map(|(b, v)| (Subset::from_bits(*b), v / self.mu3)).collect();
        out.sort_by_key(|(s, _)| (s.len(), s.positions().collect::<Vec<_>>()));
        Ok(out)
    }

    pub fn sum(&self) -> Result<f64> {
        Ok(self.entries()?.iter().map(|(_, v)| v).sum())
    }

    pub fn report(&self, metadata: ReportMetadata) -> Result<SensitivityReport> {
        let mut r = SensitivityReport::new(ReportKind::Skewness, metadata);
        for (s, v) in self.entries()? {
            r.push(s, v);
        }
        Ok(r)
    }

    pub fn total_report(&self, metadata: ReportMetadata) -> Result<SensitivityReport> {
        let mut r = SensitivityReport::new(ReportKind::TotalSkewness, metadata);
        for i in 0..self.dim {
            r.push(Subset::single(i), self.total(i)?);
        }
        Ok(r)
    }
}

fn product(tables: &[TripleTable], u: Subset, a: &[u32], b: &[u32], c: &[u32]) -> f64 {
    let mut e = 1.0;
    for k in u.positions() {
        e *= tables[k].get(a[k], b[k], c[k]);
        if e == 0.0 {
            break;
        }
    }
    e
}

fn merge(partials: Vec<HashMap<u64, f64>>) -> BTreeMap<u64, f64> {
    // summed in a fixed order so results do not depend on scheduling
    let mut out = BTreeMap::new();
    for p in partials {
        let mut keys: Vec<(u64, f64)> = p.into_iter().collect();
        keys.sort_by_key(|(k, _)| *k);
        for (k, v) in keys {
            *out.entry(k).or_insert(0.0) += v;
        }
    }
    out
}

fn multiplicity(a: usize, b: usize, c: usize) -> f64 {
    if a == b && b == c {
        1.0
    } else if a == b || b == c {
        3.0
    } else {
        6.0
    }
}

/// Sums over `a <= b <= c` where every dimension of the union occurs in at
/// least two factors: given `a` and `b`, the support of `c` must contain
/// their symmetric difference and lie inside their union.
fn pruned_parts(terms: &[(Subset, &[u32], f64)], tables: &[TripleTable]) -> BTreeMap<u64, f64> {
    let mut by_support: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, t) in terms.iter().enumerate() {
        by_support.entry(t.0.bits()).or_default().push(i);
    }
    let partials: Vec<HashMap<u64, f64>> = (0..terms.len())
        .into_par_iter()
        .map(|a| {
            let mut acc: HashMap<u64, f64> = HashMap::new();
            let (sa, da, ca) = terms[a];
            for b in a..terms.len() {
                let (sb, db, cb) = terms[b];
                let must = sa.bits() ^ sb.bits();
                let both = Subset::from_bits(sa.bits() & sb.bits());
                let union = sa.union(sb);
                for extra in both.subsets() {
                    let sc = must | extra.bits();
                    if sc == 0 {
                        continue;
                    }
                    let Some(group) = by_support.get(&sc) else { continue };
                    let start = group.partition_point(|&c| c < b);
                    for &c in &group[start..] {
                        let (_, dc, cc) = terms[c];
                        let e = product(tables, union, da, db, dc);
                        if e != 0.0 {
                            *acc.entry(union.bits()).or_insert(0.0) += multiplicity(a, b, c) * ca * cb * cc * e;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    merge(partials)
}

fn unpruned_parts(terms: &[(Subset, &[u32], f64)], tables: &[TripleTable]) -> BTreeMap<u64, f64> {
    let partials: Vec<HashMap<u64, f64>> = (0..terms.len())
        .into_par_iter()
        .map(|a| {
            let mut acc: HashMap<u64, f64> = HashMap::new();
            let (sa, da, ca) = terms[a];
            for b in a..terms.len() {
                let (sb, db, cb) = terms[b];
                for c in b..terms.len() {
                    let (sc, dc, cc) = terms[c];
                    let union = sa.union(sb).union(sc);
                    let e = product(tables, union, da, db, dc);
                    *acc.entry(union.bits()).or_insert(0.0) += multiplicity(a, b, c) * ca * cb * cc * e;
                }
            }
            acc
        })
        .collect();
    merge(partials)
}

/// Centered third moment of the surrogate on an exact tensor Gauss rule,
/// evaluated point by point without storing the grid. `None` when the work
/// exceeds [`QUADRATURE_WORK_CAP`].
fn quadrature_mu3(s: &Surrogate, maxdeg: &[u32]) -> Result<Option<f64>> {
    let fams = s.families();
    let npts: Vec<usize> = maxdeg.iter().map(|&p| required_level(p) + 1).collect();
    let total: u128 = npts.iter().map(|&n| n as u128).product();
    let r = s.index_set().len();
    if total * r as u128 > QUADRATURE_WORK_CAP {
        info!("third moment taken from the triple sums; tensor rule of {total} points is too large");
        return Ok(None);
    }
    let mut rules = Vec::with_capacity(fams.len());
    for (f, (&n, &p)) in fams.iter().zip(npts.iter().zip(maxdeg)) {
        let (nodes, weights) = gauss_rule_std(f, n)?;
        let mut psi = vec![vec![0.0; p as usize + 1]; n];
        for (row, z) in psi.iter_mut().zip(&nodes) {
            f.eval_all_std(*z, row);
        }
        rules.push((psi, weights));
    }
    let terms: Vec<(Vec<(usize, usize)>, f64)> = s
        .index_set()
        .indices()
        .iter()
        .zip(s.coefficients().iter())
        .map(|(m, c)| {
            let nz = m.degrees().iter().enumerate().filter(|(_, &k)| k > 0).map(|(j, &k)| (j, k as usize)).collect();
            (nz, *c)
        })
        .collect();
    let mean = s.mean();
    let d = fams.len();
    let total = total as usize;
    const CHUNK: usize = 4096;
    let partial: Vec<f64> = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut idx = vec![0usize; d];
            let mut acc = 0.0;
            for q in chunk * CHUNK..((chunk + 1) * CHUNK).min(total) {
                let mut rem = q;
                let mut w = 1.0;
                for k in (0..d).rev() {
                    idx[k] = rem % npts[k];
                    rem /= npts[k];
                    w *= rules[k].1[idx[k]];
                }
                let f: f64 = terms
                    .iter()
                    .map(|(nz, c)| c * nz.iter().fold(1.0, |acc, &(j, k)| acc * rules[j].0[idx[j]][k]))
                    .sum();
                acc += w * (f - mean).powi(3);
            }
            acc
        })
        .collect();
    Ok(Some(partial.iter().sum()))
}

/// Skewness index of `s` from the factorized route.
pub fn skewness_index(surrogate: &Surrogate, s: Subset) -> Result<f64> {
    SkewnessIndices::compute(surrogate)?.index(s)
}

/// Total skewness index of the variable at 0-based position `i`.
pub fn total_skewness(surrogate: &Surrogate, i: usize) -> Result<f64> {
    SkewnessIndices::compute(surrogate)?.total(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthobasis::{IndexSet, MultiIndex};
    use crate::pce::fit_least_squares;
    use crate::sampling::sample_product;
    use crate::{FnModel, SampleSet};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn fit(fams: &[MarginalFamily], p: u32, f: impl Fn(&[f64]) -> f64 + Sync) -> Surrogate {
        let set = IndexSet::total_order(fams.len(), p).unwrap();
        let x = sample_product(fams, 3 * set.len() + 10, 42);
        let s = SampleSet::from_model(&FnModel::new(fams.len(), f), x).unwrap();
        fit_least_squares(fams, &set, &s).unwrap()
    }

    #[test]
    fn square_on_interval() {
        let s = fit(&[MarginalFamily::legendre()], 2, |x| x[0] * x[0]);
        let w = SkewnessWorkspace::build(&s, 3).unwrap();
        assert_abs_diff_eq!(w.mu3(), 16.0 / 945.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.sigma(), 4.0 / 45.0, epsilon = 1e-12);
        let gamma = (16.0 / 945.0) / (4.0f64 / 45.0).powf(1.5);
        assert_abs_diff_eq!(w.gamma(), gamma, epsilon = 1e-10);
        assert_abs_diff_eq!(gamma, 0.6389, epsilon = 1e-4);
        assert_abs_diff_eq!(w.skewness_index(Subset::single(0)).unwrap(), 1.0, epsilon = 1e-10);
        let col: Vec<f64> = w.weighted_evaluations().row_sum().iter().copied().collect();
        for (a, b) in col.iter().zip(w.f_tilde()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let f = SkewnessIndices::compute(&s).unwrap();
        assert_abs_diff_eq!(f.index(Subset::single(0)).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn symmetric_output_is_flagged() {
        let s = fit(&[MarginalFamily::legendre()], 1, |x| x[0]);
        let w = SkewnessWorkspace::build(&s, 2).unwrap();
        assert!(matches!(w.skewness_index(Subset::single(0)), Err(Error::SymmetricOutput { .. })));
        assert!(SkewnessIndices::compute(&s).unwrap().is_symmetric());
    }

    #[test]
    fn coarse_quadrature_is_rejected() {
        let s = fit(&[MarginalFamily::legendre()], 2, |x| x[0] * x[0]);
        assert!(matches!(SkewnessWorkspace::build(&s, 2), Err(Error::QuadratureTooCoarse { .. })));
    }

    #[test]
    fn additive_signs_and_totals() {
        let fams = [MarginalFamily::uniform(0.0, 1.0).unwrap(); 2];
        let s = fit(&fams, 4, |x| -x[0] * (x[0] - 2.0) + x[1].powi(4));
        let idx = SkewnessIndices::compute(&s).unwrap();
        assert!(idx.total(0).unwrap() < 0.0);
        assert!(idx.total(1).unwrap() > 0.0);
        assert_abs_diff_eq!(idx.total(0).unwrap(), idx.index(Subset::single(0)).unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(idx.sum().unwrap(), 1.0, epsilon = 1e-10);
        let w = SkewnessWorkspace::build(&s, required_level(4)).unwrap();
        assert_abs_diff_eq!(w.total_skewness(0).unwrap(), idx.total(0).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn square_of_first_variable_in_two_dims() {
        let fams = [MarginalFamily::legendre(); 2];
        let s = fit(&fams, 2, |x| x[0] * x[0]);
        let idx = SkewnessIndices::compute(&s).unwrap();
        assert_abs_diff_eq!(idx.total(0).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(idx.total(1).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn negation_flips_signs() {
        let fams = [MarginalFamily::legendre(), MarginalFamily::gaussian(1.0, 0.5).unwrap()];
        let set = IndexSet::total_order(2, 3).unwrap();
        let c = DVector::from_fn(set.len(), |i, _| 0.3 - 0.17 * i as f64 + 0.05 * (i * i) as f64);
        let s = Surrogate::new(fams.to_vec(), set.clone(), c.clone()).unwrap();
        let neg = Surrogate::new(fams.to_vec(), set, -c).unwrap();
        let (a, b) = (SkewnessIndices::compute(&s).unwrap(), SkewnessIndices::compute(&neg).unwrap());
        assert_abs_diff_eq!(a.gamma(), -b.gamma(), epsilon = 1e-12);
        for (sa, va) in a.entries().unwrap() {
            // normalized indices are invariant; their numerators flip
            assert_abs_diff_eq!(va * a.mu3(), -b.index(sa).unwrap() * b.mu3(), epsilon = 1e-12);
        }
    }

    #[test]
    fn pruned_and_unpruned_agree() {
        let fams = [MarginalFamily::legendre(), MarginalFamily::uniform(0.0, 2.0).unwrap(), MarginalFamily::hermite()];
        let set = IndexSet::total_order(3, 3).unwrap();
        let c = DVector::from_fn(set.len(), |i, _| ((i * 13 % 7) as f64 - 3.0) * 0.1);
        let s = Surrogate::new(fams.to_vec(), set, c).unwrap();
        let w = SkewnessWorkspace::build(&s, required_level(3)).unwrap();
        let f = SkewnessIndices::compute(&s).unwrap();
        let u = SkewnessIndices::compute_with(&s, false).unwrap();
        for sub in Subset::all_nonempty(3) {
            let p = w.skewness_index(sub).unwrap();
            assert_abs_diff_eq!(p, w.skewness_index_unpruned(sub).unwrap(), epsilon = 1e-12);
            assert_abs_diff_eq!(p, f.index(sub).unwrap(), epsilon = 1e-10);
            assert_abs_diff_eq!(f.index(sub).unwrap(), u.index(sub).unwrap(), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(f.mu3_quadrature().unwrap(), w.mu3(), epsilon = 1e-12);
    }

    #[test]
    fn subset_out_of_range() {
        let fams = [MarginalFamily::legendre(); 2];
        let set = IndexSet::explicit(2, vec![MultiIndex::zeros(2), MultiIndex::new(vec![2, 0])]).unwrap();
        let s = Surrogate::new(fams.to_vec(), set, DVector::from_vec(vec![0.0, 1.0])).unwrap();
        let idx = SkewnessIndices::compute(&s).unwrap();
        assert!(idx.index(Subset::single(5)).is_err());
        assert!(idx.index(Subset::EMPTY).is_err());
    }
}
