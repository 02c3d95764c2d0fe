use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::family::MarginalFamily;
use super::index_set::IndexSet;
use crate::error::{Error, Result};

/// Evaluates the multivariate basis `Psi_j(x) = prod_k psi_{j_k}(x_k)` of an
/// index set. Only the nonzero factors of each multi-index are visited.
#[derive(Clone, Debug)]
pub struct BasisEvaluator {
    families: Vec<MarginalFamily>,
    terms: Vec<Vec<(usize, usize)>>,
    max_degree: Vec<usize>,
    offsets: Vec<usize>,
    table_len: usize,
}

impl BasisEvaluator {
    pub fn new(families: &[MarginalFamily], index_set: &IndexSet) -> Result<Self> {
        if families.len() != index_set.dim() {
            return Err(Error::DimensionMismatch { expected: index_set.dim(), got: families.len() });
        }
        for f in families {
            f.validate()?;
        }
        let max_degree: Vec<usize> = index_set.max_degree_per_dim().into_iter().map(|k| k as usize).collect();
        let mut offsets = Vec::with_capacity(families.len());
        let mut acc = 0;
        for &k in &max_degree {
            offsets.push(acc);
            acc += k + 1;
        }
        let terms = index_set
            .indices()
            .iter()
            .map(|m| {
                m.degrees()
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(j, &k)| (j, k as usize))
                    .collect()
            })
            .collect();
        Ok(BasisEvaluator { families: families.to_vec(), terms, max_degree, offsets, table_len: acc })
    }

    pub fn dim(&self) -> usize {
        self.families.len()
    }

    /// Number of basis functions `r`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn families(&self) -> &[MarginalFamily] {
        &self.families
    }

    fn fill_table(&self, x: &[f64], table: &mut [f64]) {
        for (j, fam) in self.families.iter().enumerate() {
            let off = self.offsets[j];
            fam.eval_all_std(fam.standardize(x[j]), &mut table[off..off + self.max_degree[j] + 1]);
        }
    }

    /// Basis values at one physical point.
    pub fn eval_row(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.len());
        let mut table = vec![0.0; self.table_len];
        self.fill_table(x, &mut table);
        for (o, term) in out.iter_mut().zip(&self.terms) {
            *o = term.iter().fold(1.0, |acc, &(j, k)| acc * table[self.offsets[j] + k]);
        }
    }

    /// Basis values and their gradients with respect to the physical
    /// coordinates; `grads[m][j]` is `d Psi_j / d x_m`.
    pub fn eval_row_with_gradient(&self, x: &[f64], out: &mut [f64], grads: &mut [Vec<f64>]) {
        let d = self.dim();
        let mut vals = vec![0.0; self.table_len];
        let mut ders = vec![0.0; self.table_len];
        for (j, fam) in self.families.iter().enumerate() {
            let off = self.offsets[j];
            let n = self.max_degree[j] + 1;
            fam.eval_all_with_derivative_std(fam.standardize(x[j]), &mut vals[off..off + n], &mut ders[off..off + n]);
            let scale = fam.standardize_scale();
            for v in &mut ders[off..off + n] {
                *v *= scale;
            }
        }
        for (i, term) in self.terms.iter().enumerate() {
            out[i] = term.iter().fold(1.0, |acc, &(j, k)| acc * vals[self.offsets[j] + k]);
            for (m, g) in grads.iter_mut().enumerate().take(d) {
                g[i] = if term.iter().any(|&(j, _)| j == m) {
                    term.iter().fold(1.0, |acc, &(j, k)| {
                        let idx = self.offsets[j] + k;
                        acc * if j == m { ders[idx] } else { vals[idx] }
                    })
                } else {
                    0.0
                };
            }
        }
    }

    fn check_points(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.ncols() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample points"));
        }
        Ok(())
    }

    /// `N x r` design matrix; rows are evaluated in parallel.
    pub fn design(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_points(x)?;
        let r = self.len();
        let n = x.nrows();
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let point: Vec<f64> = x.row(i).iter().copied().collect();
                let mut out = vec![0.0; r];
                self.eval_row(&point, &mut out);
                out
            })
            .collect();
        Ok(DMatrix::from_row_slice(n, r, &rows))
    }

    /// `sum_j c_j Psi_j(x_i)` for every row, without forming the design
    /// matrix.
    pub fn evaluate(&self, x: &DMatrix<f64>, coefficients: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_points(x)?;
        if coefficients.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: coefficients.len() });
        }
        let vals: Vec<f64> = (0..x.nrows())
            .into_par_iter()
            .map_init(
                || (vec![0.0; self.dim()], vec![0.0; self.table_len]),
                |(point, table), i| {
                    for (j, p) in point.iter_mut().enumerate() {
                        *p = x[(i, j)];
                    }
                    self.fill_table(point, table);
                    self.terms
                        .iter()
                        .zip(coefficients.iter())
                        .map(|(term, c)| c * term.iter().fold(1.0, |acc, &(j, k)| acc * table[self.offsets[j] + k]))
                        .sum()
                },
            )
            .collect();
        Ok(DVector::from_vec(vals))
    }
}

/// Polynomial design matrix `A[i, j] = Psi_j(x_i)`.
pub fn design_matrix(families: &[MarginalFamily], index_set: &IndexSet, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    BasisEvaluator::new(families, index_set)?.design(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthobasis::MultiIndex;
    use approx::assert_abs_diff_eq;

    fn leg2() -> Vec<MarginalFamily> {
        vec![MarginalFamily::legendre(); 2]
    }

    #[test]
    fn design_examples() {
        let set = IndexSet::explicit(
            2,
            vec![MultiIndex::zeros(2), MultiIndex::new(vec![1, 0]), MultiIndex::new(vec![1, 1])],
        )
        .unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[0.5, -0.2, 0.5, 0.5]);
        let a = design_matrix(&leg2(), &set, &x).unwrap();
        assert_abs_diff_eq!(a[(0, 0)], 1.0);
        assert_abs_diff_eq!(a[(1, 0)], 1.0);
        assert_abs_diff_eq!(a[(0, 1)], 0.866_025_403_784_438_6, epsilon = 1e-12);
        assert_abs_diff_eq!(a[(1, 2)], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn evaluate_matches_design_product() {
        let set = IndexSet::total_order(2, 3).unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, -0.7, 0.9, 0.0, -0.3]);
        let c = DVector::from_fn(set.len(), |i, _| 0.1 * i as f64 - 0.3);
        let ev = BasisEvaluator::new(&leg2(), &set).unwrap();
        let direct = ev.design(&x).unwrap() * &c;
        let fast = ev.evaluate(&x, &c).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(direct[i], fast[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn rejects_bad_points() {
        let set = IndexSet::total_order(2, 1).unwrap();
        let x = DMatrix::from_row_slice(1, 2, &[f64::NAN, 0.0]);
        assert!(design_matrix(&leg2(), &set, &x).is_err());
        let x = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 0.0]);
        assert!(design_matrix(&leg2(), &set, &x).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fams = vec![MarginalFamily::uniform(0.0, 2.0).unwrap(), MarginalFamily::gaussian(1.0, 0.5).unwrap()];
        let set = IndexSet::total_order(2, 3).unwrap();
        let ev = BasisEvaluator::new(&fams, &set).unwrap();
        let x = [0.7, 1.3];
        let r = set.len();
        let mut v = vec![0.0; r];
        let mut g = vec![vec![0.0; r]; 2];
        ev.eval_row_with_gradient(&x, &mut v, &mut g);
        let h = 1e-6;
        for m in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[m] += h;
            xm[m] -= h;
            let (mut vp, mut vm) = (vec![0.0; r], vec![0.0; r]);
            ev.eval_row(&xp, &mut vp);
            ev.eval_row(&xm, &mut vm);
            for j in 0..r {
                assert_abs_diff_eq!(g[m][j], (vp[j] - vm[j]) / (2.0 * h), epsilon = 1e-6);
            }
        }
    }
}
