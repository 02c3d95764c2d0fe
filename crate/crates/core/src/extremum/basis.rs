use std::collections::HashMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::measure::{CopulaSample, FilteredMeasure};
use crate::error::{Error, Result};
use crate::linalg::{covariance, least_squares, qr_r_factor};
use crate::orthobasis::{BasisEvaluator, IndexSet, MarginalFamily};
use crate::subset::Subset;

/// Samples per basis function below which the orthogonalization is only
/// warned about.
pub const SAMPLES_PER_TERM: usize = 10;

/// Polynomial basis that is orthogonalized against the filtered measure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseBasis {
    /// The input families' own polynomials in the physical coordinates.
    /// The indices only depend on the spanned polynomial space, so this
    /// gives the same values as any per-dimension family orthogonal under
    /// the filtered marginals.
    #[default]
    InputFamily,
    /// Legendre polynomials of `2 F_k(x_k) - 1`, where `F_k` is the filtered
    /// marginal CDF. Exactly orthonormal under the product of the filtered
    /// marginals, but polynomial in `F_k(x_k)` rather than in `x_k`, which
    /// resolves smooth models less well near unbounded tails.
    MarginalLegendre,
}

impl BaseBasis {
    fn families(&self, input: &[MarginalFamily]) -> Vec<MarginalFamily> {
        match self {
            BaseBasis::MarginalLegendre => vec![MarginalFamily::legendre(); input.len()],
            BaseBasis::InputFamily => input.to_vec(),
        }
    }
}

/// Basis `Phi_i = sum_j Psi_j R^-1(j, i)`, empirically orthonormal on the
/// sample that generated `R`.
#[derive(Clone, Debug)]
pub struct CorrelatedBasis {
    base: BaseBasis,
    families: Vec<MarginalFamily>,
    index_set: IndexSet,
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    coords: DMatrix<f64>,
    design: DMatrix<f64>,
}

impl CorrelatedBasis {
    /// Draws `samples` points from `measure` and factorizes their scaled
    /// design matrix.
    pub fn orthogonalize(
        measure: &FilteredMeasure,
        input_families: &[MarginalFamily],
        index_set: &IndexSet,
        samples: usize,
        seed: u64,
        base: BaseBasis,
    ) -> Result<Self> {
        let draw = measure.copula_sample(samples, seed);
        Self::from_sample(&draw, input_families, index_set, base)
    }

    pub fn from_sample(
        draw: &CopulaSample,
        input_families: &[MarginalFamily],
        index_set: &IndexSet,
        base: BaseBasis,
    ) -> Result<Self> {
        let d = draw.x.ncols();
        if input_families.len() != d || index_set.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: index_set.dim() });
        }
        if index_set.is_empty() || !index_set.get(0).is_zero() {
            return Err(Error::invalid("index set must start with the constant term"));
        }
        let n = draw.x.nrows();
        let r = index_set.len();
        if n < r {
            return Err(Error::TooFewSamples { got: n, needed: r, context: "orthogonalization" });
        }
        if n < SAMPLES_PER_TERM * r {
            warn!("orthogonalizing {r} basis functions on only {n} samples (recommended {})", SAMPLES_PER_TERM * r);
        }
        let families = base.families(input_families);
        let coords = sample_coords(base, draw);
        let design = BasisEvaluator::new(&families, index_set)?.design(&coords)?;
        let rmat = qr_r_factor(&(&design / (n as f64).sqrt()))?;
        let r_inv = rmat
            .clone()
            .solve_upper_triangular(&DMatrix::identity(r, r))
            .ok_or_else(|| Error::Numerical("triangular factor is singular".into()))?;
        Ok(CorrelatedBasis { base, families, index_set: index_set.clone(), r: rmat, r_inv, coords, design })
    }

    pub fn base(&self) -> BaseBasis {
        self.base
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    /// Families of the base basis.
    pub fn families(&self) -> &[MarginalFamily] {
        &self.families
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn r_inv(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    pub fn sample_count(&self) -> usize {
        self.coords.nrows()
    }

    /// Base-basis coordinates of the generating sample.
    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    /// Design matrix of the base basis on the generating sample.
    pub fn base_design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Base-basis coordinates of physical points.
    pub fn coords_of(&self, measure: &FilteredMeasure, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self.base {
            BaseBasis::InputFamily => Ok(x.clone()),
            BaseBasis::MarginalLegendre => Ok(measure.marginal_levels(x)?.map(|u| 2.0 * u - 1.0)),
        }
    }

    pub fn coords_of_sample(&self, draw: &CopulaSample) -> DMatrix<f64> {
        sample_coords(self.base, draw)
    }

    /// `Phi` evaluated at base coordinates.
    pub fn design(&self, coords: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(BasisEvaluator::new(&self.families, &self.index_set)?.design(coords)? * &self.r_inv)
    }

    /// Largest entry of `Q^T Q - I` on the generating sample, where
    /// `Q = A R^-1 / sqrt(N)`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.sample_count() as f64;
        let q = &self.design * &self.r_inv / n.sqrt();
        let g = q.transpose() * q;
        (g - DMatrix::identity(self.index_set.len(), self.index_set.len())).amax()
    }
}

fn sample_coords(base: BaseBasis, draw: &CopulaSample) -> DMatrix<f64> {
    match base {
        BaseBasis::InputFamily => draw.x.clone(),
        BaseBasis::MarginalLegendre => draw.u.map(|u| 2.0 * u - 1.0),
    }
}

/// Least-squares expansion in a [`CorrelatedBasis`] and the covariance
/// decomposition of its output variance.
#[derive(Clone, Debug)]
pub struct ExtremumFit {
    basis: CorrelatedBasis,
    alpha: DVector<f64>,
    beta: DVector<f64>,
    fitted: Vec<f64>,
    variance: f64,
    tables: Vec<DMatrix<f64>>,
    fit_samples: usize,
    residual_norm: f64,
}

impl ExtremumFit {
    /// Fits `Phi` coefficients to outputs `f` at base coordinates `coords`.
    pub fn fit(basis: CorrelatedBasis, coords: &DMatrix<f64>, f: &DVector<f64>) -> Result<Self> {
        if coords.nrows() != f.len() {
            return Err(Error::DimensionMismatch { expected: coords.nrows(), got: f.len() });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model outputs"));
        }
        let ac = basis.design(coords)?;
        let ls = least_squares(&ac, f)?;
        let alpha = ls.coefficients;
        let beta = &basis.r_inv * &alpha;
        let fitted: Vec<f64> = (&basis.design * &beta).iter().copied().collect();
        let variance: f64 = alpha.iter().skip(1).map(|a| a * a).sum();
        if !(variance > 0.0) {
            return Err(Error::ZeroVariance("extremum fit"));
        }
        let maxdeg = basis.index_set.max_degree_per_dim();
        let tables = (0..basis.coords.ncols())
            .map(|k| {
                let fam = basis.families[k];
                let p = maxdeg[k] as usize;
                let mut t = DMatrix::zeros(basis.coords.nrows(), p + 1);
                let mut row = vec![0.0; p + 1];
                for j in 0..basis.coords.nrows() {
                    fam.eval_all_std(fam.standardize(basis.coords[(j, k)]), &mut row);
                    for (c, v) in row.iter().enumerate() {
                        t[(j, c)] = *v;
                    }
                }
                t
            })
            .collect();
        Ok(ExtremumFit {
            basis,
            alpha,
            beta,
            fitted,
            variance,
            tables,
            fit_samples: f.len(),
            residual_norm: ls.residual_norm,
        })
    }

    pub fn basis(&self) -> &CorrelatedBasis {
        &self.basis
    }

    /// Coefficients in the orthonormalized basis.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Coefficients in the base basis, `R^-1 alpha`.
    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    /// Output variance: the sum of squared non-constant coefficients.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn fit_samples(&self) -> usize {
        self.fit_samples
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    /// Fitted values on the generating sample.
    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub fn predict(&self, coords: &DMatrix<f64>) -> Result<DVector<f64>> {
        BasisEvaluator::new(&self.basis.families, &self.basis.index_set)?.evaluate(coords, &self.beta)
    }

    fn dim(&self) -> usize {
        self.tables.len()
    }

    fn check_subset(&self, s: Subset) -> Result<()> {
        if s.span() > self.dim() {
            return Err(Error::invalid(format!("subset {s} exceeds dimension {}", self.dim())));
        }
        Ok(())
    }

    /// `sum_i beta_i mu(i outside U) Psi(i inside U)` on the generating
    /// sample, where `mu` is the sample mean of the base term restricted to
    /// the variables outside `u`.
    pub fn component_sum(&self, u: Subset) -> Result<Vec<f64>> {
        self.check_subset(u)?;
        let n = self.basis.sample_count();
        let terms: Vec<(Vec<u32>, f64)> = self
            .basis
            .index_set
            .indices()
            .par_iter()
            .zip(self.beta.as_slice().par_iter())
            .filter(|(_, b)| **b != 0.0)
            .map(|(m, &b)| {
                let outside: Vec<(usize, usize)> = m
                    .degrees()
                    .iter()
                    .enumerate()
                    .filter(|(k, &p)| p > 0 && !u.contains(*k))
                    .map(|(k, &p)| (k, p as usize))
                    .collect();
                let mu = if outside.is_empty() {
                    1.0
                } else {
                    (0..n).map(|j| outside.iter().fold(1.0, |acc, &(k, p)| acc * self.tables[k][(j, p)])).sum::<f64>()
                        / n as f64
                };
                (m.restrict_to(u).degrees().to_vec(), b * mu)
            })
            .collect();
        let mut grouped: HashMap<Vec<u32>, f64> = HashMap::new();
        let mut order: Vec<Vec<u32>> = Vec::new();
        for (key, c) in terms {
            match grouped.get_mut(&key) {
                Some(v) => *v += c,
                None => {
                    order.push(key.clone());
                    grouped.insert(key, c);
                }
            }
        }
        let parts: Vec<(Vec<(usize, usize)>, f64)> = order
            .into_iter()
            .map(|key| {
                let c = grouped[&key];
                let nz = key.iter().enumerate().filter(|(_, &p)| p > 0).map(|(k, &p)| (k, p as usize)).collect();
                (nz, c)
            })
            .collect();
        Ok((0..n)
            .into_par_iter()
            .map(|j| {
                parts.iter().map(|(nz, c)| c * nz.iter().fold(1.0, |acc, &(k, p)| acc * self.tables[k][(j, p)])).sum()
            })
            .collect())
    }

    fn component(&self, s: Subset, memo: &mut HashMap<u64, Vec<f64>>) -> Result<Vec<f64>> {
        if let Some(v) = memo.get(&s.bits()) {
            return Ok(v.clone());
        }
        let mut m = self.component_sum(s)?;
        for t in s.subsets() {
            if t == s {
                continue;
            }
            let sub = self.component(t, memo)?;
            for (a, b) in m.iter_mut().zip(&sub) {
                *a -= b;
            }
        }
        memo.insert(s.bits(), m.clone());
        Ok(m)
    }

    /// Covariance-decomposition index of `s`: the covariance of its
    /// component function with the fitted output, over the output variance.
    pub fn sobol(&self, s: Subset) -> Result<f64> {
        if s.is_empty() {
            return Err(Error::invalid("subset must be nonempty"));
        }
        self.check_subset(s)?;
        let mut memo = HashMap::new();
        let m = self.component(s, &mut memo)?;
        Ok(covariance(&m, &self.fitted) / self.variance)
    }

    /// Indices of every nonempty subset, sorted by size then position.
    pub fn all_sobol(&self) -> Result<Vec<(Subset, f64)>> {
        let d = self.dim();
        if d > 16 {
            return Err(Error::CapExceeded { what: "subset enumeration", size: 1u128 << d, cap: 1 << 16 });
        }
        let mut memo = HashMap::new();
        let mut out = Vec::new();
        for s in Subset::all_nonempty(d) {
            let m = self.component(s, &mut memo)?;
            out.push((s, covariance(&m, &self.fitted) / self.variance));
        }
        out.sort_by_key(|(s, _)| (s.len(), s.positions().collect::<Vec<_>>()));
        Ok(out)
    }

    /// Total index of variable `i` (0-based): the covariance of the output
    /// minus the component sum over the other variables.
    pub fn total(&self, i: usize) -> Result<f64> {
        let d = self.dim();
        if i >= d {
            return Err(Error::invalid(format!("variable {} out of range 1..={d}", i + 1)));
        }
        let rest = self.component_sum(Subset::full(d).without(i))?;
        let diff: Vec<f64> = self.fitted.iter().zip(&rest).map(|(f, h)| f - h).collect();
        Ok(covariance(&diff, &self.fitted) / self.variance)
    }

    pub fn totals(&self) -> Result<Vec<f64>> {
        (0..self.dim()).map(|i| self.total(i)).collect()
    }
}
