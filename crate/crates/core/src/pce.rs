//! Least-squares polynomial chaos surrogates and their coefficient-based
//! moments and Sobol' indices.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::Model;
use crate::orthobasis::{BasisEvaluator, IndexSet, MarginalFamily, QuadratureRule};
use crate::report::{ReportKind, ReportMetadata, SensitivityReport};
use crate::subset::Subset;

/// Input/output realizations in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    x: DMatrix<f64>,
    f: DVector<f64>,
}

impl SampleSet {
    pub fn new(x: DMatrix<f64>, f: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::invalid("sample set needs at least one row"));
        }
        if f.len() != x.nrows() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: f.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample inputs"));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample outputs"));
        }
        Ok(SampleSet { x, f })
    }

    /// Evaluates `model` at every row of `x`.
    pub fn from_model<M: Model + ?Sized>(model: &M, x: DMatrix<f64>) -> Result<Self> {
        let f = model.eval_rows(&x)?;
        SampleSet::new(x, f)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Adds `noise[i]` to each output.
    pub fn with_output_offsets(mut self, noise: &[f64]) -> Self {
        for (f, e) in self.f.iter_mut().zip(noise) {
            *f += e;
        }
        self
    }
}

/// Linear map from physical inputs to the reduced coordinates of a ridge
/// surrogate: inputs are standardized per dimension, then projected onto
/// the orthonormal columns of `matrix`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub matrix: DMatrix<f64>,
    pub input_families: Vec<MarginalFamily>,
}

impl Projection {
    pub fn new(matrix: DMatrix<f64>, input_families: Vec<MarginalFamily>) -> Result<Self> {
        if matrix.nrows() != input_families.len() {
            return Err(Error::DimensionMismatch { expected: input_families.len(), got: matrix.nrows() });
        }
        check_orthonormal(&matrix)?;
        Ok(Projection { matrix, input_families })
    }

    /// Reduced coordinates `M^T z(x)` for every row.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_families.len() {
            return Err(Error::DimensionMismatch { expected: self.input_families.len(), got: x.ncols() });
        }
        Ok(standardize_rows(&self.input_families, x) * &self.matrix)
    }
}

pub(crate) fn standardize_rows(families: &[MarginalFamily], x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| families[j].standardize(x[(i, j)]))
}

pub(crate) fn check_orthonormal(m: &DMatrix<f64>) -> Result<()> {
    let gram = m.transpose() * m;
    let err = (gram - DMatrix::identity(m.ncols(), m.ncols())).abs().max();
    if !(err <= 1e-10) {
        return Err(Error::invalid(format!("subspace columns are not orthonormal (max |M^T M - I| = {err:.3e})")));
    }
    Ok(())
}

/// Residual diagnostics of the solve that produced a surrogate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub samples: usize,
    pub residual_norm: f64,
    pub rank: usize,
    pub condition_estimate: f64,
}

/// Basis plus coefficients, optionally composed with a projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    families: Vec<MarginalFamily>,
    index_set: IndexSet,
    coefficients: DVector<f64>,
    subspace: Option<Projection>,
    diagnostics: Option<FitDiagnostics>,
}

impl Surrogate {
    pub fn new(families: Vec<MarginalFamily>, index_set: IndexSet, coefficients: DVector<f64>) -> Result<Self> {
        if families.len() != index_set.dim() {
            return Err(Error::DimensionMismatch { expected: index_set.dim(), got: families.len() });
        }
        if coefficients.len() != index_set.len() {
            return Err(Error::DimensionMismatch { expected: index_set.len(), got: coefficients.len() });
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("coefficients"));
        }
        for f in &families {
            f.validate()?;
        }
        Ok(Surrogate { families, index_set, coefficients, subspace: None, diagnostics: None })
    }

    /// Attaches a projection; the basis families then describe the reduced
    /// coordinates.
    pub fn with_subspace(mut self, projection: Projection) -> Result<Self> {
        if projection.matrix.ncols() != self.index_set.dim() {
            return Err(Error::DimensionMismatch { expected: self.index_set.dim(), got: projection.matrix.ncols() });
        }
        self.subspace = Some(projection);
        Ok(self)
    }

    pub fn with_diagnostics(mut self, diagnostics: FitDiagnostics) -> Self {
        self.diagnostics = Some(diagnostics);
        self
    }

    pub fn families(&self) -> &[MarginalFamily] {
        &self.families
    }

    /// Distributions of the physical inputs.
    pub fn input_families(&self) -> &[MarginalFamily] {
        match &self.subspace {
            Some(p) => &p.input_families,
            None => &self.families,
        }
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn subspace(&self) -> Option<&Projection> {
        self.subspace.as_ref()
    }

    pub fn diagnostics(&self) -> Option<&FitDiagnostics> {
        self.diagnostics.as_ref()
    }

    /// Number of physical inputs.
    pub fn input_dim(&self) -> usize {
        self.input_families().len()
    }

    fn basis_points<'a>(&self, x: &'a DMatrix<f64>) -> Result<Cow<'a, DMatrix<f64>>> {
        match &self.subspace {
            Some(p) => Ok(Cow::Owned(p.project(x)?)),
            None => Ok(Cow::Borrowed(x)),
        }
    }

    pub fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let pts = self.basis_points(x)?;
        BasisEvaluator::new(&self.families, &self.index_set)?.evaluate(&pts, &self.coefficients)
    }

    /// Constant-term coefficient.
    pub fn mean(&self) -> f64 {
        self.constant_position().map_or(0.0, |p| self.coefficients[p])
    }

    /// Sum of squared non-constant coefficients.
    pub fn variance(&self) -> f64 {
        self.index_set
            .indices()
            .iter()
            .zip(self.coefficients.iter())
            .filter(|(m, _)| !m.is_zero())
            .map(|(_, c)| c * c)
            .sum()
    }

    fn constant_position(&self) -> Option<usize> {
        self.index_set.indices().iter().position(|m| m.is_zero())
    }

    fn require_full_space(&self) -> Result<f64> {
        if self.subspace.is_some() {
            return Err(Error::invalid(
                "Sobol' indices need a full-space surrogate; lift the ridge coefficients first",
            ));
        }
        let v = self.variance();
        if v <= 0.0 {
            return Err(Error::ZeroVariance("surrogate is constant"));
        }
        Ok(v)
    }

    /// Sum of squared coefficients grouped by the support of their
    /// multi-index, as `(S, sum)` pairs sorted by size then position.
    fn partial_variances(&self) -> Vec<(Subset, f64)> {
        let mut acc: std::collections::BTreeMap<(usize, Vec<usize>), (Subset, f64)> = Default::default();
        for (m, c) in self.index_set.indices().iter().zip(self.coefficients.iter()) {
            let s = m.support();
            if s.is_empty() {
                continue;
            }
            let key = (s.len(), s.positions().collect());
            acc.entry(key).or_insert((s, 0.0)).1 += c * c;
        }
        acc.into_values().collect()
    }

    pub fn sobol_index(&self, s: Subset) -> Result<f64> {
        let v = self.require_full_space()?;
        self.check_subset(s)?;
        let num: f64 = self
            .index_set
            .indices()
            .iter()
            .zip(self.coefficients.iter())
            .filter(|(m, _)| !m.is_zero() && m.support() == s)
            .map(|(_, c)| c * c)
            .sum();
        Ok(num / v)
    }

    /// Total index of the variable at 0-based position `i`.
    pub fn total_sobol(&self, i: usize) -> Result<f64> {
        let v = self.require_full_space()?;
        if i >= self.input_dim() {
            return Err(Error::invalid(format!("variable {} out of range 1..={}", i + 1, self.input_dim())));
        }
        let num: f64 = self
            .index_set
            .indices()
            .iter()
            .zip(self.coefficients.iter())
            .filter(|(m, _)| m.degrees()[i] > 0)
            .map(|(_, c)| c * c)
            .sum();
        Ok(num / v)
    }

    fn check_subset(&self, s: Subset) -> Result<()> {
        if s.is_empty() || s.span() > self.input_dim() {
            return Err(Error::invalid(format!("subset {s} is not a nonempty subset of 1..={}", self.input_dim())));
        }
        Ok(())
    }

    /// Every Sobol' index with a nonzero basis term.
    pub fn all_sobol_indices(&self) -> Result<Vec<(Subset, f64)>> {
        let v = self.require_full_space()?;
        Ok(self.partial_variances().into_iter().map(|(s, p)| (s, p / v)).collect())
    }

    pub fn all_total_sobol(&self) -> Result<Vec<f64>> {
        (0..self.input_dim()).map(|i| self.total_sobol(i)).collect()
    }

    pub fn sobol_report(&self, metadata: ReportMetadata) -> Result<SensitivityReport> {
        let mut r = SensitivityReport::new(ReportKind::Sobol, metadata);
        for (s, v) in self.all_sobol_indices()? {
            r.push(s, v);
        }
        Ok(r)
    }

    pub fn total_sobol_report(&self, metadata: ReportMetadata) -> Result<SensitivityReport> {
        let mut r = SensitivityReport::new(ReportKind::TotalSobol, metadata);
        for (i, v) in self.all_total_sobol()?.into_iter().enumerate() {
            r.push(Subset::single(i), v);
        }
        Ok(r)
    }
}

/// Least-squares fit of `index_set` to the samples via Householder QR.
pub fn fit_least_squares(families: &[MarginalFamily], index_set: &IndexSet, samples: &SampleSet) -> Result<Surrogate> {
    if samples.dim() != families.len() {
        return Err(Error::DimensionMismatch { expected: families.len(), got: samples.dim() });
    }
    fit_on_points(families, index_set, samples.x(), samples.f())
}

/// Coefficients by quadrature projection, `c_j = sum_k w_k f(x_k) Psi_j(x_k)`.
/// Exact when the rule integrates `f Psi_j` exactly for every term.
pub fn fit_projection<M: Model + ?Sized>(
    model: &M,
    families: &[MarginalFamily],
    index_set: &IndexSet,
    rule: &QuadratureRule,
) -> Result<Surrogate> {
    if rule.dim() != families.len() || model.dim() != families.len() {
        return Err(Error::DimensionMismatch { expected: families.len(), got: rule.dim().min(model.dim()) });
    }
    let ev = BasisEvaluator::new(families, index_set)?;
    let f = model.eval_rows(rule.points())?;
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("model outputs"));
    }
    let wf = DVector::from_iterator(f.len(), f.iter().zip(rule.weights()).map(|(v, w)| v * w));
    let coefficients = ev.design(rule.points())?.transpose() * wf;
    Surrogate::new(families.to_vec(), index_set.clone(), coefficients)
}

pub(crate) fn fit_on_points(
    families: &[MarginalFamily],
    index_set: &IndexSet,
    pts: &DMatrix<f64>,
    f: &DVector<f64>,
) -> Result<Surrogate> {
    let ev = BasisEvaluator::new(families, index_set)?;
    if pts.nrows() < ev.len() {
        return Err(Error::Underdetermined { rows: pts.nrows(), cols: ev.len() });
    }
    let a = ev.design(pts)?;
    let ls = linalg::least_squares(&a, f)?;
    let diag = FitDiagnostics {
        samples: pts.nrows(),
        residual_norm: ls.residual_norm,
        rank: ls.rank,
        condition_estimate: ls.condition_estimate,
    };
    Ok(Surrogate::new(families.to_vec(), index_set.clone(), ls.coefficients)?.with_diagnostics(diag))
}

#[derive(Serialize, Deserialize)]
struct ProjectionRepr {
    /// `d` rows of `n` entries.
    matrix: Vec<Vec<f64>>,
    input_families: Vec<MarginalFamily>,
}

#[derive(Serialize, Deserialize)]
struct SurrogateRepr {
    families: Vec<MarginalFamily>,
    index_set: IndexSet,
    coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subspace: Option<ProjectionRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnostics: Option<FitDiagnostics>,
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("matrix rows have unequal lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

impl Serialize for Surrogate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SurrogateRepr {
            families: self.families.clone(),
            index_set: self.index_set.clone(),
            coefficients: self.coefficients.iter().copied().collect(),
            subspace: self.subspace.as_ref().map(|p| ProjectionRepr {
                matrix: matrix_rows(&p.matrix),
                input_families: p.input_families.clone(),
            }),
            diagnostics: self.diagnostics.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Surrogate {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = SurrogateRepr::deserialize(deserializer)?;
        let mut s = Surrogate::new(repr.families, repr.index_set, DVector::from_vec(repr.coefficients))
            .map_err(D::Error::custom)?;
        if let Some(p) = repr.subspace {
            let m = matrix_from_rows(&p.matrix).map_err(D::Error::custom)?;
            let proj = Projection::new(m, p.input_families).map_err(D::Error::custom)?;
            s = s.with_subspace(proj).map_err(D::Error::custom)?;
        }
        s.diagnostics = repr.diagnostics;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthobasis::tensor_rule;
    use crate::sampling::sample_product;
    use approx::assert_abs_diff_eq;

    fn samples_of(fams: &[MarginalFamily], n: usize, seed: u64, f: impl Fn(&[f64]) -> f64 + Sync) -> SampleSet {
        let x = sample_product(fams, n, seed);
        SampleSet::from_model(&crate::FnModel::new(fams.len(), f), x).unwrap()
    }

    #[test]
    fn affine_fit_recovers_projection() {
        let fams = [MarginalFamily::legendre()];
        let set = IndexSet::total_order(1, 1).unwrap();
        let s = fit_least_squares(&fams, &set, &samples_of(&fams, 10, 1, |x| 2.0 + x[0])).unwrap();
        assert_abs_diff_eq!(s.coefficients()[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.coefficients()[1], 1.0 / 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.variance(), 1.0 / 3.0, epsilon = 1e-12);
        let y = s.evaluate(&DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert_abs_diff_eq!(y[0], 2.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_function_and_underdetermined() {
        let fams = [MarginalFamily::legendre(); 2];
        let set = IndexSet::total_order(2, 2).unwrap();
        let s = fit_least_squares(&fams, &set, &samples_of(&fams, 20, 2, |_| 0.0)).unwrap();
        assert!(s.coefficients().iter().all(|c| c.abs() < 1e-14));
        assert_eq!(s.variance(), 0.0);
        assert!(matches!(s.sobol_index(Subset::single(0)), Err(Error::ZeroVariance(_))));
        let err = fit_least_squares(&fams, &set, &samples_of(&fams, set.len() - 1, 2, |x| x[0])).unwrap_err();
        assert!(err.to_string().contains("underdetermined"));
    }

    #[test]
    fn quadratic_variance() {
        let fams = [MarginalFamily::legendre()];
        let set = IndexSet::total_order(1, 2).unwrap();
        let s = fit_least_squares(&fams, &set, &samples_of(&fams, 12, 3, |x| x[0] * x[0])).unwrap();
        assert_abs_diff_eq!(s.variance(), 4.0 / 45.0, epsilon = 1e-12);
    }

    #[test]
    fn additive_and_interaction_indices() {
        let fams = [MarginalFamily::uniform(0.0, 1.0).unwrap(); 2];
        let set = IndexSet::total_order(2, 4).unwrap();
        let s = fit_least_squares(
            &fams,
            &set,
            &samples_of(&fams, 100, 4, |x| -x[0] * (x[0] - 2.0) + x[1].powi(4)),
        )
        .unwrap();
        assert_abs_diff_eq!(s.sobol_index(Subset::single(0)).unwrap(), 5.0 / 9.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.sobol_index(Subset::single(1)).unwrap(), 4.0 / 9.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.sobol_index(Subset::of(&[0, 1])).unwrap(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.total_sobol(0).unwrap(), 5.0 / 9.0, epsilon = 1e-10);

        let fams = [MarginalFamily::legendre(); 2];
        let s = fit_least_squares(&fams, &set, &samples_of(&fams, 40, 5, |x| x[0] * x[1])).unwrap();
        assert_abs_diff_eq!(s.sobol_index(Subset::of(&[0, 1])).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.sobol_index(Subset::single(0)).unwrap(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.total_sobol(0).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.total_sobol(1).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn dominated_total_indices() {
        let fams = [MarginalFamily::legendre(); 2];
        let set = IndexSet::total_order(2, 2).unwrap();
        let s = fit_least_squares(&fams, &set, &samples_of(&fams, 30, 6, |x| x[0] * x[0] + 100.0 * x[1])).unwrap();
        let v1 = 4.0 / 45.0;
        let v2 = 1e4 / 3.0;
        assert_abs_diff_eq!(s.total_sobol(0).unwrap(), v1 / (v1 + v2), epsilon = 1e-10);
        assert_abs_diff_eq!(s.total_sobol(1).unwrap(), v2 / (v1 + v2), epsilon = 1e-10);
        assert_abs_diff_eq!(s.total_sobol(0).unwrap(), 2.666e-5, epsilon = 1e-8);
    }

    #[test]
    fn ridge_identity_and_serde() {
        let inputs = vec![MarginalFamily::legendre(); 3];
        let m = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let red = vec![MarginalFamily::uniform(-3f64.sqrt(), 3f64.sqrt()).unwrap()];
        let set = IndexSet::total_order(1, 1).unwrap();
        // psi_1(u) on [-L, L] is sqrt(3) u / L
        let c = DVector::from_vec(vec![0.0, 1.0]);
        let s = Surrogate::new(red, set, c).unwrap().with_subspace(Projection::new(m, inputs).unwrap()).unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[0.3, 0.9, -0.1, -0.6, 0.2, 0.5]);
        let y = s.evaluate(&x).unwrap();
        assert_abs_diff_eq!(y[0], 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(y[1], -0.6, epsilon = 1e-14);
        assert!(s.sobol_index(Subset::single(0)).is_err());
        let json = serde_json::to_string(&s).unwrap();
        let back: Surrogate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn variance_matches_quadrature() {
        let fams = [MarginalFamily::uniform(1.0, 3.0).unwrap(), MarginalFamily::gaussian(0.5, 2.0).unwrap()];
        let set = IndexSet::total_order(2, 3).unwrap();
        let c = DVector::from_fn(set.len(), |i, _| ((i * 7 % 5) as f64 - 2.0) * 0.3);
        let s = Surrogate::new(fams.to_vec(), set, c).unwrap();
        let rule = tensor_rule(&fams, 4).unwrap();
        let y = s.evaluate(rule.points()).unwrap();
        let w = rule.weights();
        let m: f64 = y.iter().zip(w).map(|(a, b)| a * b).sum();
        let v: f64 = y.iter().zip(w).map(|(a, b)| b * (a - m).powi(2)).sum();
        assert_abs_diff_eq!(m, s.mean(), epsilon = 1e-10);
        assert_abs_diff_eq!(v, s.variance(), epsilon = 1e-10);
    }

    #[test]
    fn projection_matches_least_squares_on_polynomials() {
        let fams = [MarginalFamily::legendre(), MarginalFamily::uniform(0.0, 2.0).unwrap()];
        let set = IndexSet::total_order(2, 3).unwrap();
        let model = crate::FnModel::new(2, |x: &[f64]| x[0] * x[0] * x[1] - 0.5 * x[1]);
        let proj = fit_projection(&model, &fams, &set, &tensor_rule(&fams, 3).unwrap()).unwrap();
        let ls = fit_least_squares(&fams, &set, &samples_of(&fams, 40, 9, |x| x[0] * x[0] * x[1] - 0.5 * x[1])).unwrap();
        for (a, b) in proj.coefficients().iter().zip(ls.coefficients().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(fit_projection(&model, &fams[..1], &set, &tensor_rule(&fams, 3).unwrap()).is_err());
    }
}
