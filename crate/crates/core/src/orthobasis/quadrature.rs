use nalgebra::{DMatrix, SymmetricEigen};

use super::family::MarginalFamily;
use super::index_set::DEFAULT_SIZE_CAP;
use crate::error::{Error, Result};

/// Quadrature points (one row per point, physical units) and weights
/// normalized to sum to one.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    points: DMatrix<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(points: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.nrows() != weights.len() {
            return Err(Error::DimensionMismatch { expected: points.nrows(), got: weights.len() });
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("quadrature weights must be positive"));
        }
        Ok(QuadratureRule { points, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted sum of `f` over the points.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let d = self.dim();
        let mut row = vec![0.0; d];
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            for j in 0..d {
                row[j] = self.points[(i, j)];
            }
            acc += w * f(&row);
        }
        acc
    }
}

/// `n`-point Gauss rule for the family's density, in standardized
/// coordinates: nodes ascending, weights summing to one.
pub(crate) fn gauss_rule_std(family: &MarginalFamily, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::invalid("gauss rule needs at least one point"));
    }
    // Jacobi matrix of the orthonormal recurrence; zero diagonal for both
    // families.
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i == j + 1 {
            family.sqrt_beta(i)
        } else if j == i + 1 {
            family.sqrt_beta(j)
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if nodes.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical("Jacobi matrix eigen-decomposition failed".into()));
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Newton polish on psi_n and Christoffel weights 1 / sum_k psi_k^2.
    let mut vals = vec![0.0; n + 1];
    let mut ders = vec![0.0; n + 1];
    let mut weights = Vec::with_capacity(n);
    for z in nodes.iter_mut() {
        for _ in 0..3 {
            family.eval_all_with_derivative_std(*z, &mut vals, &mut ders);
            if ders[n] != 0.0 {
                let step = vals[n] / ders[n];
                if step.is_finite() && step.abs() < 1e-3 * (1.0 + z.abs()) {
                    *z -= step;
                }
            }
        }
        family.eval_all_std(*z, &mut vals);
        let christoffel: f64 = vals[..n].iter().map(|v| v * v).sum();
        weights.push(1.0 / christoffel);
    }
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Numerical("gauss weights are not finite".into()));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    // Symmetric families: enforce exact symmetry of the rule.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let z = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -z;
        nodes[j] = z;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// One-dimensional Gauss rule with `n_points` nodes in physical units, exact
/// for polynomials up to degree `2 n_points - 1` under the family's density.
pub fn gauss_rule(family: &MarginalFamily, n_points: usize) -> Result<QuadratureRule> {
    family.validate()?;
    let (nodes, weights) = gauss_rule_std(family, n_points)?;
    let points = DMatrix::from_iterator(n_points, 1, nodes.iter().map(|&z| family.physical(z)));
    QuadratureRule::new(points, weights)
}

/// Full tensor product of `(level + 1)`-point rules, capped at
/// [`DEFAULT_SIZE_CAP`] points.
pub fn tensor_rule(families: &[MarginalFamily], level: usize) -> Result<QuadratureRule> {
    tensor_rule_capped(families, level, DEFAULT_SIZE_CAP)
}

pub fn tensor_rule_capped(families: &[MarginalFamily], level: usize, cap: u128) -> Result<QuadratureRule> {
    if families.is_empty() {
        return Err(Error::invalid("tensor rule needs at least one family"));
    }
    let n = level + 1;
    let d = families.len();
    let size = (n as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::CapExceeded { what: "tensor quadrature rule", size, cap });
    }
    let rules = families
        .iter()
        .map(|f| {
            f.validate()?;
            gauss_rule_std(f, n)
        })
        .collect::<Result<Vec<_>>>()?;
    let m = size as usize;
    let mut points = DMatrix::zeros(m, d);
    let mut weights = vec![1.0; m];
    // Last dimension varies fastest.
    for i in 0..m {
        let mut rem = i;
        for j in (0..d).rev() {
            let k = rem % n;
            rem /= n;
            points[(i, j)] = families[j].physical(rules[j].0[k]);
            weights[i] *= rules[j].1[k];
        }
    }
    QuadratureRule::new(points, weights)
}
