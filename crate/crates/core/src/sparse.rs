//! Least angle regression and the degree-adaptive sparse fit built on it.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::orthobasis::{BasisEvaluator, IndexSet, MarginalFamily};
use crate::pce::{FitDiagnostics, SampleSet, Surrogate};

/// Columns whose spread falls below this fraction of their norm are
/// treated as constant.
const CONSTANT_TOL: f64 = 1e-12;
/// Relative residual below which an entering column counts as collinear
/// with the active set.
const COLLINEAR_TOL: f64 = 1e-8;

/// Sequence of LARS states, starting from the all-zero model.
#[derive(Clone, Debug, PartialEq)]
pub struct LarsPath {
    /// Design-matrix columns in order of entry.
    pub entered: Vec<usize>,
    /// Coefficients on the original design columns after each step; the
    /// first entry is the initial all-zero state.
    pub coefficients: Vec<DVector<f64>>,
    /// Intercept after each step.
    pub intercepts: Vec<f64>,
    /// Columns skipped because they were collinear with the active set.
    pub skipped: Vec<usize>,
}

impl LarsPath {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Classic LARS on the centered, unit-norm columns of `design`. Constant
/// columns never enter; the response mean acts as intercept. At most
/// `min(m, N - 1)` predictors enter, `m` being the number of
/// non-constant columns.
pub fn lars_select(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<LarsPath> {
    let (n, r) = design.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n == 0 {
        return Err(Error::invalid("LARS needs at least one sample"));
    }
    if design.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LARS inputs"));
    }
    let ybar = y.mean();
    let yc = y.add_scalar(-ybar);

    let mut cols = Vec::new();
    let mut means = Vec::new();
    let mut norms = Vec::new();
    for j in 0..r {
        let c = design.column(j);
        let m = c.mean();
        let centered = c.add_scalar(-m);
        let nrm = centered.norm();
        if nrm > CONSTANT_TOL * c.norm().max(f64::MIN_POSITIVE) && nrm > 0.0 {
            cols.push(j);
            means.push(m);
            norms.push(nrm);
        }
    }
    let m = cols.len();
    let xs = DMatrix::from_fn(n, m, |i, k| (design[(i, cols[k])] - means[k]) / norms[k]);
    let const_col = (0..r).find(|j| !cols.contains(j) && design.column(*j).iter().any(|v| *v != 0.0));

    let to_original = |beta: &DVector<f64>| -> (DVector<f64>, f64) {
        let mut coef = DVector::zeros(r);
        let mut intercept = ybar;
        for k in 0..m {
            coef[cols[k]] = beta[k] / norms[k];
            intercept -= beta[k] * means[k] / norms[k];
        }
        if let Some(c0) = const_col {
            coef[c0] = intercept / design[(0, c0)];
        }
        (coef, intercept)
    };

    let mut beta = DVector::zeros(m);
    let mut mu = DVector::zeros(n);
    let mut active: Vec<usize> = Vec::new();
    let mut excluded = vec![false; m];
    let mut path = LarsPath { entered: Vec::new(), coefficients: Vec::new(), intercepts: Vec::new(), skipped: Vec::new() };
    let (c0, i0) = to_original(&beta);
    path.coefficients.push(c0);
    path.intercepts.push(i0);

    let max_pred = m.min(n - 1);
    let ynorm = yc.norm();
    if ynorm <= 1e-13 * y.norm() || max_pred == 0 {
        return Ok(path);
    }
    let tiny = 1e-12 * ynorm;
    let mut pending: Option<usize> = None;

    loop {
        let corr = xs.transpose() * (&yc - &mu);
        let candidate = match pending.take() {
            Some(j) => Some(j),
            None if active.is_empty() => (0..m)
                .filter(|&j| !excluded[j])
                .max_by(|&a, &b| corr[a].abs().partial_cmp(&corr[b].abs()).unwrap()),
            None => None,
        };
        if let Some(j) = candidate {
            if corr[j].abs() <= tiny {
                break;
            }
            if !active.is_empty() && is_collinear(&xs, &active, j) {
                warn!("design column {} is collinear with the active set; skipped", cols[j]);
                excluded[j] = true;
                path.skipped.push(cols[j]);
            } else {
                active.push(j);
                path.entered.push(cols[j]);
            }
        }
        let big_c = active.iter().map(|&j| corr[j].abs()).fold(0.0, f64::max);
        if big_c <= tiny {
            break;
        }
        // columns tied with the active set are either collinear with it or
        // enter together
        for j in 0..m {
            if excluded[j] || active.contains(&j) || corr[j].abs() < big_c * (1.0 - 1e-9) {
                continue;
            }
            if is_collinear(&xs, &active, j) {
                warn!("design column {} is collinear with the active set; skipped", cols[j]);
                excluded[j] = true;
                path.skipped.push(cols[j]);
            } else if active.len() < max_pred {
                active.push(j);
                path.entered.push(cols[j]);
            }
        }
        if active.len() >= max_pred && candidate.is_none() {
            break;
        }
        let signs: Vec<f64> = active.iter().map(|&j| corr[j].signum()).collect();
        let xa = DMatrix::from_fn(n, active.len(), |i, k| xs[(i, active[k])] * signs[k]);
        let gram = xa.transpose() * &xa;
        let Some(chol) = gram.cholesky() else {
            return Err(Error::Numerical("active Gram matrix lost positive definiteness".into()));
        };
        let w0 = chol.solve(&DVector::from_element(active.len(), 1.0));
        let aa = 1.0 / w0.sum().sqrt();
        let w = w0 * aa;
        let u = &xa * &w;
        let a = xs.transpose() * &u;
        let gamma_ls = big_c / aa;
        let mut gamma = gamma_ls;
        let mut next = None;
        if active.len() < max_pred {
            for j in 0..m {
                if excluded[j] || active.contains(&j) {
                    continue;
                }
                for g in [(big_c - corr[j]) / (aa - a[j]), (big_c + corr[j]) / (aa + a[j])] {
                    if g.is_finite() && g > 1e-14 * gamma_ls && g < gamma {
                        gamma = g;
                        next = Some(j);
                    }
                }
            }
        }
        mu += &u * gamma;
        for (k, &j) in active.iter().enumerate() {
            beta[j] += gamma * w[k] * signs[k];
        }
        let (c, i) = to_original(&beta);
        path.coefficients.push(c);
        path.intercepts.push(i);
        match next {
            Some(j) => pending = Some(j),
            None => break,
        }
    }
    Ok(path)
}

fn is_collinear(xs: &DMatrix<f64>, active: &[usize], j: usize) -> bool {
    let xa = DMatrix::from_fn(xs.nrows(), active.len(), |i, k| xs[(i, active[k])]);
    let target = xs.column(j).into_owned();
    match linalg::least_squares(&xa, &target) {
        Ok(ls) => ls.residual_norm < COLLINEAR_TOL,
        Err(_) => true,
    }
}

/// Leave-one-out mean squared error of the least-squares fit of `y` on the
/// columns of `a`, from the hat-matrix diagonal. Infinite when some sample
/// has unit leverage.
pub fn loo_error(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let ls = linalg::least_squares(a, y)?;
    let q = linalg::orthonormal_columns(a);
    let e = y - a * &ls.coefficients;
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        let h = q.row(i).norm_squared();
        let denom = 1.0 - h;
        if denom <= 1e-12 {
            if e[i].abs() <= 1e-12 * y.norm().max(1.0) {
                continue;
            }
            return Ok(f64::INFINITY);
        }
        acc += (e[i] / denom).powi(2);
    }
    Ok(acc / a.nrows() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeCandidate {
    pub degree: u32,
    pub support: usize,
    pub loo_error: f64,
}

#[derive(Clone, Debug)]
pub struct AdaptiveLarsFit {
    pub surrogate: Surrogate,
    pub degree: u32,
    pub candidates: Vec<DegreeCandidate>,
}

/// Runs LARS on total-order bases of degree `1..=max_degree`, keeps each
/// path's entered terms, scores the least-squares refit on them by LOO
/// error and returns the best refit.
pub fn adaptive_lars_fit(samples: &SampleSet, families: &[MarginalFamily], max_degree: u32) -> Result<AdaptiveLarsFit> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, needed: 2, context: "adaptive LARS" });
    }
    if samples.dim() != families.len() {
        return Err(Error::DimensionMismatch { expected: families.len(), got: samples.dim() });
    }
    if max_degree == 0 {
        return Err(Error::invalid("maximum LARS degree must be at least 1"));
    }
    let y = samples.f();
    let fits: Vec<Result<(DegreeCandidate, Surrogate)>> = (1..=max_degree)
        .into_par_iter()
        .map(|p| {
            let full = IndexSet::total_order(families.len(), p)?;
            let design = BasisEvaluator::new(families, &full)?.design(samples.x())?;
            let path = lars_select(&design, y)?;
            // keep the refit overdetermined by at least one sample
            let mut kept: Vec<usize> = path.entered.iter().copied().filter(|&j| j != 0).take(n.saturating_sub(2)).collect();
            kept.sort_unstable();
            let pruned = full.select(&kept)?;
            let mut positions = vec![0];
            positions.extend(kept.iter().copied());
            let a = DMatrix::from_fn(n, positions.len(), |i, k| design[(i, positions[k])]);
            let ls = linalg::least_squares(&a, y);
            let (loo, surrogate) = match ls {
                Ok(ls) => {
                    let loo = loo_error(&a, y)?;
                    let diag = FitDiagnostics {
                        samples: n,
                        residual_norm: ls.residual_norm,
                        rank: ls.rank,
                        condition_estimate: ls.condition_estimate,
                    };
                    (loo, Surrogate::new(families.to_vec(), pruned, ls.coefficients)?.with_diagnostics(diag))
                }
                Err(Error::RankDeficient { .. }) => {
                    (f64::INFINITY, Surrogate::new(families.to_vec(), pruned.clone(), DVector::zeros(pruned.len()))?)
                }
                Err(e) => return Err(e),
            };
            Ok((DegreeCandidate { degree: p, support: positions.len(), loo_error: loo }, surrogate))
        })
        .collect();
    let mut best: Option<(DegreeCandidate, Surrogate)> = None;
    let mut candidates = Vec::new();
    for fit in fits {
        let (cand, sur) = fit?;
        candidates.push(cand.clone());
        let better = match &best {
            None => true,
            Some((b, _)) => cand.loo_error < b.loo_error || (cand.loo_error == b.loo_error && cand.support < b.support),
        };
        if better {
            best = Some((cand, sur));
        }
    }
    let (cand, surrogate) = best.expect("at least one degree");
    if !cand.loo_error.is_finite() {
        return Err(Error::Numerical("no candidate degree gave a finite leave-one-out error".into()));
    }
    Ok(AdaptiveLarsFit { surrogate, degree: cand.degree, candidates })
}
