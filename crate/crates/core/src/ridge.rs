//! Ridge surrogates `p_n(M^T z)`: subspace estimation, reduced fits and
//! lifting of reduced coefficients onto a full-space basis.
//!
//! All subspace work happens in standardized input coordinates `z`, so that
//! inputs with very different physical scales are comparable.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::orthobasis::{BasisEvaluator, IndexScheme, IndexSet, MarginalFamily};
use crate::pce::{check_orthonormal, fit_on_points, standardize_rows, FitDiagnostics, Projection, SampleSet, Surrogate};
use crate::sampling::sample_product;

/// Orthonormal `d x n` matrix spanning a reduced subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    matrix: DMatrix<f64>,
}

impl Subspace {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let (d, n) = matrix.shape();
        if n == 0 || n >= d {
            return Err(Error::invalid(format!("subspace dimension must satisfy 1 <= n < d, got n = {n}, d = {d}")));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("subspace matrix"));
        }
        check_orthonormal(&matrix)?;
        Ok(Subspace { matrix })
    }

    /// Orthonormalizes the columns of `matrix` first.
    pub fn from_spanning(matrix: &DMatrix<f64>) -> Result<Self> {
        let (d, n) = matrix.shape();
        if n == 0 || n >= d {
            return Err(Error::invalid(format!("subspace dimension must satisfy 1 <= n < d, got n = {n}, d = {d}")));
        }
        linalg::qr_r_factor(matrix)?;
        Subspace::new(linalg::orthonormal_columns(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn reduced_dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Largest principal angle (radians) between the two column spans.
    pub fn angle_to(&self, other: &DMatrix<f64>) -> Result<f64> {
        if other.nrows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.nrows() });
        }
        let q = linalg::orthonormal_columns(other);
        let s = (self.matrix.transpose() * q).singular_values();
        let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(smin.clamp(-1.0, 1.0).acos())
    }

    /// `d` lines of `n` comma-separated values.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for i in 0..self.dim() {
            let row: Vec<String> = self.matrix.row(i).iter().map(|v| format!("{v:.17e}")).collect();
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    /// Reads a headerless `d x n` CSV; columns are re-orthonormalized when
    /// they are not orthonormal to `1e-10` already.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::invalid(format!("subspace CSV: {e}")))?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::invalid(format!("subspace CSV row {}: {e}", line + 1))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let m = crate::pce::matrix_from_rows(&rows)?;
        match Subspace::new(m.clone()) {
            Ok(s) => Ok(s),
            Err(Error::InvalidInput(msg)) if msg.contains("orthonormal") => {
                warn!("subspace CSV columns are not orthonormal; orthonormalizing");
                Subspace::from_spanning(&m)
            }
            Err(e) => Err(e),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceMethod {
    /// Outer product of local linear gradients only.
    Opg,
    /// OPG followed by variable-projection refinement of a polynomial ridge.
    OpgRefined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubspaceConfig {
    pub method: SubspaceMethod,
    /// Neighbourhood size of the local regressions; `max(2d, 20)` if unset.
    pub neighbors: Option<usize>,
    /// Total degree of the reduced polynomial used in the refinement. It is
    /// lowered when the sample count cannot support it.
    pub refine_degree: u32,
    pub max_iterations: usize,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        SubspaceConfig { method: SubspaceMethod::OpgRefined, neighbors: None, refine_degree: 4, max_iterations: 200 }
    }
}

/// Minimum sample count per input dimension for subspace estimation.
pub const SAMPLES_PER_DIM: usize = 10;

/// Reduced-coordinate family on `[-sqrt(d), sqrt(d)]`.
pub fn reduced_family(d: usize) -> MarginalFamily {
    let l = (d as f64).sqrt();
    MarginalFamily::Uniform { lower: -l, upper: l }
}

/// Estimates an `n`-dimensional subspace of dominant variation.
pub fn estimate_subspace(
    samples: &SampleSet,
    input_families: &[MarginalFamily],
    n: usize,
    config: &SubspaceConfig,
) -> Result<Subspace> {
    let d = samples.dim();
    if input_families.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: input_families.len() });
    }
    if n == 0 {
        return Err(Error::invalid("subspace dimension must be at least 1"));
    }
    if n >= d {
        return Err(Error::invalid(format!("requested n = {n} >= d = {d}; use full-space fit")));
    }
    let nsamp = samples.len();
    if nsamp < SAMPLES_PER_DIM * d {
        return Err(Error::TooFewSamples { got: nsamp, needed: SAMPLES_PER_DIM * d, context: "subspace estimation" });
    }
    let f = samples.f();
    let fmean = f.mean();
    let spread = f.iter().map(|v| (v - fmean).abs()).fold(0.0, f64::max);
    if spread <= 1e-14 * fmean.abs().max(1.0) {
        return Err(Error::ZeroVariance("outputs are constant; no direction of variation"));
    }
    let z = standardize_rows(input_families, samples.x());
    let k = config.neighbors.unwrap_or((2 * d).max(20)).min(nsamp - 1);
    let m0 = opg(&z, f, n, k)?;
    let m = match config.method {
        SubspaceMethod::Opg => m0,
        SubspaceMethod::OpgRefined => {
            let mut p = config.refine_degree.max(1);
            while p > 1 && binomial(n + p as usize, p as usize) * 2 > nsamp {
                p -= 1;
            }
            refine(&z, f, m0, p, config.max_iterations)?
        }
    };
    Subspace::new(m)
}

fn binomial(n: usize, k: usize) -> usize {
    (1..=k).fold(1usize, |acc, i| acc * (n + 1 - i) / i)
}

/// Outer product of gradients from locally weighted linear regressions.
fn opg(z: &DMatrix<f64>, f: &DVector<f64>, n: usize, k: usize) -> Result<DMatrix<f64>> {
    let (nsamp, d) = z.shape();
    let rows: Vec<Vec<f64>> = (0..nsamp).map(|i| z.row(i).iter().copied().collect()).collect();
    let outer = (0..nsamp)
        .into_par_iter()
        .map(|i| {
            let mut dist: Vec<(f64, usize)> = rows
                .iter()
                .enumerate()
                .map(|(j, r)| (r.iter().zip(&rows[i]).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), j))
                .collect();
            dist.select_nth_unstable_by(k, |a, b| a.0.partial_cmp(&b.0).unwrap());
            let nb = &dist[..=k];
            let h2 = nb.iter().map(|p| p.0).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let mut a = DMatrix::zeros(k + 1, d + 1);
            let mut y = DVector::zeros(k + 1);
            for (row, &(d2, j)) in nb.iter().enumerate() {
                let w = (-d2 / h2).exp().sqrt();
                a[(row, 0)] = w;
                for c in 0..d {
                    a[(row, c + 1)] = w * (rows[j][c] - rows[i][c]);
                }
                y[row] = w * f[j];
            }
            let mut out = DMatrix::zeros(d, d);
            // degenerate neighbourhoods contribute nothing
            if let Ok(ls) = linalg::least_squares(&a, &y) {
                let b = ls.coefficients.rows(1, d);
                out = &b * b.transpose();
            }
            out
        })
        .reduce(|| DMatrix::zeros(d, d), |a, b| a + b);
    let (vals, vecs) = linalg::sorted_symmetric_eigen(&(outer / nsamp as f64));
    if vals[0] <= 0.0 {
        return Err(Error::Numerical("local gradients vanish everywhere".into()));
    }
    Ok(vecs.columns(0, n).into_owned())
}

struct ProjectedFit {
    residual: DVector<f64>,
    objective: f64,
    design: DMatrix<f64>,
    /// `slopes[(i, l)]` is the derivative of the fitted reduced polynomial
    /// along reduced coordinate `l` at sample `i`.
    slopes: DMatrix<f64>,
}

fn projected_fit(z: &DMatrix<f64>, f: &DVector<f64>, m: &DMatrix<f64>, ev: &BasisEvaluator) -> Result<ProjectedFit> {
    let u = z * m;
    let (nsamp, n) = u.shape();
    let q = ev.len();
    let mut design = DMatrix::zeros(nsamp, q);
    let mut grads: Vec<DMatrix<f64>> = vec![DMatrix::zeros(nsamp, q); n];
    let mut row = vec![0.0; q];
    let mut g = vec![vec![0.0; q]; n];
    let mut pt = vec![0.0; n];
    for i in 0..nsamp {
        for l in 0..n {
            pt[l] = u[(i, l)];
        }
        ev.eval_row_with_gradient(&pt, &mut row, &mut g);
        for j in 0..q {
            design[(i, j)] = row[j];
            for l in 0..n {
                grads[l][(i, j)] = g[l][j];
            }
        }
    }
    let ls = linalg::least_squares(&design, f)?;
    let residual = f - &design * &ls.coefficients;
    let mut slopes = DMatrix::zeros(nsamp, n);
    for l in 0..n {
        slopes.set_column(l, &(&grads[l] * &ls.coefficients));
    }
    Ok(ProjectedFit { objective: residual.norm_squared(), residual, design, slopes })
}

/// Levenberg-Marquardt on the Grassmannian for the variable-projection
/// objective `min_M min_c ||f - V(Z M) c||^2`.
fn refine(z: &DMatrix<f64>, f: &DVector<f64>, m0: DMatrix<f64>, degree: u32, max_iter: usize) -> Result<DMatrix<f64>> {
    let (nsamp, d) = z.shape();
    let n = m0.ncols();
    let set = IndexSet::total_order(n, degree)?;
    let ev = BasisEvaluator::new(&vec![reduced_family(d); n], &set)?;
    let mut m = m0;
    let mut cur = match projected_fit(z, f, &m, &ev) {
        Ok(c) => c,
        Err(e) => {
            debug!("refinement skipped: {e}");
            return Ok(m);
        }
    };
    let mut lambda = 1e-3;
    let dn = d * n;
    for it in 0..max_iter {
        let q = linalg::orthonormal_columns(&cur.design);
        let mut kmat = DMatrix::zeros(nsamp, dn);
        for i in 0..nsamp {
            for k in 0..d {
                for l in 0..n {
                    kmat[(i, k * n + l)] = z[(i, k)] * cur.slopes[(i, l)];
                }
            }
        }
        let proj_k = &kmat - &q * (q.transpose() * &kmat);
        let horizontal = DMatrix::identity(d, d) - &m * m.transpose();
        let p = horizontal.kronecker(&DMatrix::<f64>::identity(n, n));
        let jac = -(proj_k * p);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &cur.residual;
        let floor = 1e-12 * jtj.trace() / dn as f64;
        let mut accepted = None;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..dn {
                a[(i, i)] += lambda * (jtj[(i, i)] + floor);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let delta = DMatrix::from_fn(d, n, |k, l| step[k * n + l]);
            let cand = linalg::orthonormal_columns(&(&m + delta));
            if let Ok(fit) = projected_fit(z, f, &cand, &ev) {
                if fit.objective < cur.objective {
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = Some((cand, fit));
                    break;
                }
            }
            lambda *= 4.0;
        }
        let Some((cand, fit)) = accepted else {
            debug!("refinement stalled after {it} iterations");
            break;
        };
        let decrease = cur.objective - fit.objective;
        m = cand;
        cur = fit;
        if decrease < 1e-10 * cur.objective {
            debug!("refinement converged after {} iterations", it + 1);
            break;
        }
    }
    Ok(m)
}

/// Least-squares fit of a polynomial in the reduced coordinates `M^T z(x)`.
pub fn fit_ridge(
    samples: &SampleSet,
    input_families: &[MarginalFamily],
    subspace: &Subspace,
    scheme: IndexScheme,
) -> Result<Surrogate> {
    let d = samples.dim();
    if input_families.len() != d || subspace.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: subspace.dim().min(input_families.len()) });
    }
    let n = subspace.reduced_dim();
    let set = IndexSet::new(scheme, n, crate::orthobasis::DEFAULT_SIZE_CAP)?;
    if samples.len() < set.len() {
        return Err(Error::Underdetermined { rows: samples.len(), cols: set.len() });
    }
    let projection = Projection::new(subspace.matrix().clone(), input_families.to_vec())?;
    let u = projection.project(samples.x())?;
    let l = (d as f64).sqrt();
    let outside = u.iter().filter(|v| v.abs() > l).count();
    if outside > 0 {
        warn!("{outside} projected coordinates fall outside the reduced box [-{l:.3}, {l:.3}]");
    }
    let fams = vec![reduced_family(d); n];
    fit_on_points(&fams, &set, &u, samples.f())?.with_subspace(projection)
}

/// Outcome of a coefficient lift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    pub lift_samples: usize,
    pub residual_norm: f64,
    /// Residual divided by the norm of the reduced-surrogate outputs.
    pub relative_residual: f64,
}

/// Relative residual above which a lift is rejected.
pub const LIFT_TOLERANCE: f64 = 1e-8;

/// Default number of lift samples for a full basis of size `r`.
pub fn default_lift_samples(r: usize) -> usize {
    (2 * r).max(r + 50)
}

/// Re-expresses a ridge surrogate in `full_index_set` by solving
/// `A_d alpha = A_n beta` on points drawn from the input measure.
pub fn lift_coefficients(
    ridge: &Surrogate,
    full_index_set: &IndexSet,
    lift_sample_count: Option<usize>,
    seed: u64,
) -> Result<(Surrogate, LiftReport)> {
    let projection = ridge
        .subspace()
        .ok_or_else(|| Error::invalid("surrogate has no subspace; nothing to lift"))?;
    let inputs = projection.input_families.clone();
    if full_index_set.dim() != inputs.len() {
        return Err(Error::DimensionMismatch { expected: inputs.len(), got: full_index_set.dim() });
    }
    let r = full_index_set.len();
    let count = lift_sample_count.unwrap_or_else(|| default_lift_samples(r));
    if count < r {
        return Err(Error::TooFewSamples { got: count, needed: r, context: "coefficient lift" });
    }
    let needed = ridge.index_set().max_total_degree();
    if let IndexScheme::TotalOrder(p) = full_index_set.scheme() {
        if needed > p {
            return Err(Error::invalid(format!(
                "reduced basis reaches total degree {needed} but the full basis has total order {p}; \
                 the ridge is not representable"
            )));
        }
    }
    let x = sample_product(&inputs, count, seed);
    let target = ridge.evaluate(&x)?;
    let a = BasisEvaluator::new(&inputs, full_index_set)?.design(&x)?;
    let ls = linalg::least_squares(&a, &target)?;
    let scale = target.norm().max(f64::MIN_POSITIVE);
    let report =
        LiftReport { lift_samples: count, residual_norm: ls.residual_norm, relative_residual: ls.residual_norm / scale };
    if report.relative_residual > LIFT_TOLERANCE {
        return Err(Error::LiftResidual { residual: report.relative_residual, threshold: LIFT_TOLERANCE });
    }
    let diag = FitDiagnostics {
        samples: count,
        residual_norm: ls.residual_norm,
        rank: ls.rank,
        condition_estimate: ls.condition_estimate,
    };
    let lifted = Surrogate::new(inputs, full_index_set.clone(), ls.coefficients)?.with_diagnostics(diag);
    Ok((lifted, report))
}
