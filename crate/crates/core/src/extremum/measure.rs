use std::fmt;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kde::{BandwidthRule, KernelDensity};
use crate::error::{Error, Result};
use crate::linalg::sorted_symmetric_eigen;
use crate::orthobasis::{std_normal_cdf, MarginalFamily};
use crate::sampling::{stream_rng, BLOCK};

/// Eigenvalue floor used when repairing an indefinite correlation matrix.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Retained samples required per input dimension.
pub const SAMPLES_PER_DIM: usize = 10;

/// Which outputs Monte Carlo filtering keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// Largest outputs.
    Top,
    /// Smallest outputs.
    Bottom,
    /// No filtering: every sample is kept.
    All,
}

impl Tail {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tail::Top => "top",
            Tail::Bottom => "bottom",
            Tail::All => "all",
        }
    }
}

impl fmt::Display for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Tail {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top" => Ok(Tail::Top),
            "bottom" => Ok(Tail::Bottom),
            "all" | "none" => Ok(Tail::All),
            _ => Err(Error::invalid(format!("unknown tail '{s}'; expected top, bottom or all"))),
        }
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 0.5) {
        return Err(Error::invalid(format!("filter fraction must lie in (0, 0.5), got {fraction}")));
    }
    Ok(())
}

/// Number of rows a tail of `fraction` keeps before ties are added.
pub fn tail_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Rows of `x` whose outputs fall in the requested tail. All rows tied with
/// the cutoff value are kept, so slightly more than `ceil(fraction N)` rows
/// can be returned. Row order is preserved.
pub fn mcf_filter(x: &DMatrix<f64>, y: &[f64], fraction: f64, tail: Tail) -> Result<DMatrix<f64>> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("filter outputs"));
    }
    if tail == Tail::All {
        return Ok(x.clone());
    }
    check_fraction(fraction)?;
    let needed = SAMPLES_PER_DIM * d;
    if fraction * n as f64 + 1e-9 < needed as f64 {
        return Err(Error::TooFewSamples { got: tail_count(n, fraction), needed, context: "Monte Carlo filtering" });
    }
    let k = tail_count(n, fraction);
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let keep: Vec<usize> = match tail {
        Tail::Top => {
            let cut = sorted[n - k];
            (0..n).filter(|&i| y[i] >= cut).collect()
        }
        Tail::Bottom => {
            let cut = sorted[k - 1];
            (0..n).filter(|&i| y[i] <= cut).collect()
        }
        Tail::All => unreachable!(),
    };
    Ok(x.select_rows(keep.iter()))
}

/// Clips eigenvalues below [`EIGEN_FLOOR`] and rescales to a unit diagonal.
pub fn repair_correlation(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: c.ncols() });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation matrix"));
    }
    let sym = (c + c.transpose()) * 0.5;
    let (vals, vecs) = sorted_symmetric_eigen(&sym);
    let clipped = DMatrix::from_diagonal(&DVector::from_iterator(n, vals.iter().map(|&v| v.max(EIGEN_FLOOR))));
    let mut out = &vecs * clipped * vecs.transpose();
    let diag: Vec<f64> = (0..n).map(|i| out[(i, i)].sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] /= diag[i] * diag[j];
        }
    }
    let out = (&out + out.transpose()) * 0.5;
    Ok(out)
}

/// Symmetric square root of a positive semidefinite matrix.
fn symmetric_sqrt(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sorted_symmetric_eigen(c);
    let n = vals.len();
    if vals.iter().any(|&v| v < -1e-12 || !v.is_finite()) {
        return Err(Error::Numerical("correlation matrix is not positive semidefinite after repair".into()));
    }
    let roots = DMatrix::from_diagonal(&DVector::from_iterator(n, vals.iter().map(|v| v.max(0.0).sqrt())));
    Ok(&vecs * roots * vecs.transpose())
}

/// Pearson correlation matrix of the columns of `x`.
pub fn pearson_correlation(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, needed: 2, context: "correlation" });
    }
    let means: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - means[j]);
    let cov = centered.transpose() * &centered;
    let sd: Vec<f64> = (0..d).map(|j| cov[(j, j)].sqrt()).collect();
    if let Some(j) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::invalid(format!("degenerate marginal: dimension {} has zero variance", j + 1)));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { cov[(i, j)] / (sd[i] * sd[j]) }))
}

/// Points drawn from a [`FilteredMeasure`] together with their marginal
/// probability levels.
#[derive(Clone, Debug)]
pub struct CopulaSample {
    pub x: DMatrix<f64>,
    /// `F_k(x_k)` for every point and dimension, in `[0, 1]`.
    pub u: DMatrix<f64>,
}

/// Input distribution of the samples retained by filtering: kernel density
/// marginals coupled by a Gaussian copula with the empirical correlation.
#[derive(Clone, Debug)]
pub struct FilteredMeasure {
    marginals: Vec<KernelDensity>,
    raw_correlation: DMatrix<f64>,
    correlation: DMatrix<f64>,
    factor: DMatrix<f64>,
    samples: DMatrix<f64>,
    tail: Tail,
    fraction: f64,
}

impl FilteredMeasure {
    /// Characterizes retained samples. `families` supplies each marginal's
    /// support; `fraction` is recorded as given (1 for [`Tail::All`]).
    pub fn characterize(
        samples: DMatrix<f64>,
        families: &[MarginalFamily],
        tail: Tail,
        fraction: f64,
        rule: BandwidthRule,
    ) -> Result<Self> {
        let (n, d) = samples.shape();
        if families.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: families.len() });
        }
        if n < 2 || n < SAMPLES_PER_DIM * d {
            return Err(Error::TooFewSamples { got: n, needed: (SAMPLES_PER_DIM * d).max(2), context: "measure characterization" });
        }
        let fraction = if tail == Tail::All { 1.0 } else { fraction };
        if tail != Tail::All {
            check_fraction(fraction)?;
        }
        let raw_correlation = pearson_correlation(&samples)?;
        let marginals = (0..d)
            .into_par_iter()
            .map(|j| {
                let col: Vec<f64> = samples.column(j).iter().copied().collect();
                KernelDensity::fit(&col, families[j].support(), rule)
                    .map_err(|e| Error::invalid(format!("marginal {}: {e}", j + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let correlation = repair_correlation(&raw_correlation)?;
        let shift = (&correlation - &raw_correlation).amax();
        if shift > 1e-8 {
            warn!("correlation matrix repaired (largest entry change {shift:.2e})");
        }
        let factor = symmetric_sqrt(&correlation)?;
        Ok(FilteredMeasure { marginals, raw_correlation, correlation, factor, samples, tail, fraction })
    }

    /// Builds a measure directly from marginals and a correlation matrix.
    pub fn from_parts(marginals: Vec<KernelDensity>, correlation: DMatrix<f64>) -> Result<Self> {
        let d = marginals.len();
        if correlation.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, got: correlation.nrows() });
        }
        let repaired = repair_correlation(&correlation)?;
        let factor = symmetric_sqrt(&repaired)?;
        Ok(FilteredMeasure {
            marginals,
            raw_correlation: correlation,
            correlation: repaired,
            factor,
            samples: DMatrix::zeros(0, d),
            tail: Tail::All,
            fraction: 1.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[KernelDensity] {
        &self.marginals
    }

    /// Repaired correlation used by the copula.
    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    /// Pearson correlation of the retained samples before repair.
    pub fn raw_correlation(&self) -> &DMatrix<f64> {
        &self.raw_correlation
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    /// Marginal probability levels `F_k(x_k)` of physical points.
    pub fn marginal_levels(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.ncols() });
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| self.marginals[j].cdf(x[(i, j)])))
    }

    /// Draws `count` points: correlated standard normals through the normal
    /// CDF, then through each marginal's inverse CDF.
    pub fn copula_sample(&self, count: usize, seed: u64) -> CopulaSample {
        let d = self.dim();
        let blocks = count.div_ceil(BLOCK);
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(seed, b as u64);
                let m = BLOCK.min(count - b * BLOCK);
                let mut xs = Vec::with_capacity(m * d);
                let mut us = Vec::with_capacity(m * d);
                let mut z = DVector::zeros(d);
                for _ in 0..m {
                    for v in z.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                    let y = &self.factor * &z;
                    for k in 0..d {
                        let u = std_normal_cdf(y[k]);
                        us.push(u);
                        xs.push(self.marginals[k].inverse_cdf(u));
                    }
                }
                (xs, us)
            })
            .collect();
        let mut xs = Vec::with_capacity(count * d);
        let mut us = Vec::with_capacity(count * d);
        for (x, u) in rows {
            xs.extend(x);
            us.extend(u);
        }
        CopulaSample { x: DMatrix::from_row_slice(count, d, &xs), u: DMatrix::from_row_slice(count, d, &us) }
    }

    /// Retained samples as CSV with a header row.
    pub fn samples_csv(&self, names: &[String]) -> Result<String> {
        matrix_csv(&self.samples, names, false)
    }

    /// Correlation matrix as CSV; the first column holds the row names.
    pub fn correlation_csv(&self, names: &[String]) -> Result<String> {
        matrix_csv(&self.correlation, names, true)
    }
}

fn matrix_csv(m: &DMatrix<f64>, names: &[String], row_names: bool) -> Result<String> {
    if names.len() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.ncols(), got: names.len() });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut header: Vec<String> = Vec::new();
    if row_names {
        header.push(String::new());
    }
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(io)?;
    for i in 0..m.nrows() {
        let mut rec: Vec<String> = Vec::new();
        if row_names {
            rec.push(names[i].clone());
        }
        rec.extend(m.row(i).iter().map(|v| format!("{v:.17e}")));
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}
