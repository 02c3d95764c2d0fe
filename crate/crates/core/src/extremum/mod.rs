//! Extremum Sobol' indices: sensitivity indices of a model restricted to the
//! inputs that produce its largest or smallest outputs.
//!
//! A pool of inputs is pushed through the model (or a cheap surrogate of
//! it), the extreme tail is kept, and the retained inputs are summarized by
//! kernel density marginals and a Gaussian copula. A polynomial basis is
//! orthogonalized against that correlated measure by QR, the model is fitted
//! on fresh draws, and the output variance is split by covariance
//! decomposition.

mod basis;
mod kde;
mod measure;

pub use basis::{BaseBasis, CorrelatedBasis, ExtremumFit, SAMPLES_PER_TERM};
pub use kde::{BandwidthRule, KernelDensity, INVERSION_TOL};
pub use measure::{
    mcf_filter, pearson_correlation, repair_correlation, tail_count, CopulaSample, FilteredMeasure, Tail, EIGEN_FLOOR,
};

use log::info;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::orthobasis::{IndexScheme, IndexSet, MarginalFamily};
use crate::pce::{fit_least_squares, SampleSet, Surrogate};
use crate::report::{ReportKind, ReportMetadata, SensitivityReport};
use crate::ridge::{estimate_subspace, fit_ridge, SubspaceConfig};
use crate::sampling::{derive_seed, sample_product};
use crate::subset::Subset;

/// Settings of the tail analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtremumConfig {
    /// Share of the pool kept in each tail.
    pub fraction: f64,
    pub pool_size: usize,
    /// Total degree of the expansion fitted under the filtered measure.
    pub degree: u32,
    /// Copula draws used to orthogonalize the basis.
    pub basis_samples: usize,
    /// Model evaluations for the fit; twice the basis size if unset.
    pub fit_samples: Option<usize>,
    pub base: BaseBasis,
    pub bandwidth: BandwidthRule,
}

impl Default for ExtremumConfig {
    fn default() -> Self {
        ExtremumConfig {
            fraction: 0.05,
            pool_size: 100_000,
            degree: 3,
            basis_samples: 10_000,
            fit_samples: None,
            base: BaseBasis::InputFamily,
            bandwidth: BandwidthRule::Silverman,
        }
    }
}

/// Model that scores the filtering pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolVariant {
    /// The model itself.
    TrueModel,
    /// Total-order expansion fitted on `samples` model evaluations.
    Full { degree: u32, samples: usize },
    /// Ridge expansion over an estimated `dim`-dimensional subspace.
    Ridge { dim: usize, degree: u32, samples: usize },
}

impl PoolVariant {
    pub fn label(&self) -> &'static str {
        match self {
            PoolVariant::TrueModel => "model",
            PoolVariant::Full { .. } => "full",
            PoolVariant::Ridge { .. } => "ridge",
        }
    }

    /// Model evaluations spent on the pool surrogate.
    pub fn training_samples(&self) -> usize {
        match self {
            PoolVariant::TrueModel => 0,
            PoolVariant::Full { samples, .. } | PoolVariant::Ridge { samples, .. } => *samples,
        }
    }
}

/// Fits the pool surrogate of `variant`; `None` for [`PoolVariant::TrueModel`].
pub fn build_pool_surrogate<M: Model + ?Sized>(
    model: &M,
    families: &[MarginalFamily],
    variant: &PoolVariant,
    seed: u64,
) -> Result<Option<Surrogate>> {
    let d = families.len();
    match *variant {
        PoolVariant::TrueModel => Ok(None),
        PoolVariant::Full { degree, samples } => {
            let x = sample_product(families, samples, seed);
            let s = SampleSet::from_model(model, x)?;
            Ok(Some(fit_least_squares(families, &IndexSet::total_order(d, degree)?, &s)?))
        }
        PoolVariant::Ridge { dim, degree, samples } => {
            let x = sample_product(families, samples, seed);
            let s = SampleSet::from_model(model, x)?;
            let sub = estimate_subspace(&s, families, dim, &SubspaceConfig::default())?;
            Ok(Some(fit_ridge(&s, families, &sub, IndexScheme::TotalOrder(degree))?))
        }
    }
}

/// Analysis of one tail.
#[derive(Clone, Debug)]
pub struct TailAnalysis {
    pub tail: Tail,
    pub measure: FilteredMeasure,
    pub fit: ExtremumFit,
    /// Total extremum index per variable.
    pub totals: Vec<f64>,
}

impl TailAnalysis {
    fn metadata(&self, pool: &str, seed: u64, degree: u32) -> ReportMetadata {
        ReportMetadata {
            estimator: "extremum_covariance".into(),
            samples: self.fit.fit_samples(),
            seed: Some(seed),
            degree: Some(degree),
            trials: None,
            notes: vec![
                format!("tail={}", self.tail),
                format!("pool={pool}"),
                format!("fraction={}", self.measure.fraction()),
                format!("retained={}", self.measure.samples().nrows()),
            ],
        }
    }

    /// Total indices as a report.
    pub fn total_report(&self, pool: &str, seed: u64) -> SensitivityReport {
        let degree = self.fit.basis().index_set().max_total_degree();
        let mut r = SensitivityReport::new(ReportKind::ExtremumTotalSobol, self.metadata(pool, seed, degree));
        for (i, v) in self.totals.iter().enumerate() {
            r.push(Subset::single(i), *v);
        }
        r
    }

    /// Indices of every subset as a report.
    pub fn sobol_report(&self, pool: &str, seed: u64) -> Result<SensitivityReport> {
        let degree = self.fit.basis().index_set().max_total_degree();
        let mut r = SensitivityReport::new(ReportKind::ExtremumSobol, self.metadata(pool, seed, degree));
        for (s, v) in self.fit.all_sobol()? {
            r.push(s, v);
        }
        Ok(r)
    }
}

/// Result of [`extremum_pipeline`].
#[derive(Clone, Debug)]
pub struct ExtremumResult {
    pub pool: PoolVariant,
    pub pool_surrogate: Option<Surrogate>,
    pub tails: Vec<TailAnalysis>,
    pub seed: u64,
}

impl ExtremumResult {
    pub fn tail(&self, tail: Tail) -> Option<&TailAnalysis> {
        self.tails.iter().find(|t| t.tail == tail)
    }

    /// Model evaluations spent, pool surrogate training included.
    pub fn evaluations(&self, pool_size: usize) -> usize {
        let pool = if self.pool == PoolVariant::TrueModel { pool_size } else { self.pool.training_samples() };
        pool + self.tails.iter().map(|t| t.fit.fit_samples()).sum::<usize>()
    }

    pub fn total_reports(&self) -> Vec<SensitivityReport> {
        self.tails.iter().map(|t| t.total_report(self.pool.label(), self.seed)).collect()
    }
}

fn tail_tag(tail: Tail) -> u64 {
    match tail {
        Tail::Top => 0,
        Tail::Bottom => 1,
        Tail::All => 2,
    }
}

/// Characterizes, orthogonalizes and fits one tail of an evaluated pool.
pub fn analyze_tail<M: Model + ?Sized>(
    model: &M,
    families: &[MarginalFamily],
    pool_x: &DMatrix<f64>,
    pool_y: &[f64],
    tail: Tail,
    config: &ExtremumConfig,
    seed: u64,
) -> Result<TailAnalysis> {
    let d = families.len();
    if model.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: model.dim() });
    }
    let kept = mcf_filter(pool_x, pool_y, config.fraction, tail)?;
    let measure = FilteredMeasure::characterize(kept, families, tail, config.fraction, config.bandwidth)?;
    let set = IndexSet::total_order(d, config.degree)?;
    let tag = tail_tag(tail);
    let basis = CorrelatedBasis::orthogonalize(
        &measure,
        families,
        &set,
        config.basis_samples,
        derive_seed(seed, 10 + tag),
        config.base,
    )?;
    let ne = config.fit_samples.unwrap_or(2 * set.len());
    let draw = measure.copula_sample(ne, derive_seed(seed, 20 + tag));
    let f = model.eval_rows(&draw.x)?;
    let coords = basis.coords_of_sample(&draw);
    let fit = ExtremumFit::fit(basis, &coords, &f)?;
    let totals = fit.totals()?;
    info!("{tail} tail: {} retained, {ne} fit evaluations", measure.samples().nrows());
    Ok(TailAnalysis { tail, measure, fit, totals })
}

/// Runs the full procedure: pool surrogate, filtering pool, and the
/// analysis of each requested tail.
pub fn extremum_pipeline<M: Model + ?Sized>(
    model: &M,
    families: &[MarginalFamily],
    variant: &PoolVariant,
    tails: &[Tail],
    config: &ExtremumConfig,
    seed: u64,
) -> Result<ExtremumResult> {
    let surrogate = build_pool_surrogate(model, families, variant, derive_seed(seed, 1))?;
    extremum_with_pool(model, families, variant.clone(), surrogate, tails, config, seed)
}

/// As [`extremum_pipeline`] with an already fitted pool surrogate (`None`
/// scores the pool with the model).
pub fn extremum_with_pool<M: Model + ?Sized>(
    model: &M,
    families: &[MarginalFamily],
    variant: PoolVariant,
    surrogate: Option<Surrogate>,
    tails: &[Tail],
    config: &ExtremumConfig,
    seed: u64,
) -> Result<ExtremumResult> {
    if tails.is_empty() {
        return Err(Error::invalid("no tail requested"));
    }
    let x = sample_product(families, config.pool_size, derive_seed(seed, 2));
    let y: DVector<f64> = match &surrogate {
        Some(s) => {
            if s.input_dim() != families.len() {
                return Err(Error::DimensionMismatch { expected: families.len(), got: s.input_dim() });
            }
            s.evaluate(&x)?
        }
        None => model.eval_rows(&x)?,
    };
    let y: Vec<f64> = y.iter().copied().collect();
    let tails = tails
        .iter()
        .map(|&t| analyze_tail(model, families, &x, &y, t, config, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExtremumResult { pool: variant, pool_surrogate: surrogate, tails, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::additive_2d;

    fn small() -> ExtremumConfig {
        ExtremumConfig { pool_size: 20_000, basis_samples: 5000, degree: 4, ..Default::default() }
    }

    #[test]
    fn additive_tails_rank_as_expected() {
        let m = additive_2d();
        let r = extremum_pipeline(&m, &m.families(), &PoolVariant::TrueModel, &[Tail::Bottom, Tail::Top], &small(), 4)
            .unwrap();
        let b = &r.tail(Tail::Bottom).unwrap().totals;
        let t = &r.tail(Tail::Top).unwrap().totals;
        assert!(b[0] > b[1], "bottom {b:?}");
        assert!(t[1] > t[0], "top {t:?}");
        let rep = r.total_reports();
        assert_eq!(rep.len(), 2);
        assert_eq!(rep[0].kind, ReportKind::ExtremumTotalSobol);
        assert!(rep[1].metadata.notes.contains(&"tail=top".to_string()));
    }

    #[test]
    fn top_samples_concentrate_near_upper_bound() {
        let m = additive_2d();
        let x = sample_product(&m.families(), 100_000, 3);
        let y: Vec<f64> = m.eval_rows(&x).unwrap().iter().copied().collect();
        let top = mcf_filter(&x, &y, 0.05, Tail::Top).unwrap();
        let mean = top.column(1).mean();
        assert!(mean > 0.85, "mean x2 in top tail {mean}");
    }

    #[test]
    fn pool_variants_build() {
        let m = additive_2d();
        let full = build_pool_surrogate(&m, &m.families(), &PoolVariant::Full { degree: 4, samples: 60 }, 1).unwrap();
        assert_eq!(full.unwrap().index_set().len(), 15);
        assert!(build_pool_surrogate(&m, &m.families(), &PoolVariant::TrueModel, 1).unwrap().is_none());
        assert!(build_pool_surrogate(&m, &m.families(), &PoolVariant::Ridge { dim: 2, degree: 2, samples: 60 }, 1).is_err());
    }
}
