//! Study configuration: the JSON document, its defaults and validation.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use polysens::extremum::{BandwidthRule, BaseBasis, ExtremumConfig, PoolVariant, Tail};
use polysens::ridge::SAMPLES_PER_DIM;
use polysens::{IndexSet, MarginalFamily, Subset};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Where model outputs come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    /// A benchmark model by name, e.g. `borehole` or `analytical_ridge(0.1)`.
    Builtin(String),
    /// A CSV file with header `x1,...,xd,f`.
    Dataset(PathBuf),
    /// A surrogate file, evaluated as if it were the model.
    Surrogate(PathBuf),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Least squares on a total-order basis.
    #[default]
    Full,
    /// Ridge fit on an estimated or given subspace, lifted to the full basis.
    Ridge,
    /// Adaptive sparse fit by least angle regression.
    Lars,
    /// Pick-freeze estimates on Sobol' points.
    Qmc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Ridge => "ridge",
            Method::Lars => "lars",
            Method::Qmc => "qmc",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDecl {
    pub name: String,
    pub distribution: MarginalFamily,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtremumSection {
    pub fraction: f64,
    pub pool_size: usize,
    pub degree: u32,
    pub basis_samples: usize,
    pub fit_samples: Option<usize>,
    pub base: BaseBasis,
    pub bandwidth: BandwidthRule,
    pub pool: PoolVariant,
    pub tails: Vec<Tail>,
}

impl Default for ExtremumSection {
    fn default() -> Self {
        let c = ExtremumConfig::default();
        ExtremumSection {
            fraction: c.fraction,
            pool_size: c.pool_size,
            degree: c.degree,
            basis_samples: c.basis_samples,
            fit_samples: c.fit_samples,
            base: c.base,
            bandwidth: c.bandwidth,
            pool: PoolVariant::TrueModel,
            tails: vec![Tail::Bottom, Tail::Top],
        }
    }
}

impl ExtremumSection {
    pub fn settings(&self) -> ExtremumConfig {
        ExtremumConfig {
            fraction: self.fraction,
            pool_size: self.pool_size,
            degree: self.degree,
            basis_samples: self.basis_samples,
            fit_samples: self.fit_samples,
            base: self.base,
            bandwidth: self.bandwidth,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthValue {
    /// 1-based variable positions.
    pub subset: Vec<usize>,
    pub value: f64,
}

/// Reference values for a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Truth {
    /// Projection on a total-order basis with a tensor Gauss rule of
    /// `level + 1` points per dimension.
    Tensor { level: usize, degree: u32 },
    Values(Vec<TruthValue>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub methods: Vec<Method>,
    pub budgets: Vec<usize>,
    #[serde(default = "default_compare_trials")]
    pub trials: usize,
    pub truth: Truth,
}

fn default_compare_trials() -> usize {
    30
}

fn default_degree() -> u32 {
    4
}

fn default_trials() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("polysens_out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub model: ModelSource,
    /// Input names and distributions; taken from the model when omitted.
    #[serde(default)]
    pub inputs: Option<Vec<InputDecl>>,
    #[serde(default)]
    pub method: Method,
    /// Total degree of the fit; the maximum degree for `lars`.
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default)]
    pub subspace_dim: Option<usize>,
    /// CSV with `d` rows of `n` entries; estimated from the samples if unset.
    #[serde(default)]
    pub subspace_file: Option<PathBuf>,
    /// Total degree of the full basis a ridge fit is lifted to.
    #[serde(default)]
    pub lift_degree: Option<u32>,
    /// Training samples per fit, or the evaluation budget for `qmc`.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Standard deviation of Gaussian noise added to model outputs.
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Subsets (1-based positions) reported by `sobol` and `compare`.
    #[serde(default)]
    pub indices: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub extremum: ExtremumSection,
    #[serde(default)]
    pub compare: Option<CompareSection>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl StudyConfig {
    pub fn new(model: ModelSource) -> Self {
        StudyConfig {
            model,
            inputs: None,
            method: Method::default(),
            degree: default_degree(),
            subspace_dim: None,
            subspace_file: None,
            lift_degree: None,
            samples: None,
            noise_sd: 0.0,
            seed: 0,
            trials: default_trials(),
            indices: None,
            extremum: ExtremumSection::default(),
            compare: None,
            output: default_output(),
        }
    }

    /// Parses a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: StudyConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.model {
            ModelSource::Dataset(p) | ModelSource::Surrogate(p) => rebase(p),
            ModelSource::Builtin(_) => {}
        }
        if let Some(p) = cfg.subspace_file.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn families(&self) -> Vec<MarginalFamily> {
        self.inputs.as_deref().unwrap_or_default().iter().map(|i| i.distribution).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.inputs.as_deref().unwrap_or_default().iter().map(|i| i.name.clone()).collect()
    }

    pub fn subsets(&self) -> Vec<Subset> {
        self.indices.as_deref().unwrap_or_default().iter().map(|s| Subset::of_labels(s)).collect()
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    /// Fills every defaulted field once the input dimension is known, so the
    /// written config reproduces the run by itself.
    pub fn resolve(&mut self, inputs: Vec<InputDecl>, rows: Option<usize>) -> CliResult<()> {
        if self.inputs.is_none() {
            self.inputs = Some(inputs);
        }
        let d = self.inputs.as_ref().map_or(0, Vec::len);
        if d == 0 {
            return Err(CliError::usage("model has no inputs"));
        }
        for p in [self.subspace_file.as_mut()].into_iter().flatten() {
            *p = absolute(p);
        }
        if let ModelSource::Dataset(p) | ModelSource::Surrogate(p) = &mut self.model {
            *p = absolute(p);
        }
        if self.method == Method::Ridge {
            let n = *self.subspace_dim.get_or_insert(2.min(d.saturating_sub(1)).max(1));
            self.lift_degree.get_or_insert(self.degree);
            if self.samples.is_none() && rows.is_none() {
                let reduced = IndexSet::total_order(n, self.degree).map(|s| s.len()).unwrap_or(0);
                self.samples = Some((SAMPLES_PER_DIM * d).max(2 * reduced).max(100));
            }
        }
        if self.samples.is_none() {
            self.samples = Some(match (self.method, rows) {
                (_, Some(rows)) => rows,
                (Method::Full, None) => 2 * IndexSet::total_order(d, self.degree).map(|s| s.len()).unwrap_or(0),
                (Method::Lars, None) => 150,
                (Method::Qmc | Method::Ridge, None) => 10_000,
            });
        }
        if self.indices.is_none() {
            let mut idx: Vec<Vec<usize>> = (1..=d).map(|i| vec![i]).collect();
            for i in 1..=d {
                for j in i + 1..=d {
                    idx.push(vec![i, j]);
                }
            }
            self.indices = Some(idx);
        }
        self.validate()
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::usage(m));
        let d = self.inputs.as_ref().map_or(0, Vec::len);
        if let Some(inputs) = &self.inputs {
            for i in inputs {
                i.distribution.validate().map_err(|e| CliError::usage(format!("input '{}': {e}", i.name)))?;
            }
        }
        if self.degree == 0 {
            return bad("degree must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.samples == Some(0) {
            return bad("samples must be positive".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be finite and non-negative, got {}", self.noise_sd));
        }
        if let Some(n) = self.subspace_dim {
            if n == 0 || (d > 0 && n >= d) {
                return bad(format!("subspace_dim must be in 1..{d}, got {n}"));
            }
        }
        if let (Some(l), Method::Ridge) = (self.lift_degree, self.method) {
            if l < self.degree {
                return bad(format!("lift_degree {l} is below the ridge degree {}", self.degree));
            }
        }
        if matches!(self.model, ModelSource::Dataset(_)) {
            if self.method == Method::Qmc {
                return bad("method qmc needs model evaluations and cannot run on a dataset".into());
            }
            if self.inputs.is_none() {
                return bad("a dataset model needs an 'inputs' list with one entry per column x1..xd".into());
            }
        }
        for s in self.indices.as_deref().unwrap_or_default() {
            if s.is_empty() || s.iter().any(|&k| k == 0 || (d > 0 && k > d)) {
                return bad(format!("index subset {s:?} must list positions in 1..={d}"));
            }
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != s.len() {
                return bad(format!("index subset {s:?} repeats a position"));
            }
        }
        let e = &self.extremum;
        if !(e.fraction > 0.0 && e.fraction < 0.5) {
            return bad(format!("extremum.fraction must lie in (0, 0.5), got {}", e.fraction));
        }
        if e.tails.is_empty() {
            return bad("extremum.tails is empty".into());
        }
        if e.degree == 0 || e.pool_size == 0 || e.basis_samples == 0 {
            return bad("extremum degree, pool_size and basis_samples must be positive".into());
        }
        if let Some(c) = &self.compare {
            if c.methods.is_empty() {
                return bad("compare.methods is empty".into());
            }
            if c.budgets.is_empty() || c.budgets.contains(&0) {
                return bad("compare.budgets must be a nonempty list of positive budgets".into());
            }
            if c.trials == 0 {
                return bad("compare.trials must be at least 1".into());
            }
            if let Truth::Values(v) = &c.truth {
                for t in v {
                    if t.subset.is_empty() || t.subset.iter().any(|&k| k == 0 || (d > 0 && k > d)) {
                        return bad(format!("truth subset {:?} must list positions in 1..={d}", t.subset));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config is serializable");
        s.push('\n');
        s
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decls(d: usize) -> Vec<InputDecl> {
        (1..=d).map(|i| InputDecl { name: format!("x{i}"), distribution: MarginalFamily::legendre() }).collect()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: StudyConfig = serde_json::from_str(r#"{"model": {"builtin": "additive_2d"}}"#).unwrap();
        assert_eq!(cfg.method, Method::Full);
        assert_eq!(cfg.degree, 4);
        assert_eq!(cfg.trials, 1);
        assert_eq!(cfg.extremum.tails, vec![Tail::Bottom, Tail::Top]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<StudyConfig>(r#"{"model": {"builtin": "x"}, "degre": 3}"#).unwrap_err();
        assert!(err.to_string().contains("degre"));
    }

    #[test]
    fn resolve_fills_defaults_and_round_trips() {
        let mut cfg = StudyConfig::new(ModelSource::Builtin("additive_2d".into()));
        cfg.resolve(decls(2), None).unwrap();
        assert_eq!(cfg.samples, Some(30));
        assert_eq!(cfg.indices.as_ref().unwrap().len(), 3);
        let back: StudyConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);

        let mut ridge = StudyConfig::new(ModelSource::Builtin("analytical_ridge".into()));
        ridge.method = Method::Ridge;
        ridge.resolve(decls(6), None).unwrap();
        assert_eq!(ridge.subspace_dim, Some(2));
        assert_eq!(ridge.lift_degree, Some(4));
        assert_eq!(ridge.samples, Some(100));
    }

    #[test]
    fn validation_catches_bad_settings() {
        let mut cfg = StudyConfig::new(ModelSource::Builtin("additive_2d".into()));
        cfg.indices = Some(vec![vec![3]]);
        assert!(cfg.resolve(decls(2), None).is_err());

        let mut cfg = StudyConfig::new(ModelSource::Builtin("additive_2d".into()));
        cfg.extremum.fraction = 0.7;
        assert!(cfg.resolve(decls(2), None).is_err());

        let mut cfg = StudyConfig::new(ModelSource::Dataset("d.csv".into()));
        cfg.method = Method::Qmc;
        assert!(cfg.resolve(decls(2), Some(10)).is_err());

        let mut cfg = StudyConfig::new(ModelSource::Builtin("additive_2d".into()));
        cfg.compare = Some(CompareSection {
            methods: vec![],
            budgets: vec![10],
            trials: 1,
            truth: Truth::Values(vec![]),
        });
        let err = cfg.resolve(decls(2), None).unwrap_err();
        assert!(err.to_string().contains("methods is empty"));
    }
}
