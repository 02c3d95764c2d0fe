//! A resolved study: config plus the model, dataset or surrogate it names.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use polysens::bench::{self, BenchmarkModel};
use polysens::ridge::{estimate_subspace, fit_ridge, lift_coefficients, LiftReport, Subspace, SubspaceConfig};
use polysens::sampling::{derive_seed, sample_product};
use polysens::sparse::adaptive_lars_fit;
use polysens::{pce, IndexScheme, IndexSet, MarginalFamily, Model, SampleSet, Surrogate};

use crate::config::{InputDecl, Method, ModelSource, StudyConfig};
use crate::error::{CliError, CliResult};

/// A surrogate standing in for the model.
#[derive(Clone, Debug)]
pub struct SurrogateModel(pub Surrogate);

impl Model for SurrogateModel {
    fn dim(&self) -> usize {
        self.0.input_dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.0.evaluate(&DMatrix::from_row_slice(1, x.len(), x)).map_or(f64::NAN, |v| v[0])
    }

    fn eval_rows(&self, x: &DMatrix<f64>) -> polysens::Result<DVector<f64>> {
        self.0.evaluate(x)
    }
}

pub enum Source {
    Builtin(BenchmarkModel),
    Surrogate(SurrogateModel),
    Dataset(SampleSet),
}

pub struct Study {
    pub config: StudyConfig,
    pub source: Source,
}

/// A fitted full-space surrogate and how it was obtained.
pub struct Fitted {
    pub surrogate: Surrogate,
    pub ridge: Option<Surrogate>,
    pub lift: Option<LiftReport>,
    pub samples: usize,
    pub degree: u32,
    pub estimator: String,
}

impl Study {
    pub fn open(mut config: StudyConfig) -> CliResult<Study> {
        let (source, inputs, rows) = match &config.model {
            ModelSource::Builtin(name) => {
                let m = bench::by_name(name).map_err(|e| CliError::usage(e.to_string()))?;
                let inputs = m
                    .spec()
                    .inputs
                    .iter()
                    .map(|i| InputDecl { name: i.name.clone(), distribution: i.distribution })
                    .collect();
                (Source::Builtin(m), inputs, None)
            }
            ModelSource::Surrogate(path) => {
                let s = read_surrogate(path)?;
                let inputs = s
                    .input_families()
                    .iter()
                    .enumerate()
                    .map(|(i, f)| InputDecl { name: format!("x{}", i + 1), distribution: *f })
                    .collect();
                (Source::Surrogate(SurrogateModel(s)), inputs, None)
            }
            ModelSource::Dataset(path) => {
                let d = config.inputs.as_ref().map(Vec::len).ok_or_else(|| {
                    CliError::usage("a dataset model needs an 'inputs' list with one entry per column x1..xd")
                })?;
                let data = read_dataset(path, d)?;
                let rows = data.len();
                (Source::Dataset(data), Vec::new(), Some(rows))
            }
        };
        config.resolve(inputs, rows)?;
        let d = config.families().len();
        let model_dim = match &source {
            Source::Builtin(m) => m.dim(),
            Source::Surrogate(m) => m.dim(),
            Source::Dataset(s) => s.dim(),
        };
        if d != model_dim {
            return Err(CliError::usage(format!("config declares {d} inputs but the model has {model_dim}")));
        }
        if let (Source::Dataset(s), Some(n)) = (&source, config.samples) {
            if n > s.len() {
                return Err(CliError::usage(format!("samples = {n} but the dataset has {} rows", s.len())));
            }
        }
        Ok(Study { config, source })
    }

    pub fn families(&self) -> Vec<MarginalFamily> {
        self.config.families()
    }

    pub fn names(&self) -> Vec<String> {
        self.config.names()
    }

    pub fn dim(&self) -> usize {
        self.families().len()
    }

    /// The model, when outputs can be computed at arbitrary points.
    pub fn model(&self) -> Option<&dyn Model> {
        match &self.source {
            Source::Builtin(m) => Some(m),
            Source::Surrogate(m) => Some(m),
            Source::Dataset(_) => None,
        }
    }

    pub fn require_model(&self, what: &str) -> CliResult<&dyn Model> {
        self.model().ok_or_else(|| CliError::usage(format!("{what} needs model evaluations; a dataset cannot provide them")))
    }

    /// Training samples of one trial: drawn from the input measure for a
    /// model, the leading rows for a dataset.
    pub fn training_set(&self, n: usize, seed: u64) -> CliResult<SampleSet> {
        let fams = self.families();
        let mut s = match &self.source {
            Source::Dataset(data) => {
                if n > data.len() {
                    return Err(CliError::usage(format!("{n} samples requested but the dataset has {} rows", data.len())));
                }
                let x = data.x().rows(0, n).into_owned();
                let f = data.f().rows(0, n).into_owned();
                SampleSet::new(x, f)?
            }
            _ => {
                let model = self.require_model("sampling")?;
                SampleSet::from_model(model, sample_product(&fams, n, derive_seed(seed, 0)))?
            }
        };
        let sd = self.config.noise_sd;
        if sd > 0.0 {
            let noise = sample_product(&[MarginalFamily::gaussian(0.0, sd)?], n, derive_seed(seed, 1));
            s = s.with_output_offsets(noise.as_slice());
        }
        Ok(s)
    }

    /// Full-space surrogate of one trial with `n` samples.
    pub fn fit(&self, method: Method, n: usize, seed: u64) -> CliResult<Fitted> {
        let cfg = &self.config;
        let fams = self.families();
        let d = fams.len();
        let samples = self.training_set(n, seed)?;
        match method {
            Method::Full => {
                let set = IndexSet::total_order(d, cfg.degree)?;
                let surrogate = pce::fit_least_squares(&fams, &set, &samples)?;
                Ok(Fitted { surrogate, ridge: None, lift: None, samples: n, degree: cfg.degree, estimator: "full".into() })
            }
            Method::Ridge => {
                let dim = cfg.subspace_dim.unwrap_or(2);
                let subspace = match &cfg.subspace_file {
                    Some(path) => read_subspace(path)?,
                    None => estimate_subspace(&samples, &fams, dim, &SubspaceConfig::default())?,
                };
                if subspace.dim() != d {
                    return Err(CliError::usage(format!("subspace has {} rows but the model has {d} inputs", subspace.dim())));
                }
                let ridge = fit_ridge(&samples, &fams, &subspace, IndexScheme::TotalOrder(cfg.degree))?;
                let lift_degree = cfg.lift_degree.unwrap_or(cfg.degree);
                let (surrogate, lift) =
                    lift_coefficients(&ridge, &IndexSet::total_order(d, lift_degree)?, None, derive_seed(seed, 2))?;
                Ok(Fitted {
                    surrogate,
                    ridge: Some(ridge),
                    lift: Some(lift),
                    samples: n,
                    degree: lift_degree,
                    estimator: "ridge".into(),
                })
            }
            Method::Lars => {
                let fit = adaptive_lars_fit(&samples, &fams, cfg.degree)?;
                Ok(Fitted { surrogate: fit.surrogate, ridge: None, lift: None, samples: n, degree: fit.degree, estimator: "lars".into() })
            }
            Method::Qmc => Err(CliError::usage("method qmc estimates indices directly and produces no surrogate")),
        }
    }
}

pub fn read_surrogate(path: &Path) -> CliResult<Surrogate> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("surrogate {}: {e}", path.display())))
}

pub fn read_subspace(path: &Path) -> CliResult<Subspace> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Subspace::from_csv(&text).map_err(|e| CliError::from(e).context(&format!("subspace {}", path.display())))
}

/// Column names of a `d`-input dataset.
pub fn dataset_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    h.push("f".into());
    h
}

/// Reads a dataset with header `x1,...,xd,f`; columns may come in any order.
pub fn read_dataset(path: &Path, d: usize) -> CliResult<SampleSet> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::io(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected = dataset_header(d);
    let mut positions = Vec::with_capacity(d + 1);
    for name in &expected {
        let pos = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::usage(format!("dataset {} is missing column '{name}'", path.display())))?;
        positions.push(pos);
    }
    if let Some(extra) = header.iter().find(|h| !expected.contains(h)) {
        return Err(CliError::usage(format!("dataset {} has unexpected column '{extra}'", path.display())));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::usage(format!("dataset {}: {e}", path.display())))?;
        for (c, &pos) in positions.iter().enumerate() {
            let cell = rec.get(pos).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                CliError::usage(format!(
                    "dataset {}: row {} column '{}': '{cell}' is not a number",
                    path.display(),
                    k + 2,
                    expected[c]
                ))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::usage(format!("dataset {} has no rows", path.display())));
    }
    let all = DMatrix::from_row_slice(rows, d + 1, &values);
    let x = all.columns(0, d).into_owned();
    let f = all.column(d).into_owned();
    SampleSet::new(x, f).map_err(|e| CliError::usage(format!("dataset {}: {e}", path.display())))
}

/// Writes points and outputs as a dataset CSV.
pub fn write_dataset(path: Option<&PathBuf>, x: &DMatrix<f64>, f: &DVector<f64>) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(&dataset_header(x.ncols()).join(","));
    out.push('\n');
    for i in 0..x.nrows() {
        let row: Vec<String> = x.row(i).iter().chain(std::iter::once(&f[i])).map(|v| format!("{v:e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    crate::output::emit(path, &out)
}
