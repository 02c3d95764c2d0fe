//! The subcommands.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::ValueEnum;
use log::warn;
use polysens::bench;
use polysens::extremum::extremum_pipeline;
use polysens::orthobasis::tensor_rule;
use polysens::pce::fit_projection;
use polysens::qmc::{blocks_needed, pick_freeze_with_budget};
use polysens::report::{canonical_json, format_float, ReportKind, ReportMetadata};
use polysens::ridge::{estimate_subspace, lift_coefficients, SubspaceConfig, SAMPLES_PER_DIM};
use polysens::sampling::{derive_seed, sample_product};
use polysens::skewness::SkewnessIndices;
use polysens::{Error, IndexSet, Model, SensitivityReport, Subset, Surrogate};
use serde_json::json;

use crate::config::{Method, Truth};
use crate::error::{CliError, CliResult};
use crate::output::{csv_field, emit, report_table, write_file, OutputDir};
use crate::study::{read_subspace, write_dataset, Fitted, Source, Study};

/// Note attached to skewness reports of outputs without third moment.
pub const UNDEFINED_SKEWNESS: &str = "undefined (γ≈0)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Sobol,
    Total,
    Skewness,
    Extremum,
}

fn surrogate_json(s: &Surrogate) -> String {
    canonical_json(&serde_json::to_value(s).expect("surrogate is serializable"))
}

/// Fits the configured surrogate and writes it with a fit summary.
pub fn fit(study: &Study) -> CliResult<()> {
    let cfg = &study.config;
    if cfg.trials > 1 {
        warn!("fit ignores trials = {}; one surrogate is fitted", cfg.trials);
    }
    let n = cfg.samples.unwrap_or(0);
    let fitted = study.fit(cfg.method, n, cfg.trial_seed(0))?;
    let out = OutputDir::create(&cfg.output)?;
    out.write_config(cfg)?;
    let path = out.write("surrogate.json", &surrogate_json(&fitted.surrogate))?;
    if let Some(r) = &fitted.ridge {
        out.write("ridge_surrogate.json", &surrogate_json(r))?;
    }
    let summary = json!({
        "method": cfg.method.as_str(),
        "samples": fitted.samples,
        "degree": fitted.degree,
        "terms": fitted.surrogate.index_set().len(),
        "diagnostics": fitted.surrogate.diagnostics().or(fitted.ridge.as_ref().and_then(|r| r.diagnostics())),
        "lift": fitted.lift,
        "mean": fitted.surrogate.mean(),
        "variance": fitted.surrogate.variance(),
    });
    out.write("fit_summary.json", &canonical_json(&summary))?;
    println!(
        "{} fit: {} terms (degree {}) from {} samples -> {}",
        cfg.method.as_str(),
        fitted.surrogate.index_set().len(),
        fitted.degree,
        fitted.samples,
        path.display()
    );
    if let Some(d) = fitted.surrogate.diagnostics().or(fitted.ridge.as_ref().and_then(|r| r.diagnostics())) {
        println!("residual norm {:.3e}, rank {}, condition {:.3e}", d.residual_norm, d.rank, d.condition_estimate);
    }
    if let Some(l) = &fitted.lift {
        println!("lift residual {:.3e} (relative {:.3e}) on {} points", l.residual_norm, l.relative_residual, l.lift_samples);
    }
    Ok(())
}

fn metadata(fitted: &Fitted, seed: u64) -> ReportMetadata {
    let mut notes = Vec::new();
    if let Some(l) = &fitted.lift {
        notes.push(format!("lift_relative_residual={}", format_float(l.relative_residual)));
    }
    ReportMetadata {
        estimator: fitted.estimator.clone(),
        samples: fitted.samples,
        seed: Some(seed),
        degree: Some(fitted.degree),
        trials: None,
        notes,
    }
}

/// Surrogate of one trial: fitted from samples, or the given surrogate
/// itself (lifted when it lives on a subspace).
fn trial_surrogate(study: &Study, seed: u64) -> CliResult<Fitted> {
    let cfg = &study.config;
    if let Source::Surrogate(m) = &study.source {
        let s = &m.0;
        return match s.subspace() {
            None => Ok(Fitted {
                surrogate: s.clone(),
                ridge: None,
                lift: None,
                samples: s.diagnostics().map_or(0, |d| d.samples),
                degree: s.index_set().max_total_degree(),
                estimator: "surrogate".into(),
            }),
            Some(_) => {
                let degree = cfg.lift_degree.unwrap_or(s.index_set().max_total_degree());
                let set = IndexSet::total_order(study.dim(), degree)?;
                let (full, lift) = lift_coefficients(s, &set, None, derive_seed(seed, 2))?;
                Ok(Fitted {
                    surrogate: full,
                    ridge: Some(s.clone()),
                    lift: Some(lift),
                    samples: s.diagnostics().map_or(0, |d| d.samples),
                    degree,
                    estimator: "surrogate".into(),
                })
            }
        };
    }
    study.fit(cfg.method, cfg.samples.unwrap_or(0), seed)
}

/// Reports of one trial, keyed by output file stem. Extremum runs also push
/// the filtered samples and correlation of each tail onto `files`.
fn trial_reports(
    study: &Study,
    kind: Kind,
    trial: usize,
    files: &mut Vec<(String, String)>,
) -> CliResult<Vec<(String, SensitivityReport)>> {
    let cfg = &study.config;
    let seed = cfg.trial_seed(trial);
    let fams = study.families();
    let d = fams.len();
    if kind == Kind::Extremum {
        let model = study.require_model("extremum analysis")?;
        let res = extremum_pipeline(model, &fams, &cfg.extremum.pool, &cfg.extremum.tails, &cfg.extremum.settings(), seed)?;
        let mut out = Vec::new();
        let names = study.names();
        for t in &res.tails {
            files.push((format!("filtered_{}_samples.csv", t.tail), t.measure.samples_csv(&names)?));
            files.push((format!("filtered_{}_correlation.csv", t.tail), t.measure.correlation_csv(&names)?));
            out.push((format!("extremum_total_{}", t.tail), t.total_report(res.pool.label(), seed)));
            out.push((format!("extremum_sobol_{}", t.tail), t.sobol_report(res.pool.label(), seed)?));
        }
        return Ok(out);
    }
    if cfg.method == Method::Qmc && !matches!(study.source, Source::Surrogate(_)) {
        let model = study.require_model("method qmc")?;
        let budget = cfg.samples.unwrap_or(0);
        let subsets = if kind == Kind::Sobol { cfg.subsets() } else { Vec::new() };
        let totals = kind == Kind::Total;
        if kind == Kind::Skewness {
            return Err(CliError::usage("skewness indices need a surrogate; method qmc cannot provide one"));
        }
        let per_block = budget / blocks_needed(d, &subsets, totals);
        let est = pick_freeze_with_budget(model, &fams, &subsets, totals, budget, 1 + trial * per_block)?;
        let meta = ReportMetadata {
            estimator: "qmc".into(),
            samples: est.evaluations,
            seed: Some(seed),
            degree: None,
            trials: None,
            notes: Vec::new(),
        };
        let mut r = SensitivityReport::new(if totals { ReportKind::TotalSobol } else { ReportKind::Sobol }, meta);
        if let Some(t) = est.total {
            for (i, v) in t.into_iter().enumerate() {
                r.push(Subset::single(i), v);
            }
        }
        for (s, v) in est.sobol {
            r.push(s, v);
        }
        return Ok(vec![(if totals { "total" } else { "sobol" }.to_string(), r)]);
    }
    let fitted = trial_surrogate(study, seed)?;
    let meta = metadata(&fitted, seed);
    let s = &fitted.surrogate;
    Ok(match kind {
        Kind::Sobol => {
            let mut r = SensitivityReport::new(ReportKind::Sobol, meta);
            for sub in cfg.subsets() {
                r.push(sub, s.sobol_index(sub)?);
            }
            vec![("sobol".into(), r)]
        }
        Kind::Total => vec![("total".into(), s.total_sobol_report(meta)?)],
        Kind::Skewness => match SkewnessIndices::compute(s) {
            Ok(sk) if !sk.is_symmetric() => {
                vec![("skewness".into(), sk.report(meta.clone())?), ("total_skewness".into(), sk.total_report(meta)?)]
            }
            Ok(sk) => symmetric_reports(meta, sk.gamma()),
            Err(Error::SymmetricOutput { gamma }) => symmetric_reports(meta, gamma),
            Err(e) => return Err(e.into()),
        },
        Kind::Extremum => unreachable!("handled above"),
    })
}

fn symmetric_reports(mut meta: ReportMetadata, gamma: f64) -> Vec<(String, SensitivityReport)> {
    warn!("output is symmetric (gamma = {gamma:e}); skewness indices are undefined");
    meta.notes.push(UNDEFINED_SKEWNESS.into());
    vec![
        ("skewness".into(), SensitivityReport::new(ReportKind::Skewness, meta.clone())),
        ("total_skewness".into(), SensitivityReport::new(ReportKind::TotalSkewness, meta)),
    ]
}

/// Mean and spread across trials; subsets missing from a trial count as 0.
fn aggregate(reports: &[SensitivityReport]) -> CliResult<SensitivityReport> {
    let mut subsets: Vec<Subset> = reports.iter().flat_map(|r| r.entries.iter().map(|e| e.subset)).collect();
    subsets.sort_by_key(|s| (s.len(), s.positions().collect::<Vec<_>>()));
    subsets.dedup();
    let aligned: Vec<SensitivityReport> = reports
        .iter()
        .map(|r| {
            let mut a = SensitivityReport::new(r.kind, r.metadata.clone());
            for &s in &subsets {
                a.push(s, r.get(s).unwrap_or(0.0));
            }
            a
        })
        .collect();
    let mut out = SensitivityReport::aggregate(&aligned).ok_or_else(|| CliError::Numerical("no trial produced a report".into()))?;
    if reports.iter().any(|r| r.metadata.notes.iter().any(|n| n == UNDEFINED_SKEWNESS))
        && !out.metadata.notes.iter().any(|n| n == UNDEFINED_SKEWNESS)
    {
        out.metadata.notes.push(UNDEFINED_SKEWNESS.into());
    }
    Ok(out)
}

/// Computes the requested indices, repeated over the configured trials,
/// and writes one JSON report and one CSV per index family.
pub fn sensitivity(study: &Study, kind: Kind) -> CliResult<()> {
    let cfg = &study.config;
    let repeatable = kind == Kind::Extremum || matches!(study.source, Source::Builtin(_));
    let trials = if repeatable { cfg.trials } else { 1 };
    if trials < cfg.trials {
        warn!("trials = {} ignored: indices from a fixed dataset or surrogate do not vary by seed", cfg.trials);
    }
    let mut by_stem: BTreeMap<String, Vec<SensitivityReport>> = BTreeMap::new();
    let mut order = Vec::new();
    // filtered measures are exported for the first trial only
    let mut files = Vec::new();
    for t in 0..trials {
        let mut scratch = Vec::new();
        let reports = trial_reports(study, kind, t, &mut scratch)?;
        if t == 0 {
            files = scratch;
        }
        for (stem, r) in reports {
            if !by_stem.contains_key(&stem) {
                order.push(stem.clone());
            }
            by_stem.entry(stem).or_default().push(r);
        }
    }
    let out = OutputDir::create(&cfg.output)?;
    out.write_config(cfg)?;
    for (name, text) in &files {
        out.write(name, text)?;
    }
    let names = study.names();
    for stem in order {
        let mut r = aggregate(&by_stem[&stem])?;
        r.relabel(&names);
        out.write_report(&stem, &r)?;
        println!("== {stem} ==");
        print!("{}", report_table(&r));
    }
    println!("reports written to {}", cfg.output.display());
    Ok(())
}

fn floor(study: &Study, method: Method, subsets: &[Subset]) -> CliResult<usize> {
    let cfg = &study.config;
    let d = study.dim();
    Ok(match method {
        Method::Full => IndexSet::total_order(d, cfg.degree)?.len(),
        Method::Ridge => {
            let n = cfg.subspace_dim.unwrap_or(2.min(d - 1).max(1));
            (SAMPLES_PER_DIM * d).max(IndexSet::total_order(n, cfg.degree)?.len())
        }
        Method::Lars => d + 2,
        Method::Qmc => 2 * blocks_needed(d, subsets, false),
    })
}

fn estimate(study: &Study, method: Method, budget: usize, trial: usize, subsets: &[Subset]) -> CliResult<Vec<f64>> {
    let seed = study.config.trial_seed(trial);
    if method == Method::Qmc {
        let model = study.require_model("method qmc")?;
        let fams = study.families();
        let per_block = budget / blocks_needed(fams.len(), subsets, false);
        let est = pick_freeze_with_budget(model, &fams, subsets, false, budget, 1 + trial * per_block)?;
        return Ok(est.sobol.into_iter().map(|(_, v)| v).collect());
    }
    let fitted = study.fit(method, budget, seed)?;
    subsets.iter().map(|&s| fitted.surrogate.sobol_index(s).map_err(CliError::from)).collect()
}

fn truth_values(study: &Study, truth: &Truth) -> CliResult<(Vec<Subset>, Vec<f64>)> {
    match truth {
        Truth::Values(v) => Ok((v.iter().map(|t| Subset::of_labels(&t.subset)).collect(), v.iter().map(|t| t.value).collect())),
        Truth::Tensor { level, degree } => {
            let model = study.require_model("a tensor-grid truth")?;
            let fams = study.families();
            let rule = tensor_rule(&fams, *level)?;
            let set = IndexSet::total_order(fams.len(), *degree)?;
            let s = fit_projection(model, &fams, &set, &rule)?;
            let subsets = study.config.subsets();
            let values = subsets.iter().map(|&u| s.sobol_index(u)).collect::<polysens::Result<Vec<_>>>()?;
            Ok((subsets, values))
        }
    }
}

/// Mean absolute error of each method per budget against the truth.
pub fn compare(study: &Study) -> CliResult<()> {
    let cfg = &study.config;
    let section = cfg.compare.as_ref().ok_or_else(|| CliError::usage("config has no 'compare' section"))?;
    let (subsets, truth) = truth_values(study, &section.truth)?;
    let names = study.names();
    let out = OutputDir::create(&cfg.output)?;
    out.write_config(cfg)?;
    let truth_json = json!(subsets
        .iter()
        .zip(&truth)
        .map(|(s, v)| json!({"subset": s.positions().map(|p| p + 1).collect::<Vec<_>>(), "label": s.label_with(&names), "value": v}))
        .collect::<Vec<_>>());
    out.write("truth.json", &canonical_json(&truth_json))?;

    let mut csv = String::from("method,budget,index,mean_abs_error,sd_abs_error,trials,note\n");
    for &method in &section.methods {
        let min = floor(study, method, &subsets)?;
        for &budget in &section.budgets {
            if budget < min {
                let note = format!("skipped: budget below the method floor of {min}");
                println!("{} N={budget}: {note}", method.as_str());
                for s in &subsets {
                    csv.push_str(&format!("{},{budget},{},,,0,{}\n", method.as_str(), csv_field(&s.label_with(&names)), csv_field(&note)));
                }
                continue;
            }
            let mut errors: Vec<Vec<f64>> = vec![Vec::new(); subsets.len()];
            let mut failures = 0;
            let mut last_failure = String::new();
            for t in 0..section.trials {
                match estimate(study, method, budget, t, &subsets) {
                    Ok(v) => {
                        for (k, (e, tv)) in v.iter().zip(&truth).enumerate() {
                            errors[k].push((e - tv).abs());
                        }
                    }
                    Err(CliError::Usage(m)) => return Err(CliError::Usage(m)),
                    Err(e) => {
                        failures += 1;
                        last_failure = e.to_string();
                    }
                }
            }
            let note = if failures > 0 { format!("{failures} failed trials: {last_failure}") } else { String::new() };
            for (k, s) in subsets.iter().enumerate() {
                let e = &errors[k];
                let (mean, sd) = mean_sd(e);
                csv.push_str(&format!(
                    "{},{budget},{},{},{},{},{}\n",
                    method.as_str(),
                    csv_field(&s.label_with(&names)),
                    mean.map(format_float).unwrap_or_default(),
                    sd.map(format_float).unwrap_or_default(),
                    e.len(),
                    csv_field(&note)
                ));
                if let Some(m) = mean {
                    println!("{} N={budget} {}: mean |error| {m:.3e} over {} trials", method.as_str(), s.label_with(&names), e.len());
                }
            }
        }
    }
    let path = out.write("convergence.csv", &csv)?;
    println!("convergence table written to {}", path.display());
    Ok(())
}

fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (Some(mean), Some(sd))
}

/// Prints a benchmark's input specification or dumps model samples.
pub fn bench(name: &str, dump: Option<usize>, seed: u64, out: Option<&PathBuf>) -> CliResult<()> {
    let model = bench::by_name(name).map_err(|e| CliError::usage(e.to_string()))?;
    match dump {
        Some(n) => {
            let x = sample_product(&model.families(), n, seed);
            let f = model.eval_rows(&x)?;
            write_dataset(out, &x, &f)
        }
        None => {
            let mut text = serde_json::to_string_pretty(model.spec()).expect("spec is serializable");
            text.push('\n');
            emit(out, &text)
        }
    }
}

/// Estimates a subspace from the study's samples and writes it as CSV.
pub fn subspace_export(study: &Study, file: Option<&PathBuf>) -> CliResult<()> {
    let cfg = &study.config;
    let d = study.dim();
    if d < 2 {
        return Err(CliError::usage("subspace estimation needs at least two inputs"));
    }
    let n = cfg.subspace_dim.unwrap_or(2.min(d - 1));
    let samples = study.training_set(cfg.samples.unwrap_or(0), cfg.trial_seed(0))?;
    let sub = estimate_subspace(&samples, &study.families(), n, &SubspaceConfig::default())?;
    if let Some(p) = file {
        let mut resolved = cfg.clone();
        resolved.subspace_dim = Some(n);
        let mut cfg_path = p.clone().into_os_string();
        cfg_path.push(".config.json");
        write_file(&PathBuf::from(cfg_path), &resolved.to_json())?;
    }
    emit(file, &sub.to_csv())
}

/// Validates a subspace CSV and reports its shape, optionally its angle to
/// a reference subspace.
pub fn subspace_import(file: &PathBuf, reference: Option<&PathBuf>) -> CliResult<()> {
    let sub = read_subspace(file)?;
    let m = sub.matrix();
    let gram = m.transpose() * m;
    let ortho = (0..gram.nrows())
        .flat_map(|i| (0..gram.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    let mut info = json!({"dim": sub.dim(), "reduced_dim": sub.reduced_dim(), "orthonormality_error": ortho});
    if let Some(r) = reference {
        let other = read_subspace(r)?;
        info["angle_to_reference"] = json!(sub.angle_to(other.matrix())?);
    }
    print!("{}", canonical_json(&info));
    Ok(())
}
