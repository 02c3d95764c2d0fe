//! `polysens`: global and extremum sensitivity analysis from the command line.

mod commands;
mod config;
mod error;
mod output;
mod study;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polysens::extremum::Tail;

use crate::commands::Kind;
use crate::config::{Method, ModelSource, StudyConfig};
use crate::error::{CliError, CliResult};
use crate::study::Study;

#[derive(Parser, Debug)]
#[command(name = "polysens", version, about = "Global and extremum sensitivity analysis with polynomial chaos")]
struct Cli {
    /// Worker threads for parallel loops (default: all cores).
    #[arg(long, global = true, env = "POLYSENS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a surrogate and write it as JSON.
    Fit(StudyArgs),
    /// Compute Sobol', total, skewness or extremum indices.
    Sensitivity(SensitivityArgs),
    /// Convergence of several methods against reference indices.
    Compare(StudyArgs),
    /// Print a benchmark model's input specification or dump samples.
    Bench(BenchArgs),
    /// Export an estimated subspace or check an existing one.
    #[command(subcommand)]
    Subspace(SubspaceCommand),
}

/// Study selection; flags override the config file.
#[derive(Args, Debug, Clone)]
struct StudyArgs {
    /// JSON study configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Benchmark model name, e.g. borehole or "analytical_ridge(0.1)".
    #[arg(long, conflicts_with_all = ["dataset", "surrogate"])]
    model: Option<String>,
    /// CSV dataset with header x1,...,xd,f (needs 'inputs' in the config).
    #[arg(long, conflicts_with = "surrogate")]
    dataset: Option<PathBuf>,
    /// Surrogate JSON used in place of the model.
    #[arg(long)]
    surrogate: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long)]
    subspace_dim: Option<usize>,
    /// Subspace CSV (d rows, n columns) for ridge fits.
    #[arg(long)]
    subspace_file: Option<PathBuf>,
    /// Training samples, or the evaluation budget for qmc.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long, env = "POLYSENS_SEED")]
    seed: Option<u64>,
    /// Repeat with seeds seed, seed+1, ... and report mean and sd.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TailChoice {
    Bottom,
    Top,
    Both,
    /// No filtering: the whole pool.
    All,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    #[command(flatten)]
    study: StudyArgs,
    #[arg(long, value_enum)]
    kind: Kind,
    /// Tails analysed by the extremum kind.
    #[arg(long, value_enum)]
    tail: Option<TailChoice>,
    /// Share of the pool kept per tail.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    pool_size: Option<usize>,
    /// Degree of the expansion fitted under the filtered measure.
    #[arg(long)]
    extremum_degree: Option<u32>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Model name.
    name: String,
    /// Print the input specification as JSON (the default).
    #[arg(long, conflicts_with = "dump")]
    spec: bool,
    /// Write this many input/output samples as CSV.
    #[arg(long)]
    dump: Option<usize>,
    #[arg(long, env = "POLYSENS_SEED", default_value_t = 0)]
    seed: u64,
    /// Output file (default: stdout).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum SubspaceCommand {
    /// Estimate a subspace from the study's samples and write a d x n CSV.
    Export {
        #[command(flatten)]
        study: StudyArgs,
        /// Output CSV (default: stdout).
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Validate a d x n CSV and print its shape and orthonormality error.
    Import {
        file: PathBuf,
        /// Second subspace to measure the principal angle against.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
}

fn study_config(a: &StudyArgs) -> CliResult<StudyConfig> {
    let source = if let Some(m) = &a.model {
        Some(ModelSource::Builtin(m.clone()))
    } else if let Some(d) = &a.dataset {
        Some(ModelSource::Dataset(d.clone()))
    } else {
        a.surrogate.as_ref().map(|s| ModelSource::Surrogate(s.clone()))
    };
    let mut cfg = match (&a.config, source) {
        (Some(path), src) => {
            let mut cfg = StudyConfig::load(path)?;
            if let Some(src) = src {
                cfg.model = src;
            }
            cfg
        }
        (None, Some(src)) => StudyConfig::new(src),
        (None, None) => return Err(CliError::usage("give --config or one of --model, --dataset, --surrogate")),
    };
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(p) = a.degree {
        cfg.degree = p;
    }
    if a.subspace_dim.is_some() {
        cfg.subspace_dim = a.subspace_dim;
    }
    if a.subspace_file.is_some() {
        cfg.subspace_file = a.subspace_file.clone();
    }
    if a.samples.is_some() {
        cfg.samples = a.samples;
    }
    if let Some(sd) = a.noise_sd {
        cfg.noise_sd = sd;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(o) = &a.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => commands::fit(&Study::open(study_config(&a)?)?),
        Command::Sensitivity(a) => {
            let mut cfg = study_config(&a.study)?;
            if let Some(t) = a.tail {
                cfg.extremum.tails = match t {
                    TailChoice::Bottom => vec![Tail::Bottom],
                    TailChoice::Top => vec![Tail::Top],
                    TailChoice::Both => vec![Tail::Bottom, Tail::Top],
                    TailChoice::All => vec![Tail::All],
                };
            }
            if let Some(f) = a.fraction {
                cfg.extremum.fraction = f;
            }
            if let Some(n) = a.pool_size {
                cfg.extremum.pool_size = n;
            }
            if let Some(p) = a.extremum_degree {
                cfg.extremum.degree = p;
            }
            commands::sensitivity(&Study::open(cfg)?, a.kind)
        }
        Command::Compare(a) => commands::compare(&Study::open(study_config(&a)?)?),
        Command::Bench(a) => commands::bench(&a.name, a.dump, a.seed, a.out.as_ref()),
        Command::Subspace(SubspaceCommand::Export { study, file }) => {
            commands::subspace_export(&Study::open(study_config(&study)?)?, file.as_ref())
        }
        Command::Subspace(SubspaceCommand::Import { file, reference }) => commands::subspace_import(&file, reference.as_ref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
