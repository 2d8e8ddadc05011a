//! The `ips` command line: `estimate`, `simulate` and `summarize`.
//!
//! Exit codes: 0 success, 1 failed simulation thresholds, 2 configuration error,
//! 3 data error, 4 estimation failure, 5 failure writing outputs.

mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::dataset::{load_csv, stratify, summarize, AnalysisFrame, GroupBy};
use crate::error::{Error, ErrorKind};
use crate::pipeline::{run_analysis, Analysis};
use crate::seeding::derive_seed;
use crate::simulate::{run_suite, SuiteOverrides};

pub use config::{ContrastSpec, RunConfig};
pub use output::{sanitize_label, write_curve_csv, CURVE_CSV_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_THRESHOLDS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ESTIMATION: i32 = 4;
pub const EXIT_OUTPUT: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "ips", version, about = "Incremental propensity score effect curves")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the effect curve, bands and contrast for a CSV file.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named simulation suite and check its thresholds.
    Simulate {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summary table grouped by treatment and, if configured, by strata.
    Summarize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failed command: exit code plus the error to report.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

impl Failure {
    /// Classifies by error kind; I/O errors get `io_code`.
    fn classify(error: Error, io_code: i32) -> Self {
        let code = match error.kind() {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Data => EXIT_DATA,
            ErrorKind::Estimation => EXIT_ESTIMATION,
            ErrorKind::Io => io_code,
        };
        Self { code, error }
    }

    fn config(error: Error) -> Self {
        Self::classify(error, EXIT_CONFIG)
    }

    fn data(error: Error) -> Self {
        Self::classify(error, EXIT_DATA)
    }

    fn estimation(error: Error) -> Self {
        Self::classify(error, EXIT_ESTIMATION)
    }

    fn output(error: Error) -> Self {
        Self::classify(error, EXIT_OUTPUT)
    }
}

type CmdResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be >= 1");
            return EXIT_CONFIG;
        }
        builder = builder.num_threads(k);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_ESTIMATION;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Estimate { config, data, out } => cmd_estimate(config, data, out).map(|()| EXIT_OK),
        Command::Simulate {
            suite,
            out,
            reps,
            n,
            seed,
        } => cmd_simulate(
            suite,
            out,
            &SuiteOverrides {
                replicates: *reps,
                n: *n,
                seed: *seed,
            },
        ),
        Command::Summarize { config, data, out } => cmd_summarize(config, data, out).map(|()| EXIT_OK),
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

fn load_inputs(config: &Path, data: &Path) -> CmdResult<(RunConfig, AnalysisFrame)> {
    let cfg = RunConfig::load(config).map_err(Failure::config)?;
    let frame = load_csv(data, &cfg.effective_schema()).map_err(Failure::data)?;
    Ok((cfg, frame))
}

fn create_dir(dir: &Path) -> CmdResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::output(Error::io(dir, e)))
}

/// Writes `curve.csv`, `curve.json`, `contrast.json` and `run_manifest.json` under
/// `out`, plus one set per stratum under `out/strata/<label>/` when stratifying.
pub fn cmd_estimate(config: &Path, data: &Path, out: &Path) -> CmdResult<()> {
    let started = Instant::now();
    let (cfg, frame) = load_inputs(config, data)?;
    let settings = cfg.analysis_settings().map_err(Failure::config)?;
    let digest = cfg.digest();
    let data_digest = std::fs::read(data)
        .map(|b| crate::digest::sha256_hex(&b))
        .map_err(|e| Failure::data(Error::io(data, e)))?;

    let strata = match cfg.strata_column() {
        Some(_) => stratify(&frame, cfg.min_stratum_rows).map_err(Failure::data)?,
        None => Vec::new(),
    };

    let pooled = run_analysis(&frame, &settings).map_err(Failure::estimation)?;
    let stratum_runs: Vec<(String, Analysis)> = strata
        .par_iter()
        .enumerate()
        .map(|(k, (label, sub))| {
            let mut s = settings.clone();
            s.seed = derive_seed(settings.seed, &[k as u64 + 1]);
            run_analysis(sub, &s)
                .map(|a| (label.clone(), a))
                .map_err(|e| Failure::estimation(Error::FitFailed(format!("stratum '{label}': {e}"))))
        })
        .collect::<CmdResult<Vec<_>>>()?;

    create_dir(out)?;
    let ctx = output::RunContext {
        digest: &digest,
        seed: cfg.seed,
    };
    output::write_analysis(out, &ctx, &pooled, None).map_err(Failure::output)?;
    let labels = output::unique_dir_names(stratum_runs.iter().map(|(l, _)| l.as_str()));
    for ((label, analysis), dir_name) in stratum_runs.iter().zip(&labels) {
        let dir = out.join("strata").join(dir_name);
        create_dir(&dir)?;
        output::write_analysis(&dir, &ctx, analysis, Some(label)).map_err(Failure::output)?;
    }
    let manifest = output::Manifest::new(&cfg, &digest, data, &data_digest, &frame, &pooled, &stratum_runs, &labels, started.elapsed());
    output::write_json(&out.join("run_manifest.json"), &manifest).map_err(Failure::output)?;
    Ok(())
}

/// Runs a suite; returns exit code 1 when any of its thresholds fails.
pub fn cmd_simulate(suite: &str, out: &Path, overrides: &SuiteOverrides) -> CmdResult<i32> {
    let outcome = run_suite(suite, overrides).map_err(Failure::estimation)?;
    create_dir(out)?;
    output::write_suite(out, &outcome).map_err(Failure::output)?;
    for c in &outcome.checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if outcome.passed() { EXIT_OK } else { EXIT_THRESHOLDS })
}

/// Writes `summary_treatment.{csv,json}` and, with strata, `summary_strata.{csv,json}`.
pub fn cmd_summarize(config: &Path, data: &Path, out: &Path) -> CmdResult<()> {
    let (cfg, frame) = load_inputs(config, data)?;
    let ctx = output::RunContext {
        digest: &cfg.digest(),
        seed: cfg.seed,
    };
    create_dir(out)?;
    let mut groupings = vec![("treatment", GroupBy::Treatment)];
    if frame.strata().is_some() {
        groupings.push(("strata", GroupBy::Strata));
    }
    for (name, by) in groupings {
        let table = summarize(&frame, by);
        output::write_summary(out, name, &ctx, &table).map_err(Failure::output)?;
    }
    Ok(())
}
