//! `psbench`: generate claims datasets, cross-validate propensity score
//! estimators on them and compare the resulting reports.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O error,
//! 1 any other failure during execution.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use psbench::estimate::{render_table, run_cv_with, sort_reports, EvaluationReport};
use psbench::Error;

use config::{DatasetSource, ExperimentConfig};

#[derive(Parser)]
#[command(name = "psbench", version, about = "Propensity score estimation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON). Relative paths inside it resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset and print its summary statistics.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validate every configured estimator and write one report each.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads for fold parallelism; 1 keeps the deterministic sequential path.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Merge report files (or directories of them) into one comparison.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Also write comparison.txt and comparison.json here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
}

const DATASET_FILE: &str = "dataset.jsonl";

struct Loaded {
    cfg: ExperimentConfig,
    base: PathBuf,
    out: PathBuf,
}

fn load(common: &Common) -> anyhow::Result<Loaded> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let base = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let out = common.out.clone().unwrap_or_else(|| base.join(&cfg.out));
    Ok(Loaded { cfg, base, out })
}

fn generate(common: &Common) -> anyhow::Result<()> {
    let Loaded { cfg, base, out } = load(common)?;
    if let DatasetSource::Path(p) = &cfg.dataset {
        bail!(Error::Config(format!(
            "dataset source is the existing file {}; nothing to generate",
            p.display()
        )));
    }
    let ds = cfg.dataset(&base)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(DATASET_FILE);
    ds.save(&path)?;
    println!("{}", ds.stats());
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn report_path(out: &Path, name: &str) -> PathBuf {
    out.join("reports").join(format!("{name}.json"))
}

fn write_comparison(out: &Path, reports: &mut [EvaluationReport]) -> anyhow::Result<String> {
    sort_reports(reports);
    let table = render_table(reports);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("comparison.txt"), &table)?;
    std::fs::write(
        out.join("comparison.json"),
        serde_json::to_string_pretty(&reports)? + "\n",
    )?;
    Ok(table)
}

fn run(common: &Common, threads: Option<usize>) -> anyhow::Result<()> {
    let Loaded { mut cfg, base, out } = load(common)?;
    if let Some(t) = threads {
        cfg.threads = t;
    }
    let plan = cfg.plan()?;
    let cv = cfg.cv()?;
    let ds = cfg.dataset(&base)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut reports = Vec::new();
    for p in &plan {
        let path = report_path(&out, p.spec.name());
        eprintln!("{}: {}-fold cross-validation", p.spec, cv.k);
        let report = run_cv_with(&ds, p.spec, &p.train, &cv, |partial| {
            eprintln!("  {} / {} folds", partial.folds.len(), partial.k);
            partial.save(&path)
        })?;
        reports.push(report);
    }
    let table = write_comparison(&out, &mut reports)?;
    println!("{table}");
    Ok(())
}

fn collect_reports(paths: &[PathBuf]) -> anyhow::Result<Vec<EvaluationReport>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            inner.retain(|f| f.extension().is_some_and(|e| e == "json"));
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!(Error::Config("no report files found".into()));
    }
    files
        .iter()
        .map(|f| EvaluationReport::load(f).map_err(Into::into))
        .collect()
}

fn report(paths: &[PathBuf], out: Option<&Path>, json: bool) -> anyhow::Result<()> {
    let mut reports = collect_reports(paths)?;
    let table = match out {
        Some(dir) => write_comparison(dir, &mut reports)?,
        None => {
            sort_reports(&mut reports);
            render_table(&reports)
        }
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        println!("{table}");
    }
    Ok(())
}

/// Maps the first recognizable cause to the exit-code contract.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            match e {
                Error::Config(_)
                | Error::ScenarioInapplicable(_)
                | Error::Ingestion { .. }
                | Error::Injection(_)
                | Error::Json(_) => return 2,
                Error::Io(_) => return 3,
                Error::Fold { .. } => continue,
                _ => return 1,
            }
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { common } => generate(common),
        Command::Run { common, threads } => run(common, *threads),
        Command::Report { paths, out, json } => report(paths, out.as_deref(), *json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
