use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use pls_core::bench::{load_runs, persist_run, run_cell, run_grid, summarize, ExperimentConfig};
use pls_core::credal::CriterionKind;
use pls_core::data::generate_synthetic;
use pls_core::{PlsError, Result};

/// Pseudo-label selection benchmarks for self-training logistic models.
#[derive(Parser)]
#[command(name = "pls-bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Restrict to one seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict to one criterion (see `CriterionKind` names).
    #[arg(long, global = true)]
    criterion: Option<String>,
    /// Restrict Gamma-Maximin to one alpha.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Output directory (a file path for `simulate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Simulate,
    /// One criterion, one seed; writes the run file.
    Run,
    /// The full criterion x seed grid plus summary CSV/JSON.
    Bench,
    /// Aggregate existing run files into report CSV/JSON.
    Report,
}

fn config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if let Some(c) = &common.criterion {
        cfg.criteria = vec![c.clone()];
    }
    if let Some(a) = common.alpha {
        cfg.alphas = vec![a];
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(j) = cli.common.jobs {
        if j == 0 {
            return Err(PlsError::InvalidConfig {
                field: "jobs".into(),
                reason: "must be >= 1".into(),
            });
        }
        // only fails if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match cli.command {
        Command::Simulate => {
            let mut common = cli.common;
            let out = common.out.take();
            let cfg = config(&common)?;
            let seed = cfg.seeds[0];
            let path = out.unwrap_or_else(|| cfg.output_dir.join(format!("synthetic_seed{seed}.csv")));
            let d = generate_synthetic(&cfg.synthetic_spec(seed))?;
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| PlsError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
            d.write_csv(&path, &cfg.label_column)?;
            println!("{}", path.display());
        }
        Command::Run => {
            let cfg = config(&cli.common)?;
            let kind = cfg.criterion_kinds()?[0];
            let seed = cfg.seeds[0];
            let result = run_cell(&cfg, kind, seed)?;
            let path = cfg.run_path(&kind, seed);
            persist_run(&result, &path)?;
            println!("{}", path.display());
        }
        Command::Bench => {
            let cfg = config(&cli.common)?;
            let (summary, report) = run_grid(&cfg)?;
            println!(
                "{} runs ({} computed, {} reused), {} summary rows in {}",
                report.computed + report.reused,
                report.computed,
                report.reused,
                summary.rows.len(),
                cfg.output_dir.join("summary.csv").display()
            );
        }
        Command::Report => {
            let cfg = config(&cli.common)?;
            let runs = load_runs(&cfg.runs_dir())?;
            let order: Vec<CriterionKind> = match &cli.common.config {
                Some(_) => cfg.criterion_kinds()?,
                None => Vec::new(),
            };
            let summary = summarize(&runs, &order)?;
            let (csv, _) = summary.write(&cfg.output_dir, "report")?;
            println!("{}", csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
