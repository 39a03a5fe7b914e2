//! `locscale`: batch experiments on random lattice Hamiltonians.

mod commands;
mod config;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use locscale_core::Error;

use crate::commands::Ctx;
use crate::config::ExperimentConfig;
use crate::output::{check_writable, write_all, RunOutput};

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "locscale",
    version,
    about = "Finite-volume scaling experiments for lattice Anderson models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify balls by every predicate at one energy.
    Classify(RunArgs),
    /// Monte Carlo scale induction with per-sample lemma checks.
    Induct(RunArgs),
    /// Resonance frequencies against the single-site oracles.
    Wegner(RunArgs),
    /// Correlator bound and eigenfunction decay.
    Correlator(RunArgs),
    /// Combes–Thomas, Lifshitz statistics and low-energy bands.
    Edge(RunArgs),
    /// Random geometric resolvent inequality instances.
    GriFuzz(RunArgs),
    /// Pool result directories across seeds.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Worker threads (does not change any artifact).
    #[arg(long, env = "LOCSCALE_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Directory for report.txt and the pooled CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn is_config_error(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<Error>(),
        Some(
            Error::InvalidGeometry(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidGenerator(_)
                | Error::InvalidOperator(_)
                | Error::InvalidParameter(_)
                | Error::ParamViolations(_)
                | Error::CostGuard { .. }
        )
    )
}

fn run(name: &str, args: &RunArgs) -> ExitCode {
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    };
    let cfg = match cfg.and_then(|c| c.validate(name == "induct").map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = check_writable(&args.out) {
        eprintln!("config error: {e:#}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let workers = args.workers.or(cfg.workers).unwrap_or(1);
    if workers == 0 {
        eprintln!("config error: workers must be positive");
        return ExitCode::from(EXIT_CONFIG);
    }
    let ctx = Ctx {
        cfg: &cfg,
        seed: args.seed,
        workers,
    };
    let result: anyhow::Result<RunOutput> = match name {
        "classify" => commands::classify(&ctx),
        "induct" => commands::induct(&ctx),
        "wegner" => commands::wegner(&ctx),
        "correlator" => commands::correlator(&ctx),
        "edge" => commands::edge(&ctx),
        "gri-fuzz" => commands::gri_fuzz(&ctx),
        _ => unreachable!("dispatch covers every subcommand"),
    };
    let out = match result {
        Ok(o) => o,
        Err(e) if is_config_error(&e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let code = if !out.complete {
        EXIT_BUDGET
    } else if out.violations > 0 {
        EXIT_VIOLATION
    } else {
        0
    };
    print!("{}", out.report);
    if let Err(e) = write_all(&args.out, name, args.seed, &cfg, &out, code as i32) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    ExitCode::from(code)
}

fn report(args: &ReportArgs) -> ExitCode {
    let summary = match report::aggregate(&args.dirs) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("report: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    print!("{}", summary.text);
    if let Some(dir) = &args.out {
        let out = RunOutput {
            tables: summary.tables,
            report: summary.text,
            complete: true,
            ..Default::default()
        };
        let res = std::fs::create_dir_all(dir)
            .map_err(anyhow::Error::from)
            .and_then(|_| {
                std::fs::write(dir.join("report.txt"), &out.report)?;
                for t in &out.tables {
                    let mut w = csv::Writer::from_path(dir.join(&t.file))?;
                    w.write_record(&t.header)?;
                    for r in &t.rows {
                        w.write_record(r)?;
                    }
                    w.flush()?;
                }
                Ok(())
            });
        if let Err(e) = res {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Classify(a) => run("classify", a),
        Command::Induct(a) => run("induct", a),
        Command::Wegner(a) => run("wegner", a),
        Command::Correlator(a) => run("correlator", a),
        Command::Edge(a) => run("edge", a),
        Command::GriFuzz(a) => run("gri-fuzz", a),
        Command::Report(a) => report(a),
    }
}
