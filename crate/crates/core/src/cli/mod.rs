//! Command-line front end: config loading, suite dispatch and artifacts.
//!
//! Every run writes `manifest.json` (resolved config, solver outputs,
//! versions, seeds), one or more CSV files and `verdict.json` into the output
//! directory. Rerunning from the manifest reproduces the CSVs byte for byte,
//! whatever the thread count.

pub mod config;
pub mod output;
pub mod suites;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

pub use config::{ExperimentConfig, Suite};
pub use output::{Check, Status, Table, Verdict};

use crate::error::{Error, Result};
use suites::Context;

#[derive(Debug, Parser)]
#[command(name = "twospeed", version, about = "Monte Carlo laboratory for two-speed branching random walks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config, or a manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    Params,
    Simulate,
    MaxLaw,
    Clt,
    Decoration,
    SpineCheck,
    /// Prints the verdict of an earlier run.
    Report,
}

impl Command {
    /// Suite run by this subcommand; `max-law` follows the config or the regime.
    fn suite(self, cfg: &ExperimentConfig, ctx: &Context) -> Result<Suite> {
        let wanted = match self {
            Command::Params => Suite::Params,
            Command::Simulate => Suite::Simulate,
            Command::Clt => Suite::Clt,
            Command::Decoration => Suite::Decoration,
            Command::SpineCheck => Suite::SpineCheck,
            Command::MaxLaw => {
                return Ok(match cfg.suite {
                    Some(s @ (Suite::MaxLaw | Suite::SlowMaxLaw | Suite::MeanExploratory)) => s,
                    _ => match ctx.spec()?.regime {
                        crate::params::Regime::Fast => Suite::MaxLaw,
                        crate::params::Regime::Slow => Suite::SlowMaxLaw,
                        crate::params::Regime::Mean => Suite::MeanExploratory,
                    },
                })
            }
            Command::Report => unreachable!("report runs no suite"),
        };
        match cfg.suite {
            Some(s) if s != wanted => Err(Error::Config {
                path: "suite".into(),
                message: format!("config names suite {} but the subcommand runs {}", s.name(), wanted.name()),
            }),
            _ => Ok(wanted),
        }
    }
}

/// Result of one run, as written to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub verdict: Verdict,
    pub csv_files: Vec<PathBuf>,
}

/// Runs `suite` and writes its artifacts into `cfg.output_dir`.
pub fn run(cfg: &ExperimentConfig, command: Command) -> Result<RunOutcome> {
    cfg.validate()?;
    let ctx = Context::new(cfg)?;
    let suite = command.suite(cfg, &ctx)?;
    let out = suites::run_suite(suite, cfg, &ctx);
    let out = match out {
        Ok(o) => o,
        Err(Error::PartialResult { trials, accepted, rate }) if cfg.allow_partial => suites::SuiteOutput {
            tables: Vec::new(),
            report: ctx.solver_report(),
            checks: vec![Check::warn(
                "partial_result",
                accepted as f64,
                format!("{accepted} accepted after {trials} trials (rate {rate})"),
            )],
        },
        Err(e) => return Err(e),
    };
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut resolved = cfg.clone();
    resolved.suite = Some(suite);
    let manifest = json!({
        "manifest_version": 1,
        "config": resolved,
        "solver": ctx.solver_report(),
        "report": out.report,
        "versions": { "twospeed": env!("CARGO_PKG_VERSION") },
        "seeds": { "master_seed": cfg.master_seed },
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    let mut csv_files = Vec::new();
    for (name, table) in &out.tables {
        let path = dir.join(name);
        table.write(&path)?;
        csv_files.push(path);
    }
    let verdict = Verdict::new(suite.name(), out.checks);
    write_json(&dir.join("verdict.json"), &verdict)?;
    Ok(RunOutcome {
        out_dir: dir.clone(),
        verdict,
        csv_files,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_verdict(dir: &Path) -> Result<Verdict> {
    let text = std::fs::read_to_string(dir.join("verdict.json"))?;
    serde_json::from_str(&text).map_err(|e| Error::Config {
        path: "verdict.json".into(),
        message: e.to_string(),
    })
}

pub fn print_verdict(v: &Verdict) {
    for c in &v.checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Warn => "WARN",
            Status::Fail => "FAIL",
        };
        println!("{tag} {:<40} {:>14.6e}  {}", c.name, c.value, c.rule);
    }
    println!("{}: {:?}", v.suite, v.overall);
}

/// Entry point behind the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    if cli.command == Command::Report {
        let dir = match (&cli.out, &cli.config) {
            (Some(d), _) => d.clone(),
            (None, Some(c)) => ExperimentConfig::load(c)?.output_dir,
            (None, None) => {
                return Err(Error::Parameter("report needs --out or --config".into()));
            }
        };
        let v = read_verdict(&dir)?;
        print_verdict(&v);
        return Ok(if v.failed() { 1 } else { 0 });
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Parameter("--config PATH is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    let outcome = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Parameter(e.to_string()))?
            .install(|| run(&cfg, cli.command))?,
        None => run(&cfg, cli.command)?,
    };
    print_verdict(&outcome.verdict);
    Ok(if outcome.verdict.failed() { 1 } else { 0 })
}
