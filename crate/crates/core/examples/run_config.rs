//! Runs a suite from a JSON config through the library front end, as the
//! binary does, and prints the verdict.
//!
//! `cargo run --example run_config -- configs/params.json params`

use std::path::PathBuf;

use twospeed::cli::{self, Command, ExperimentConfig};

fn main() -> twospeed::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| "configs/params.json".into()));
    let command = match args.next().as_deref() {
        None | Some("params") => Command::Params,
        Some("simulate") => Command::Simulate,
        Some("max-law") => Command::MaxLaw,
        Some("clt") => Command::Clt,
        Some("decoration") => Command::Decoration,
        Some("spine-check") => Command::SpineCheck,
        Some(other) => return Err(twospeed::Error::Parameter(format!("unknown suite {other}"))),
    };
    let cfg = ExperimentConfig::load(&path)?;
    let outcome = cli::run(&cfg, command)?;
    cli::print_verdict(&outcome.verdict);
    for f in &outcome.csv_files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
