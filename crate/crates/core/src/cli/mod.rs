//! Config-driven experiment runner.
//!
//! `anisomax run --config <path> --experiment <name> [--out <dir>] [--seed <u64>] [--override key=value]`
//! writes `manifest.json`, `summary.txt`, one CSV per table, lattice fields
//! (`.bin`, plus `.csv` when small) and `trace.jsonl` into
//! `<out>/<experiment>/`. The output root is `--out`, else `$ANISOMAX_OUT`,
//! else `out` from the config, else `runs`.

pub mod config;
pub mod experiments;
pub mod instances;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

pub use config::ExperimentConfig;
pub use experiments::{Experiment, Outcome};

use crate::{Error, Result};

/// Environment variable naming the output root.
pub const OUT_ENV: &str = "ANISOMAX_OUT";

/// Fields with at most this many values are also written as CSV.
const SMALL_FIELD: usize = 4096;

#[derive(Debug, Parser)]
#[command(name = "anisomax", version, about = "Anisotropic surface maximal function experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one named experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        experiment: Experiment,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// `key=value` with dotted keys, e.g. `verifier.c_w=8`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

/// Exit status for an error: 2 for bad configuration or input, 3 for an
/// exhausted budget, 1 otherwise.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigInvalid(_)
        | Error::NonSquare { .. }
        | Error::EigenvalueNotExpanding { .. }
        | Error::NotNormalized(_)
        | Error::InputInvalid(_)
        | Error::ResolutionTooCoarse(_) => 2,
        Error::BudgetExceeded(_) => 3,
        _ => 1,
    }
}

pub fn main_with(cli: Cli) -> ExitCode {
    let Command::Run { config, experiment, out, seed, overrides } = cli.command;
    let env_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
    let result = ExperimentConfig::load(&config, &overrides).and_then(|mut cfg| {
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let root = out.or(env_out).or_else(|| cfg.out.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("runs"));
        run_and_write(&cfg, experiment, &root)
    });
    match result {
        Ok((dir, outcome)) => {
            for c in &outcome.checks {
                eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            eprintln!("artifacts in {}", dir.display());
            ExitCode::from(if outcome.passed() { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Runs `experiment` and writes its artifacts under `root/<experiment>/`.
pub fn run_and_write(cfg: &ExperimentConfig, experiment: Experiment, root: &Path) -> Result<(PathBuf, Outcome)> {
    let start = std::time::Instant::now();
    let outcome = experiments::run(cfg, experiment)?;
    eprintln!("{} finished in {:.2?}", experiment.name(), start.elapsed());
    let dir = root.join(experiment.name());
    fs::create_dir_all(&dir)?;
    write_artifacts(cfg, experiment, &outcome, &dir)?;
    Ok((dir, outcome))
}

fn write_artifacts(cfg: &ExperimentConfig, experiment: Experiment, o: &Outcome, dir: &Path) -> Result<()> {
    let mut files: Vec<String> = o.tables.iter().map(|t| format!("{}.csv", t.name)).collect();
    for t in &o.tables {
        fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv())?;
    }
    for (name, field) in &o.fields {
        let bin = format!("{name}.bin");
        field.write_binary(BufWriter::new(fs::File::create(dir.join(&bin))?))?;
        files.push(bin);
        if field.values.len() <= SMALL_FIELD {
            let csv = format!("{name}.csv");
            field.write_csv(BufWriter::new(fs::File::create(dir.join(&csv))?))?;
            files.push(csv);
        }
    }
    let mut trace = o.trace.join("\n");
    if !trace.is_empty() {
        trace.push('\n');
    }
    fs::write(dir.join("trace.jsonl"), trace)?;

    let manifest = json!({
        "experiment": experiment.name(),
        "seed": cfg.seed,
        "config": cfg,
        "versions": {
            "anisomax": env!("CARGO_PKG_VERSION"),
            "field_format": 1,
        },
        "constants": o.constants,
        "files": files,
        "checks": o.checks.iter().map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail})).collect::<Vec<_>>(),
        "pass": o.passed(),
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;

    let mut s = format!("experiment: {}\nseed: {}\n\n", experiment.name(), cfg.seed);
    for line in &o.summary {
        s.push_str(line);
        s.push('\n');
    }
    s.push('\n');
    for c in &o.checks {
        s.push_str(&format!("{} {}: {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    s.push_str(&format!("\noverall: {}\n", if o.passed() { "PASS" } else { "FAIL" }));
    fs::write(dir.join("summary.txt"), s)?;
    Ok(())
}
