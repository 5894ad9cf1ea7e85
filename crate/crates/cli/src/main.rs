use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::Parser;
use polaron_cli::output::{git_describe, sha256_hex, write_run, ArtifactDigest, Manifest};
use polaron_cli::{run, Command, ExperimentConfig};

/// Numerical experiments on the discretized polaron path measure.
#[derive(Parser, Debug)]
#[command(name = "polaron", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `section.key=value`, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let start = Instant::now();
    let report = match run(cli.command, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{} failed: {e:#}", cli.command.name());
            return ExitCode::from(1);
        }
    };
    let manifest = Manifest {
        command: cli.command.name().into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg.to_toml(),
        git_describe: git_describe(),
        wall_time_s: start.elapsed().as_secs_f64(),
        artifacts: report.artifacts.iter().map(|(n, c)| ArtifactDigest { name: n.clone(), sha256: sha256_hex(c.as_bytes()) }).collect(),
        checks: report.checks.clone(),
        warnings: report.warnings.clone(),
    };
    if let Err(e) = write_run(&cli.out, &report, &manifest) {
        eprintln!("writing output: {e:#}");
        return ExitCode::from(1);
    }
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for w in &report.warnings {
        println!("WARN {w}");
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
