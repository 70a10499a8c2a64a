use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use polariton_lab::config::{parse_config, Mode};
use polariton_lab::run::run;

#[derive(Clone, Copy, ValueEnum)]
enum Cli {
    Transform,
    Dispersion,
    Propagate,
    Scenario,
}

impl From<Cli> for Mode {
    fn from(m: Cli) -> Self {
        match m {
            Cli::Transform => Mode::Transform,
            Cli::Dispersion => Mode::Dispersion,
            Cli::Propagate => Mode::Propagate,
            Cli::Scenario => Mode::Scenario,
        }
    }
}

/// Morris-Shore reduction, dark-polariton dispersion and stationary-light
/// simulations driven by a TOML configuration.
#[derive(Parser)]
#[command(name = "polariton-lab", version)]
struct Args {
    mode: Cli,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for per-mode parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global thread pool is configured once");
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let config = match parse_config(&text, Some(args.mode.into())) {
        Ok(c) => c,
        Err(issues) => {
            eprintln!("error: configuration has {} problem(s):", issues.len());
            for i in issues {
                eprintln!("  {i}");
            }
            return ExitCode::from(2);
        }
    };
    let out = args
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("polariton-lab-out"));
    match run(&config, &out) {
        Ok(m) => {
            for c in &m.checks {
                println!(
                    "{} {} = {:.6e} ({} {:.3e}{})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.comparison,
                    c.threshold,
                    if c.hard { "" } else { ", report only" }
                );
            }
            for w in &m.warnings {
                println!("warning: {w}");
            }
            println!("wrote {}", out.join("manifest.json").display());
            ExitCode::from(m.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
