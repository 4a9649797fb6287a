use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use beamsteer::manifest::load_manifest;
use beamsteer::suite::output_dir;
use beamsteer::{run_one, run_suite};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(version, about = "Stereo-guided laser steering simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a suite manifest.
    Run {
        manifest: PathBuf,
        /// Output directory (overrides BEAMSTEER_OUT and the manifest).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a single scenario file.
    RunOne {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized property suites.
    Check {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Time the per-iteration control computations.
    Bench {
        #[arg(long, default_value_t = 200_000)]
        calls: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { manifest, out } => {
            let m = load_manifest(&manifest).with_context(|| format!("loading {}", manifest.display()))?;
            let dir = output_dir(out, Some(&m));
            let report = run_suite(&m, &dir);
            print!("{}", report.render());
            println!("outputs in {}", dir.display());
            Ok(ExitCode::from(report.exit_code() as u8))
        }
        Command::RunOne { scenario, out } => {
            let dir = output_dir(out, None);
            let result = run_one(&scenario, &dir, None, None).map_err(anyhow::Error::msg)?;
            print!("{}", result.summary_report());
            Ok(if result.outcome.is_failure() { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Check { seed } => {
            let start = Instant::now();
            let reports = beamsteer_core::checks::run_all(seed);
            for r in &reports {
                println!(
                    "{} {:<32} cases={:<6} worst={:.3e} tol={:.0e} ({:.1} ms)",
                    verdict(r.passed()),
                    r.name,
                    r.cases,
                    r.worst,
                    r.tolerance,
                    r.elapsed.as_secs_f64() * 1e3
                );
            }
            println!("total {:.2} s", start.elapsed().as_secs_f64());
            Ok(if reports.iter().all(|r| r.passed()) { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Bench { calls } => {
            let reports = beamsteer_core::bench::run_all(calls);
            for r in &reports {
                let reference = r
                    .reference_ns
                    .map_or(String::new(), |ns| format!(", published reference {:.1} us", ns / 1e3));
                println!(
                    "{} {:<18} median {:>9.3} us per call (bound {:.0} us{reference})",
                    verdict(r.passed()),
                    r.name,
                    r.median_ns / 1e3,
                    r.bound_ns / 1e3
                );
            }
            Ok(if reports.iter().all(|r| r.passed()) { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
