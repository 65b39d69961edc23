mod theory;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gdro_core::oracles::{sqrt_allocation, VarianceAllocQuery};
use gdro_core::runner::{compare_runs, parse_complete_trace, replay_diagnostics, run, write_outputs, RunConfig};
use log::info;

use theory::{run_suite, Suite};

/// Multi-adversary group-DRO simulator for GRPO-style training.
#[derive(Parser)]
#[command(name = "gdro", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write its artifacts.
    Simulate {
        /// Flat TOML config; GDRO_SEED overrides its seed.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run randomized numerical checks of the controllers' guarantees.
    TheoryCheck {
        /// Run a single suite instead of all of them.
        #[arg(long, value_enum)]
        suite: Option<Suite>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print JSON reports instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Variance-optimal continuous rollout allocation for given bin variances and shares.
    SqrtLaw {
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        v: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        q: Vec<f64>,
        #[arg(long)]
        budget: f64,
    },
    /// Compare two traces: worst-bin pass@k, WSE reduction and final mass metrics.
    Report {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Recompute diagnostics.csv from a trace.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Simulate { config, out } => {
            let cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            info!("running {} for {} steps (seed {})", cfg.mode.as_str(), cfg.steps, cfg.seed);
            let outcome = run(&cfg)?;
            write_outputs(&outcome, &out)?;
            let s = &outcome.trace.summary;
            println!(
                "{}: {} steps, worst-bin pass@k {:.4} -> {:.4}, mean WSE {:.4} (uniform {:.4}), outputs in {}",
                cfg.mode.as_str(),
                s.steps,
                s.initial_worst_bin_pass_at_k,
                s.final_worst_bin_pass_at_k,
                s.mean_wse,
                s.mean_wse_uniform,
                out.display()
            );
            Ok(true)
        }
        Command::TheoryCheck { suite, seed, json } => {
            let suites: Vec<Suite> = suite.map_or_else(|| Suite::ALL.to_vec(), |s| vec![s]);
            let mut all = true;
            for s in suites {
                let report = run_suite(s, seed)?;
                all &= report.pass;
                if json {
                    println!("{}", serde_json::to_string(&report)?);
                } else {
                    println!(
                        "{:<13} {} instances={} failed_checks={} worst_ratio={:.3e}",
                        serde_json::to_value(s)?.as_str().unwrap_or_default(),
                        if report.pass { "PASS" } else { "FAIL" },
                        report.instances,
                        report.failed_checks,
                        report.worst_ratio
                    );
                }
            }
            Ok(all)
        }
        Command::SqrtLaw { v, q, budget } => {
            if v.len() != q.len() {
                bail!("--v and --q need the same number of entries");
            }
            let r = sqrt_allocation(&VarianceAllocQuery {
                variances: v,
                shares: q,
                mean_budget: budget,
            })?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(true)
        }
        Command::Report { a, b } => {
            let ta = parse_complete_trace(&read(&a)?).with_context(|| format!("parsing {}", a.display()))?;
            let tb = parse_complete_trace(&read(&b)?).with_context(|| format!("parsing {}", b.display()))?;
            println!("{}", serde_json::to_string_pretty(&compare_runs(&ta, &tb)?)?);
            Ok(true)
        }
        Command::Replay { trace, out } => {
            let csv = replay_diagnostics(&read(&trace)?).with_context(|| format!("replaying {}", trace.display()))?;
            match out {
                Some(path) => fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
