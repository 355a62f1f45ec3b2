//! Command-line front end: train experiments from JSON configs, solve small
//! models exactly, print oracle reference values, and rebuild report files.
//!
//! Every failure path exits nonzero after printing a single JSON error line
//! to stderr, so scripts can parse outcomes without scraping free text.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use armrl::cfr::{cfr_solve, CfrVariant};
use armrl::harness::{
    cfr_trace_csv, load_config, parse_runs_dir, report_dir, run_experiment, EnvKind, ENV_NAMES,
};
use armrl::pomdp::{best_memoryless_policy, value_iteration, SearchSpec};

#[derive(Parser)]
#[command(
    name = "armrl",
    version,
    about = "Regret-matched advantage learning on small partially observable environments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every seed of a JSON experiment config and write metrics CSVs.
    Train {
        /// Experiment config file.
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Write outputs here instead of the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve an environment's explicit model by iterated regret matching.
    CfrSolve {
        /// Registered environment name.
        #[arg(long)]
        env: String,
        #[arg(long, value_enum)]
        variant: Variant,
        /// Solver iterations.
        #[arg(long)]
        iters: usize,
        /// Also write the iteration trace CSV to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print exact reference values for an environment.
    Oracle {
        /// Registered environment name.
        #[arg(long)]
        env: String,
    },
    /// Rebuild summary.csv and plot.csv from a directory of run CSVs.
    Report {
        /// Directory holding per-run metrics CSVs.
        #[arg(long)]
        runs: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Variant {
    Cfr,
    Cfrplus,
}

fn env_by_name(name: &str) -> Result<EnvKind> {
    EnvKind::from_name(name).with_context(|| {
        let known: Vec<&str> = ENV_NAMES.iter().map(|(n, _)| *n).collect();
        format!("unknown environment `{name}` (known: {})", known.join(", "))
    })
}

fn train(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(seed) = seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    let report = run_experiment(&cfg)?;
    for (run_id, path) in &report.completed {
        println!("wrote {} ({run_id})", path.display());
    }
    if let Some(path) = &report.summary_path {
        println!("wrote {}", path.display());
    }
    if !report.failures.is_empty() {
        let ids: Vec<&str> = report.failures.iter().map(|(id, _)| id.as_str()).collect();
        bail!(
            "{} of {} runs failed ({}): {}",
            report.failures.len(),
            report.failures.len() + report.completed.len(),
            ids.join(", "),
            report.failures[0].1
        );
    }
    Ok(())
}

fn solve(env: String, variant: Variant, iters: usize, out: Option<PathBuf>) -> Result<()> {
    if iters == 0 {
        bail!("--iters must be at least 1");
    }
    let model = env_by_name(&env)?.model(false);
    let variant = match variant {
        Variant::Cfr => CfrVariant::Cfr,
        Variant::Cfrplus => CfrVariant::CfrPlus,
    };
    let outcome = cfr_solve(&model, iters, variant);
    let last = outcome.trace.last().expect("at least one iteration");
    println!("iterations: {iters}");
    println!("final J: {}", last.j);
    println!("final max immediate regret: {}", last.max_immediate_regret);
    println!("final avg regret: {}", last.avg_regret);
    if let Some(path) = out {
        std::fs::write(&path, cfr_trace_csv(&outcome.trace))
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn oracle(env: String) -> Result<()> {
    let model = env_by_name(&env)?.model(false);
    let vi = value_iteration(&model, model.discount);
    println!("env: {env}");
    println!("value-iteration upper bound: {}", vi.j);
    let search = best_memoryless_policy(&model, model.discount, &SearchSpec::default())?;
    println!("best memoryless value (J*): {}", search.value);
    match &search.deterministic {
        Some((_, v)) => println!("best deterministic memoryless: {v}"),
        None => println!("best deterministic memoryless: skipped (search too large)"),
    }
    match &search.stochastic_grid {
        Some((_, v)) => println!("best stochastic mix (grid): {v}"),
        None => println!("best stochastic mix (grid): skipped (search too large)"),
    }
    Ok(())
}

fn report(runs: PathBuf) -> Result<()> {
    let parsed = parse_runs_dir(&runs)?;
    if parsed.is_empty() {
        bail!("no run CSVs under {}", runs.display());
    }
    let (summary, plot) = report_dir(&runs)?;
    println!("wrote {}", summary.display());
    println!("wrote {}", plot.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train { config, seed, out } => train(config, seed, out),
        Cmd::CfrSolve { env, variant, iters, out } => solve(env, variant, iters, out),
        Cmd::Oracle { env } => oracle(env),
        Cmd::Report { runs } => report(runs),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            ExitCode::FAILURE
        }
    }
}
