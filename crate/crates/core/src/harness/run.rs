//! Seeded multi-run execution and CSV emission.
//!
//! A validated [`ExperimentConfig`] expands into one run per seed. Runs
//! execute in parallel; every byte written is determined by the config and
//! seed list alone, so rerunning a config reproduces its output files
//! exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::arm::{arm_train, ArmTrainConfig, FitConfig, IterationRow, OffPolicyConfig};
use crate::baselines::{a2c_train, dqn_train, A2cConfig, DqnConfig};
use crate::cfr::{cfr_solve, CfrRow, CfrVariant};
use crate::pomdp::{Env, EnvModel, FrameStack, ModelEnv, DEFAULT_INTERN_CAPACITY};

use super::config::{Algorithm, EnvSpec, ExperimentConfig};
use super::metrics::{emit_plot_data, mean_std, RunCurve};

pub const RL_CSV_HEADER: &str =
    "run_id,seed,iteration,env_steps,mean_return,episode_count,max_abs_advantage,policy_entropy,exact_j";
pub const SOLVER_CSV_HEADER: &str = "run_id,seed,iteration,J,max_immediate_regret,avg_regret";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed metrics row at line {line}")]
    Malformed { path: PathBuf, line: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// What one run produced: a learner's metrics rows or a solver's trace.
pub enum RunTrace {
    Rl(Vec<IterationRow>),
    Solver(Vec<CfrRow>),
}

/// Instantiate the configured environment, plus the explicit model for
/// exact policy evaluation when observations are the model's own (no frame
/// stacking re-keys them).
pub fn build_env(spec: &EnvSpec) -> (Box<dyn Env>, Option<EnvModel>) {
    let model = spec.kind.model(spec.occlusion);
    if spec.frame_history == 1 {
        (Box::new(ModelEnv::new(model.clone())), Some(model))
    } else {
        let stacked =
            FrameStack::new(ModelEnv::new(model), spec.frame_history, DEFAULT_INTERN_CAPACITY);
        (Box::new(stacked), None)
    }
}

/// Execute one seed of the experiment. Errors come back as display strings:
/// the caller records them alongside the runs that succeeded.
pub fn execute_run(cfg: &ExperimentConfig, seed: u64) -> Result<RunTrace, String> {
    let h = &cfg.hyper;
    let arch = cfg.approximator.arch();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match cfg.algorithm {
        Algorithm::Arm | Algorithm::ArmOffpolicy => {
            let (mut env, eval) = build_env(&cfg.env);
            let train_cfg = ArmTrainConfig {
                iterations: h.iterations,
                batch_size: h.batch_size,
                fit: FitConfig {
                    n_step: h.n,
                    minibatch: h.minibatch,
                    grad_steps: h.grad_steps,
                    lr: h.lr,
                    tau: h.tau,
                    discount: h.gamma,
                },
                arch,
                offpolicy: (cfg.algorithm == Algorithm::ArmOffpolicy)
                    .then_some(OffPolicyConfig { clip: h.c, memory_batches: h.replay_capacity }),
            };
            arm_train(env.as_mut(), &train_cfg, eval.as_ref(), &mut rng)
                .map(|run| RunTrace::Rl(run.rows))
                .map_err(|e| e.to_string())
        }
        Algorithm::Dqn => {
            let (mut env, eval) = build_env(&cfg.env);
            let train_cfg = DqnConfig {
                total_steps: h.iterations * h.batch_size,
                n_step: h.n,
                minibatch: h.minibatch,
                lr: h.lr,
                replay_capacity: h.replay_capacity,
                replay_warmup: h.replay_capacity.min(1_000),
                steps_per_update: 4,
                target_copy_every: 500,
                eps_start: h.eps_start,
                eps_end: h.eps_end,
                eps_fraction: h.eps_fraction,
                report_every: h.batch_size,
                discount: h.gamma,
                arch,
            };
            dqn_train(env.as_mut(), &train_cfg, eval.as_ref(), &mut rng)
                .map(|run| RunTrace::Rl(run.rows))
                .map_err(|e| e.to_string())
        }
        Algorithm::A2c => {
            let (mut env, eval) = build_env(&cfg.env);
            let train_cfg = A2cConfig {
                iterations: h.iterations,
                batch_size: h.batch_size,
                n_step: h.n,
                minibatch: h.minibatch,
                grad_steps: h.grad_steps,
                lr: h.lr,
                beta: h.beta,
                grad_clip: 0.5,
                discount: h.gamma,
                arch,
            };
            a2c_train(env.as_mut(), &train_cfg, eval.as_ref(), &mut rng)
                .map(|run| RunTrace::Rl(run.rows))
                .map_err(|e| e.to_string())
        }
        Algorithm::Cfr | Algorithm::Cfrplus => {
            let model = cfg.env.kind.model(cfg.env.occlusion);
            let variant = match cfg.algorithm {
                Algorithm::Cfr => CfrVariant::Cfr,
                _ => CfrVariant::CfrPlus,
            };
            Ok(RunTrace::Solver(cfr_solve(&model, h.iterations, variant).trace))
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn rl_run_csv(run_id: &str, seed: u64, rows: &[IterationRow]) -> String {
    let mut out = String::from(RL_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{run_id},{seed},{},{},{},{},{},{},{}\n",
            r.iteration,
            r.env_steps,
            r.mean_return,
            r.episode_count,
            r.max_abs_advantage,
            r.policy_entropy,
            fmt_opt(r.exact_j),
        ));
    }
    out
}

fn solver_run_csv(run_id: &str, seed: u64, trace: &[CfrRow]) -> String {
    let mut out = String::from(SOLVER_CSV_HEADER);
    out.push('\n');
    for r in trace {
        out.push_str(&format!(
            "{run_id},{seed},{},{},{},{}\n",
            r.iteration, r.j, r.max_immediate_regret, r.avg_regret
        ));
    }
    out
}

/// The solver trace in its bare module schema (no run prefix), as written
/// by the `cfr-solve` command.
pub fn cfr_trace_csv(trace: &[CfrRow]) -> String {
    let mut out = String::from("iteration,J,max_immediate_regret,avg_regret\n");
    for r in trace {
        out.push_str(&format!("{},{},{},{}\n", r.iteration, r.j, r.max_immediate_regret, r.avg_regret));
    }
    out
}

/// Slimmed metrics row shared by freshly trained and re-parsed runs.
#[derive(Debug, Clone)]
pub(crate) struct RowLite {
    iteration: usize,
    env_steps: u64,
    mean_return: f64,
    exact_j: Option<f64>,
}

fn lite(rows: &[IterationRow]) -> Vec<RowLite> {
    rows.iter()
        .map(|r| RowLite {
            iteration: r.iteration,
            env_steps: r.env_steps,
            mean_return: r.mean_return,
            exact_j: r.exact_j,
        })
        .collect()
}

/// Per-iteration mean/std across same-algorithm runs, long format. The
/// exact-value columns stay empty unless every run recorded the channel.
fn rl_summary(groups: &BTreeMap<String, Vec<Vec<RowLite>>>) -> String {
    let mut out =
        String::from("algorithm,iteration,env_steps,mean_return_mean,mean_return_std,exact_j_mean,exact_j_std\n");
    for (algo, runs) in groups {
        let len = runs.iter().map(|r| r.len()).min().unwrap_or(0);
        for i in 0..len {
            let steps: Vec<f64> = runs.iter().map(|r| r[i].env_steps as f64).collect();
            let returns: Vec<f64> = runs.iter().map(|r| r[i].mean_return).collect();
            let (ret_mean, ret_std) = mean_std(&returns);
            let exact: Option<Vec<f64>> = runs.iter().map(|r| r[i].exact_j).collect();
            let (ej_mean, ej_std) = match exact {
                Some(v) => {
                    let (m, s) = mean_std(&v);
                    (m.to_string(), s.to_string())
                }
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{algo},{},{},{},{},{},{}\n",
                runs[0][i].iteration,
                steps.iter().sum::<f64>() / steps.len() as f64,
                ret_mean,
                ret_std,
                ej_mean,
                ej_std,
            ));
        }
    }
    out
}

fn solver_summary(algorithm: &str, traces: &[Vec<CfrRow>]) -> String {
    let mut out = String::from("algorithm,iteration,J_mean,J_std\n");
    let len = traces.iter().map(|t| t.len()).min().unwrap_or(0);
    for i in 0..len {
        let js: Vec<f64> = traces.iter().map(|t| t[i].j).collect();
        let (mean, std) = mean_std(&js);
        out.push_str(&format!("{algorithm},{},{},{}\n", traces[0][i].iteration, mean, std));
    }
    out
}

/// Where an experiment's files landed and which runs (if any) failed.
#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    /// `(run_id, csv path)` per completed run, in seed order.
    pub completed: Vec<(String, PathBuf)>,
    /// `(run_id, error)` per failed run.
    pub failures: Vec<(String, String)>,
    pub summary_path: Option<PathBuf>,
}

/// Run every configured seed, one CSV per run plus a merged summary.
///
/// A failing run is recorded in a `<run_id>.failed.txt` marker and in the
/// report; the other runs still execute and their files are still written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let outcomes: Vec<(String, u64, Result<RunTrace, String>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let run_id = format!("{}-{}-s{seed}", cfg.algorithm, cfg.approximator);
            let outcome = execute_run(cfg, seed);
            (run_id, seed, outcome)
        })
        .collect();

    let mut report = RunReport {
        out_dir: cfg.out_dir.clone(),
        completed: Vec::new(),
        failures: Vec::new(),
        summary_path: None,
    };
    let mut rl_groups: BTreeMap<String, Vec<Vec<RowLite>>> = BTreeMap::new();
    let mut solver_traces: Vec<Vec<CfrRow>> = Vec::new();
    for (run_id, seed, outcome) in outcomes {
        match outcome {
            Ok(RunTrace::Rl(rows)) => {
                let path = cfg.out_dir.join(format!("{run_id}.csv"));
                fs::write(&path, rl_run_csv(&run_id, seed, &rows)).map_err(io_err(&path))?;
                rl_groups.entry(cfg.algorithm.to_string()).or_default().push(lite(&rows));
                report.completed.push((run_id, path));
            }
            Ok(RunTrace::Solver(trace)) => {
                let path = cfg.out_dir.join(format!("{run_id}.csv"));
                fs::write(&path, solver_run_csv(&run_id, seed, &trace)).map_err(io_err(&path))?;
                solver_traces.push(trace);
                report.completed.push((run_id, path));
            }
            Err(msg) => {
                let path = cfg.out_dir.join(format!("{run_id}.failed.txt"));
                fs::write(&path, format!("{msg}\n")).map_err(io_err(&path))?;
                report.failures.push((run_id, msg));
            }
        }
    }

    let summary = if !rl_groups.is_empty() {
        Some(rl_summary(&rl_groups))
    } else if !solver_traces.is_empty() {
        Some(solver_summary(&cfg.algorithm.to_string(), &solver_traces))
    } else {
        None
    };
    if let Some(text) = summary {
        let path = cfg.out_dir.join("summary.csv");
        fs::write(&path, text).map_err(io_err(&path))?;
        report.summary_path = Some(path);
    }
    Ok(report)
}

/// A run CSV read back from disk.
#[derive(Debug)]
pub struct ParsedRun {
    pub run_id: String,
    pub algorithm: String,
    pub(crate) rows: Vec<RowLite>,
}

impl ParsedRun {
    pub fn curve(&self) -> RunCurve {
        RunCurve {
            algorithm: self.algorithm.clone(),
            points: self.rows.iter().map(|r| (r.env_steps, r.mean_return)).collect(),
        }
    }
}

fn parse_rl_csv(path: &Path, text: &str) -> Result<Option<ParsedRun>, HarnessError> {
    let mut lines = text.lines();
    if lines.next() != Some(RL_CSV_HEADER) {
        return Ok(None); // some other schema (solver trace, summary, ...)
    }
    let mut run = None::<ParsedRun>;
    for (idx, line) in lines.enumerate() {
        let bad = || HarnessError::Malformed { path: path.to_path_buf(), line: idx + 2 };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            return Err(bad());
        }
        let row = RowLite {
            iteration: cols[2].parse().map_err(|_| bad())?,
            env_steps: cols[3].parse().map_err(|_| bad())?,
            mean_return: cols[4].parse().map_err(|_| bad())?,
            exact_j: if cols[8].is_empty() {
                None
            } else {
                Some(cols[8].parse().map_err(|_| bad())?)
            },
        };
        let run = run.get_or_insert_with(|| ParsedRun {
            run_id: cols[0].to_string(),
            algorithm: cols[0].split('-').next().unwrap_or(cols[0]).to_string(),
            rows: Vec::new(),
        });
        run.rows.push(row);
    }
    Ok(run.filter(|r| !r.rows.is_empty()))
}

/// Read every learner run CSV under `dir` (summary, plot, and solver files
/// are skipped), in filename order.
pub fn parse_runs_dir(dir: &Path) -> Result<Vec<ParsedRun>, HarnessError> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    names.sort();
    let mut runs = Vec::new();
    for path in names {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        if let Some(run) = parse_rl_csv(&path, &text)? {
            runs.push(run);
        }
    }
    Ok(runs)
}

/// Rebuild `summary.csv` and `plot.csv` from the run CSVs under `dir`.
/// Returns the two paths written.
pub fn report_dir(dir: &Path) -> Result<(PathBuf, PathBuf), HarnessError> {
    let runs = parse_runs_dir(dir)?;
    let mut groups: BTreeMap<String, Vec<Vec<RowLite>>> = BTreeMap::new();
    for run in &runs {
        groups.entry(run.algorithm.clone()).or_default().push(run.rows.clone());
    }
    let summary_path = dir.join("summary.csv");
    fs::write(&summary_path, rl_summary(&groups)).map_err(io_err(&summary_path))?;
    let curves: Vec<RunCurve> = runs.iter().map(|r| r.curve()).collect();
    let plot_path = dir.join("plot.csv");
    fs::write(&plot_path, emit_plot_data(&curves)).map_err(io_err(&plot_path))?;
    Ok((summary_path, plot_path))
}
