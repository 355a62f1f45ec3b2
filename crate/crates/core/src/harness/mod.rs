//! Experiment orchestration: JSON configs, seeded multi-run execution,
//! learning-curve metrics, and CSV/plot emission.
//!
//! The flow is `load_config` → [`run_experiment`] → one metrics CSV per
//! seed plus a merged `summary.csv`; [`report_dir`] rebuilds the summary
//! and long-format plot data from any directory of run CSVs. The
//! [`overall_regret`] and [`auc`] helpers reduce a learning curve to the
//! scalars the acceptance checks compare.

mod config;
mod metrics;
mod run;

pub use config::{
    load_config, parse_config, Algorithm, Approximator, ConfigError, EnvKind, EnvSpec,
    ExperimentConfig, Hyper, ENV_NAMES,
};
pub use metrics::{auc, emit_plot_data, overall_regret, RunCurve};
pub use run::{
    build_env, cfr_trace_csv, execute_run, parse_runs_dir, report_dir, run_experiment,
    HarnessError, ParsedRun, RunReport, RunTrace, RL_CSV_HEADER, SOLVER_CSV_HEADER,
};
