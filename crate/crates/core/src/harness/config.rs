//! JSON experiment configuration: schema, defaults, and validation.
//!
//! A config file names an environment, one algorithm, an approximator, an
//! optional block of hyperparameters, the seeds to run, and an output
//! directory. Everything except the environment and algorithm may be
//! omitted; defaults are documented on [`Hyper`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::approx::Arch;
use crate::pomdp::{aliased_two_state, grid_maze_3x3, grid_maze_9x9, occluded_ball, EnvModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    /// A value parsed but violates a documented bound or reference.
    #[error("config field `{field}`: {msg}")]
    Field { field: &'static str, msg: String },
}

fn field_err(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, msg: msg.into() }
}

/// Which learner (or solver) a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Arm,
    ArmOffpolicy,
    Cfr,
    Cfrplus,
    Dqn,
    A2c,
}

impl Algorithm {
    pub fn is_solver(self) -> bool {
        matches!(self, Algorithm::Cfr | Algorithm::Cfrplus)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Algorithm::Arm => "arm",
            Algorithm::ArmOffpolicy => "arm_offpolicy",
            Algorithm::Cfr => "cfr",
            Algorithm::Cfrplus => "cfrplus",
            Algorithm::Dqn => "dqn",
            Algorithm::A2c => "a2c",
        };
        f.write_str(s)
    }
}

/// Value-function representation for the learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approximator {
    #[default]
    Table,
    Linear,
    Mlp,
}

impl Approximator {
    pub fn arch(self) -> Arch {
        match self {
            Approximator::Table => Arch::Table,
            Approximator::Linear => Arch::Linear,
            Approximator::Mlp => Arch::Mlp,
        }
    }
}

impl fmt::Display for Approximator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Approximator::Table => "table",
            Approximator::Linear => "linear",
            Approximator::Mlp => "mlp",
        };
        f.write_str(s)
    }
}

/// The registered environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    AliasedTwoState,
    GridMaze3x3,
    GridMaze9x9,
    OccludedBall,
}

pub const ENV_NAMES: [(&str, EnvKind); 4] = [
    ("aliased-two-state", EnvKind::AliasedTwoState),
    ("grid-maze-3x3", EnvKind::GridMaze3x3),
    ("grid-maze-9x9", EnvKind::GridMaze9x9),
    ("occluded-ball", EnvKind::OccludedBall),
];

impl EnvKind {
    pub fn from_name(name: &str) -> Option<EnvKind> {
        ENV_NAMES.iter().find(|(n, _)| *n == name).map(|&(_, k)| k)
    }

    /// Build the explicit model. `occlusion` only affects the ball env.
    pub fn model(self, occlusion: bool) -> EnvModel {
        match self {
            EnvKind::AliasedTwoState => aliased_two_state(),
            EnvKind::GridMaze3x3 => grid_maze_3x3(),
            EnvKind::GridMaze9x9 => grid_maze_9x9(),
            EnvKind::OccludedBall => occluded_ball(occlusion),
        }
    }
}

/// Resolved environment selection.
#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub name: String,
    /// Hide the ball over the masked rows (ball env only).
    pub occlusion: bool,
    /// Number of recent observations presented as one; 1 = no stacking.
    pub frame_history: usize,
}

/// Fully resolved hyperparameters. Defaults unless the config overrides:
///
/// - `gamma`: the environment's native discount
/// - `n`: 5 (1 on the ball env)
/// - `tau`: 0.01, `minibatch`: 32
/// - `lr`: 1e-3 (table/linear), 1e-4 (mlp)
/// - `batch_size`: 1024, `grad_steps`: batch_size/4, `iterations`: 50
/// - `replay_capacity`: 4 recent batches (arm_offpolicy) or 20 000
///   transitions (dqn)
/// - `c`: 1.0 (importance-weight clip)
/// - `eps_start`/`eps_end`/`eps_fraction`: 1.0 / 0.01 / 0.2
/// - `beta`: 0.01 (entropy bonus)
#[derive(Debug, Clone)]
pub struct Hyper {
    pub gamma: f64,
    pub n: usize,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub grad_steps: usize,
    pub minibatch: usize,
    pub iterations: usize,
    pub replay_capacity: usize,
    pub c: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_fraction: f64,
    pub beta: f64,
}

/// A validated experiment: every name resolved, every bound checked.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub algorithm: Algorithm,
    pub approximator: Approximator,
    pub hyper: Hyper,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    name: String,
    #[serde(default)]
    occlusion: bool,
    frame_history: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHyper {
    gamma: Option<f64>,
    n: Option<usize>,
    tau: Option<f64>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    grad_steps: Option<usize>,
    minibatch: Option<usize>,
    iterations: Option<usize>,
    replay_capacity: Option<usize>,
    c: Option<f64>,
    eps_start: Option<f64>,
    eps_end: Option<f64>,
    eps_fraction: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    env: RawEnv,
    algorithm: Algorithm,
    #[serde(default)]
    approximator: Approximator,
    #[serde(default)]
    hyper: RawHyper,
    seeds: Option<Vec<u64>>,
    out_dir: Option<PathBuf>,
}

/// Read and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

/// Parse and validate config text (the file-less core of [`load_config`]).
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text)?;
    resolve(raw)
}

fn check_unit(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(field_err(field, format!("must lie in [0, 1], got {v}")))
    }
}

fn check_positive(field: &'static str, v: usize) -> Result<(), ConfigError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(field_err(field, "must be at least 1"))
    }
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let kind = EnvKind::from_name(&raw.env.name).ok_or_else(|| {
        let known: Vec<&str> = ENV_NAMES.iter().map(|(n, _)| *n).collect();
        field_err(
            "env.name",
            format!("unknown environment `{}` (known: {})", raw.env.name, known.join(", ")),
        )
    })?;
    if raw.env.occlusion && kind != EnvKind::OccludedBall {
        return Err(field_err("env.occlusion", "only occluded-ball supports occlusion"));
    }
    let frame_history = raw.env.frame_history.unwrap_or(1);
    check_positive("env.frame_history", frame_history)?;
    if raw.algorithm.is_solver() && frame_history != 1 {
        return Err(field_err(
            "env.frame_history",
            "cfr solvers evaluate the explicit model and cannot stack frames; use 1",
        ));
    }
    if raw.algorithm.is_solver() && raw.approximator != Approximator::Table {
        return Err(field_err("approximator", "cfr solvers are tabular; use `table`"));
    }

    let env = EnvSpec { kind, name: raw.env.name, occlusion: raw.env.occlusion, frame_history };
    let native_discount = kind.model(env.occlusion).discount;

    let h = raw.hyper;
    let batch_size = h.batch_size.unwrap_or(1024);
    let hyper = Hyper {
        gamma: h.gamma.unwrap_or(native_discount),
        n: h.n.unwrap_or(if kind == EnvKind::OccludedBall { 1 } else { 5 }),
        tau: h.tau.unwrap_or(0.01),
        lr: h.lr.unwrap_or(match raw.approximator {
            Approximator::Table | Approximator::Linear => 1e-3,
            Approximator::Mlp => 1e-4,
        }),
        batch_size,
        grad_steps: h.grad_steps.unwrap_or((batch_size / 4).max(1)),
        minibatch: h.minibatch.unwrap_or(32),
        iterations: h.iterations.unwrap_or(50),
        replay_capacity: h.replay_capacity.unwrap_or(match raw.algorithm {
            Algorithm::ArmOffpolicy => 4,
            _ => 20_000,
        }),
        c: h.c.unwrap_or(1.0),
        eps_start: h.eps_start.unwrap_or(1.0),
        eps_end: h.eps_end.unwrap_or(0.01),
        eps_fraction: h.eps_fraction.unwrap_or(0.2),
        beta: h.beta.unwrap_or(0.01),
    };

    if !(hyper.gamma > 0.0 && hyper.gamma <= 1.0) {
        return Err(field_err("hyper.gamma", format!("must lie in (0, 1], got {}", hyper.gamma)));
    }
    check_unit("hyper.tau", hyper.tau)?;
    if !(hyper.lr.is_finite() && hyper.lr > 0.0) {
        return Err(field_err("hyper.lr", format!("must be positive, got {}", hyper.lr)));
    }
    if !(hyper.c.is_finite() && hyper.c >= 0.0) {
        return Err(field_err("hyper.c", format!("must be nonnegative, got {}", hyper.c)));
    }
    if !(hyper.beta.is_finite() && hyper.beta >= 0.0) {
        return Err(field_err("hyper.beta", format!("must be nonnegative, got {}", hyper.beta)));
    }
    check_positive("hyper.n", hyper.n)?;
    check_positive("hyper.batch_size", hyper.batch_size)?;
    check_positive("hyper.grad_steps", hyper.grad_steps)?;
    check_positive("hyper.minibatch", hyper.minibatch)?;
    check_positive("hyper.iterations", hyper.iterations)?;
    check_positive("hyper.replay_capacity", hyper.replay_capacity)?;
    check_unit("hyper.eps_start", hyper.eps_start)?;
    check_unit("hyper.eps_end", hyper.eps_end)?;
    check_unit("hyper.eps_fraction", hyper.eps_fraction)?;

    let seeds = raw.seeds.unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        return Err(field_err("seeds", "must list at least one seed"));
    }

    Ok(ExperimentConfig {
        env,
        algorithm: raw.algorithm,
        approximator: raw.approximator,
        hyper,
        seeds,
        out_dir: raw.out_dir.unwrap_or_else(|| PathBuf::from("runs")),
    })
}
