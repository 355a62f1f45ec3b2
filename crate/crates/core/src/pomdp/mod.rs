//! Finite partially observable environments and their exact solvers.
//!
//! Environments come in two layers. [`EnvModel`] is the explicit description:
//! hidden states, actions, a stochastic transition table, rewards,
//! a state-to-observation map, an initial distribution, a discount, and a
//! horizon. The dynamic-programming oracles in [`oracle`] operate on this
//! description. [`Env`] is the interaction interface (reset / step) used by
//! the sampling trainers; [`ModelEnv`] drives it from an `EnvModel`, and
//! [`FrameStack`] wraps any `Env` with a sliding window of recent
//! observations for history ablations.

mod aliased;
mod ball;
mod maze;
mod model;
pub mod oracle;
mod policy;
mod stack;

pub use aliased::aliased_two_state;
pub use ball::{occluded_ball, BALL_COLS, BALL_HIDDEN_CELL, BALL_ROWS};
pub use maze::{grid_maze_3x3, grid_maze_9x9, grid_maze_from_str, MazeParseError};
pub use model::{EnvModel, ModelEnv};
pub use oracle::{best_memoryless_policy, exact_policy_eval, value_iteration, Evaluation, MemorylessSearch, SearchSpec};
pub use policy::{policy_entropy, sample_action, Policy, TabularPolicy, UniformPolicy};
pub use stack::{stack_frames, FrameStack, DEFAULT_INTERN_CAPACITY};

use thiserror::Error;

/// What an agent sees at one step: a dense observation id plus a sparse
/// one-hot feature encoding (indices of the coordinates equal to 1).
///
/// For a base environment the feature vector is the one-hot of `id`; for a
/// stacked observation it is the concatenation of the windowed base
/// one-hots, with all-zero blocks for the zero-padded frames before episode
/// start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    /// Dense identifier, unique per distinct observation within one env.
    pub id: usize,
    /// Indices of feature coordinates equal to 1.0 (sorted, no duplicates).
    pub ones: Vec<usize>,
    /// Total feature dimension.
    pub dim: usize,
}

impl Observation {
    /// One-hot observation for a base environment.
    pub fn one_hot(id: usize, dim: usize) -> Self {
        debug_assert!(id < dim);
        Observation { id, ones: vec![id], dim }
    }

    /// Materialise the dense feature vector.
    pub fn features(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &i in &self.ones {
            v[i] = 1.0;
        }
        v
    }
}

/// One logged step of interaction.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Observation,
    /// 1.0 while the episode continues past `next_obs`, else 0.0. Episodes
    /// that stop at the horizon also record 0.0: nothing is bootstrapped
    /// across an episode boundary of either kind.
    pub nonterminal: f64,
    /// Probability the behaviour policy assigned to `action` at `obs`.
    pub behavior_prob: f64,
}

/// Result of one [`Env::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    /// True when the episode is over (terminal state or horizon reached).
    pub terminal: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    /// `step` was called after the episode ended; callers must `reset` first.
    #[error("step called on a finished episode; call reset first")]
    EpisodeOver,
    #[error("action {action} out of range (env has {num_actions} actions)")]
    BadAction { action: usize, num_actions: usize },
    /// The frame-stack intern table ran out of room for new windows.
    #[error("observation intern capacity {capacity} exceeded")]
    InternCapacity { capacity: usize },
}

/// Interaction interface shared by model-backed and wrapped environments.
pub trait Env {
    fn num_actions(&self) -> usize;
    /// Upper bound on observation ids this env can emit (table sizing).
    fn num_observations(&self) -> usize;
    /// Feature dimension of emitted observations.
    fn feature_dim(&self) -> usize;
    /// Discount the environment is conventionally solved with.
    fn discount(&self) -> f64;
    /// Start a new episode and return its first observation.
    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Observation;
    /// Advance one step. Fails with [`EnvError::EpisodeOver`] if the episode
    /// already ended — a finished episode is never silently restarted.
    fn step(&mut self, action: usize, rng: &mut dyn rand::RngCore) -> Result<StepOutcome, EnvError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_features_have_single_unit_coordinate() {
        let o = Observation::one_hot(3, 5);
        assert_eq!(o.features(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(o.id, 3);
    }
}
