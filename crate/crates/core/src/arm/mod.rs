//! Advantage-based regret minimization over sampled trajectories.
//!
//! The learner keeps two parameter sets: a state-value head `V` and a
//! cumulative clipped action head `Q+`. Their difference `Q+ - V` plays the
//! role of a running regret table; the deployed policy is regret matching on
//! it, so actions whose accumulated advantage is negative drop out of the
//! mixture and ties stay stochastic — which is what lets the method keep
//! deliberately mixed behaviour on aliased observations instead of collapsing
//! to one action the way a greedy argmax does.
//!
//! Each iteration collects a fresh batch with the current policy, then
//! regresses `V` toward n-step returns and `Q+` toward the previous clipped
//! advantage plus the fresh action value: `max(0, Q+_prev - V_prev) + q`.
//! Returns are recomputed during fitting against a slowly moving copy of the
//! value head. The off-policy variant replays recent batches with truncated
//! importance weights on the reward sums; with clip 1 and unchanged policy it
//! reproduces the on-policy targets exactly.

mod exact;
mod fit;
mod returns;
mod train;

pub use exact::{arm_train_exact, deployed_policy, ExactArmRun};
pub use fit::{fit_iteration, fit_iteration_offpolicy, FitConfig};
pub use returns::{
    compute_targets, episode_weights, n_step_return, offpolicy_n_step_return,
    offpolicy_step_targets, step_targets, Targets,
};
pub use train::{arm_train, ArmRun, ArmTrainConfig, IterationRow, OffPolicyConfig};

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::approx::{Arch, ParamSet, Role};
use crate::cfr::regret_matching;
use crate::pomdp::{sample_action, Env, EnvError, Observation, Policy, Transition};

#[derive(Debug, Error)]
pub enum ArmError {
    #[error(transparent)]
    Env(#[from] EnvError),
    /// A logged action carries zero behaviour probability, so its importance
    /// weight is undefined. This indicates corrupted collection, not a
    /// recoverable condition.
    #[error("logged action has zero behaviour probability (episode {episode}, step {step})")]
    ZeroBehaviorProb { episode: usize, step: usize },
}

/// One full episode of logged transitions, in order.
#[derive(Debug, Clone, Default)]
pub struct Episode {
    pub steps: Vec<Transition>,
}

impl Episode {
    /// Undiscounted sum of rewards.
    pub fn total_return(&self) -> f64 {
        self.steps.iter().map(|t| t.reward).sum()
    }
}

/// Whole episodes collected under one behaviour policy.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryBatch {
    pub episodes: Vec<Episode>,
    pub total_steps: usize,
}

impl TrajectoryBatch {
    /// Flat index of every step as (episode, step) pairs.
    pub fn index(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.total_steps);
        for (e, ep) in self.episodes.iter().enumerate() {
            for k in 0..ep.steps.len() {
                out.push((e, k));
            }
        }
        out
    }
}

/// Run whole episodes under `policy` until at least `min_steps` transitions
/// are logged (always at least one episode). Records the behaviour
/// probability of each chosen action for later importance correction.
pub fn collect_batch(
    env: &mut dyn Env,
    policy: &dyn Policy,
    min_steps: usize,
    rng: &mut impl Rng,
) -> Result<TrajectoryBatch, ArmError> {
    let mut batch = TrajectoryBatch::default();
    while batch.total_steps < min_steps.max(1) {
        let mut episode = Episode::default();
        let mut obs = env.reset(rng);
        loop {
            let probs = policy.probs(&obs);
            let action = sample_action(&probs, rng);
            let out = env.step(action, rng)?;
            episode.steps.push(Transition {
                obs,
                action,
                reward: out.reward,
                next_obs: out.obs.clone(),
                nonterminal: if out.terminal { 0.0 } else { 1.0 },
                behavior_prob: probs[action],
            });
            obs = out.obs;
            if out.terminal {
                break;
            }
        }
        batch.total_steps += episode.steps.len();
        batch.episodes.push(episode);
    }
    Ok(batch)
}

/// Recent batches kept for off-policy replay. Eviction is whole-batch,
/// oldest first, once more than `capacity_batches` are held.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    batches: VecDeque<TrajectoryBatch>,
    capacity_batches: usize,
}

impl ReplayMemory {
    pub fn new(capacity_batches: usize) -> Self {
        assert!(capacity_batches >= 1, "replay memory needs room for at least one batch");
        ReplayMemory { batches: VecDeque::new(), capacity_batches }
    }

    pub fn push(&mut self, batch: TrajectoryBatch) {
        self.batches.push_back(batch);
        while self.batches.len() > self.capacity_batches {
            self.batches.pop_front();
        }
    }

    pub fn batches(&self) -> impl Iterator<Item = &TrajectoryBatch> {
        self.batches.iter()
    }

    pub fn total_steps(&self) -> usize {
        self.batches.iter().map(|b| b.total_steps).sum()
    }

    /// Flat index of every stored step as (batch, episode, step).
    pub fn index(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.total_steps());
        for (b, batch) in self.batches.iter().enumerate() {
            for (e, ep) in batch.episodes.iter().enumerate() {
                for k in 0..ep.steps.len() {
                    out.push((b, e, k));
                }
            }
        }
        out
    }

    pub fn batch(&self, b: usize) -> &TrajectoryBatch {
        &self.batches[b]
    }
}

/// Policy read off a fitted advantage: regret matching on `Q+ - V`.
#[derive(Debug, Clone, Copy)]
pub struct AdvantagePolicy<'a> {
    pub q_plus: &'a ParamSet,
    pub v: &'a ParamSet,
}

impl Policy for AdvantagePolicy<'_> {
    fn probs(&self, obs: &Observation) -> Vec<f64> {
        let q = self.q_plus.forward_obs(obs);
        let v = self.v.forward_obs_one(obs);
        let adv: Vec<f64> = q.iter().map(|&x| x - v).collect();
        regret_matching(&adv)
    }
}

/// Deployed policy at some point in training: uniform before the first fit,
/// advantage-matching afterwards.
#[derive(Debug, Clone, Copy)]
pub enum ArmPolicy<'a> {
    Uniform(usize),
    Advantage(AdvantagePolicy<'a>),
}

impl Policy for ArmPolicy<'_> {
    fn probs(&self, obs: &Observation) -> Vec<f64> {
        match self {
            ArmPolicy::Uniform(n) => vec![1.0 / *n as f64; *n],
            ArmPolicy::Advantage(p) => p.probs(obs),
        }
    }
}

/// The learner's parameters plus how many fit iterations they have absorbed.
#[derive(Debug, Clone)]
pub struct ArmState {
    pub v: ParamSet,
    pub q_plus: ParamSet,
    /// Completed fit iterations. Zero means "never fitted": the deployed
    /// policy is uniform and target construction uses no previous advantage.
    pub iteration: usize,
}

impl ArmState {
    /// `input_dim` is architecture-dependent: the number of distinct
    /// observations for a table, the feature vector length otherwise (see
    /// [`ParamSet::input_dim_for`]).
    pub fn new(arch: Arch, input_dim: usize, num_actions: usize, rng: &mut impl Rng) -> Self {
        ArmState {
            v: ParamSet::init(arch, Role::StateValue, input_dim, 1, rng),
            q_plus: ParamSet::init(arch, Role::ActionValue, input_dim, num_actions, rng),
            iteration: 0,
        }
    }

    /// The policy these parameters deploy right now.
    pub fn policy(&self) -> ArmPolicy<'_> {
        if self.iteration == 0 {
            ArmPolicy::Uniform(self.q_plus.outputs)
        } else {
            ArmPolicy::Advantage(AdvantagePolicy { q_plus: &self.q_plus, v: &self.v })
        }
    }

    /// Clipped advantage of one logged step under these parameters:
    /// `Q+(o, a) - V(o)`. This is the quantity carried between iterations.
    pub fn advantage(&self, obs: &Observation, action: usize) -> f64 {
        self.q_plus.forward_obs(obs)[action] - self.v.forward_obs_one(obs)
    }
}
