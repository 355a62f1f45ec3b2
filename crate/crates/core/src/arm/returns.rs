//! n-step return targets, on- and off-policy.
//!
//! All returns truncate at the episode boundary and bootstrap through the
//! logged continuation mask, so nothing leaks across terminal or
//! horizon-stopped episodes. The value target for a step is its n-step
//! return; the action target re-expresses the same number as the first
//! reward plus the discounted (n-1)-step return from the next step, which
//! regresses the same quantity onto the (observation, action) conditional.

use crate::approx::ParamSet;
use crate::pomdp::{Observation, Transition};

use super::{ArmError, Episode, TrajectoryBatch};

/// Anything that can report a state value for an observation. Takes `&mut`
/// so that sources which update themselves on read (the trailing value copy
/// in the fitting loop) can serve targets through the same code path as a
/// plain frozen parameter set.
pub(crate) trait ValueSource {
    fn value_of(&mut self, obs: &Observation) -> f64;
}

impl ValueSource for &ParamSet {
    fn value_of(&mut self, obs: &Observation) -> f64 {
        self.forward_obs_one(obs)
    }
}

/// Bootstrap value at position `idx` of an episode: the observation of step
/// `idx` if one exists, otherwise the episode's final successor observation
/// gated by its continuation mask.
fn bootstrap<V: ValueSource>(ep: &Episode, idx: usize, phi: &mut V) -> f64 {
    if idx < ep.steps.len() {
        phi.value_of(&ep.steps[idx].obs)
    } else {
        let last = ep.steps.last().expect("episodes are never empty");
        last.nonterminal * phi.value_of(&last.next_obs)
    }
}

/// n-step return from step `k` (0 <= k <= episode length) against the value
/// parameters `phi`. With `n = 0` this is just the bootstrap at `k`.
pub fn n_step_return(ep: &Episode, k: usize, n: usize, discount: f64, phi: &ParamSet) -> f64 {
    n_step_return_src(ep, k, n, discount, &mut { phi })
}

pub(crate) fn n_step_return_src<V: ValueSource>(
    ep: &Episode,
    k: usize,
    n: usize,
    discount: f64,
    phi: &mut V,
) -> f64 {
    let span = n.min(ep.steps.len() - k.min(ep.steps.len()));
    let mut g = 0.0;
    let mut scale = 1.0;
    for i in 0..span {
        g += scale * ep.steps[k + i].reward;
        scale *= discount;
    }
    g + scale * bootstrap(ep, k + span, phi)
}

/// Truncated importance weight of one logged step: `min(clip, pi / mu)`.
fn weight(t: &Transition, target_prob: f64, clip: f64, episode: usize, step: usize) -> Result<f64, ArmError> {
    if t.behavior_prob <= 0.0 {
        return Err(ArmError::ZeroBehaviorProb { episode, step });
    }
    Ok((target_prob / t.behavior_prob).min(clip))
}

/// Per-step truncated importance weights for one episode, given the target
/// policy's probability of each logged action.
pub fn episode_weights(
    ep: &Episode,
    target_probs: &[f64],
    clip: f64,
    episode: usize,
) -> Result<Vec<f64>, ArmError> {
    ep.steps
        .iter()
        .zip(target_probs)
        .enumerate()
        .map(|(k, (t, &p))| weight(t, p, clip, episode, k))
        .collect()
}

/// Corrected n-step return: each reward is scaled by the running product of
/// truncated importance weights from `k` through its own step; the bootstrap
/// term is left uncorrected.
pub fn offpolicy_n_step_return(
    ep: &Episode,
    k: usize,
    n: usize,
    discount: f64,
    phi: &ParamSet,
    weights: &[f64],
) -> f64 {
    offpolicy_n_step_return_src(ep, k, n, discount, &mut { phi }, weights)
}

pub(crate) fn offpolicy_n_step_return_src<V: ValueSource>(
    ep: &Episode,
    k: usize,
    n: usize,
    discount: f64,
    phi: &mut V,
    weights: &[f64],
) -> f64 {
    let span = n.min(ep.steps.len() - k.min(ep.steps.len()));
    let mut g = 0.0;
    let mut scale = 1.0;
    let mut prod = 1.0;
    for i in 0..span {
        prod *= weights[k + i];
        g += scale * prod * ep.steps[k + i].reward;
        scale *= discount;
    }
    g + scale * bootstrap(ep, k + span, phi)
}

/// Regression targets for one logged step against fixed value parameters.
///
/// `prev_advantage` is the clipped advantage carried from the previous
/// iteration's parameters at this (observation, action); `None` on the very
/// first iteration, where no previous advantage exists.
pub fn step_targets(
    ep: &Episode,
    k: usize,
    n: usize,
    discount: f64,
    phi: &ParamSet,
    prev_advantage: Option<f64>,
) -> (f64, f64) {
    step_targets_src(ep, k, n, discount, &mut { phi }, prev_advantage)
}

pub(crate) fn step_targets_src<V: ValueSource>(
    ep: &Episode,
    k: usize,
    n: usize,
    discount: f64,
    phi: &mut V,
    prev_advantage: Option<f64>,
) -> (f64, f64) {
    debug_assert!(n >= 1);
    let v = n_step_return_src(ep, k, n, discount, phi);
    let q = ep.steps[k].reward + discount * n_step_return_src(ep, k + 1, n - 1, discount, phi);
    let q_plus = prev_advantage.map_or(0.0, |a| a.max(0.0)) + q;
    (v, q_plus)
}

/// Off-policy counterpart of [`step_targets`]: the value target is the
/// corrected return, and the action target replaces the first reward's
/// weight with 1 (the logged action is a fact, not a counterfactual).
pub fn offpolicy_step_targets(
    ep: &Episode,
    k: usize,
    n: usize,
    discount: f64,
    phi: &ParamSet,
    weights: &[f64],
    prev_advantage: Option<f64>,
) -> (f64, f64) {
    offpolicy_step_targets_src(ep, k, n, discount, &mut { phi }, weights, prev_advantage)
}

pub(crate) fn offpolicy_step_targets_src<V: ValueSource>(
    ep: &Episode,
    k: usize,
    n: usize,
    discount: f64,
    phi: &mut V,
    weights: &[f64],
    prev_advantage: Option<f64>,
) -> (f64, f64) {
    debug_assert!(n >= 1);
    let g = offpolicy_n_step_return_src(ep, k, n, discount, phi, weights);
    let v = g;
    let q = (1.0 - weights[k]) * ep.steps[k].reward + g;
    let q_plus = prev_advantage.map_or(0.0, |a| a.max(0.0)) + q;
    (v, q_plus)
}

/// Targets for every step of a batch against one fixed `phi`, in flat index
/// order. `q` is the action-value part before the carried advantage is
/// added, kept so tests can check the two target views agree.
#[derive(Debug, Clone)]
pub struct Targets {
    pub index: Vec<(usize, usize)>,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub q_plus: Vec<f64>,
}

/// Compute all targets of `batch` with the value bootstrap `phi` and the
/// previous iteration's parameters (`None` on the first iteration).
pub fn compute_targets(
    batch: &TrajectoryBatch,
    n: usize,
    discount: f64,
    phi: &ParamSet,
    prev: Option<(&ParamSet, &ParamSet)>,
) -> Targets {
    let index = batch.index();
    let mut v = Vec::with_capacity(index.len());
    let mut q = Vec::with_capacity(index.len());
    let mut q_plus = Vec::with_capacity(index.len());
    for &(e, k) in &index {
        let ep = &batch.episodes[e];
        let t = &ep.steps[k];
        let prev_adv = prev.map(|(q_prev, v_prev)| {
            q_prev.forward_obs(&t.obs)[t.action] - v_prev.forward_obs_one(&t.obs)
        });
        let (vt, qpt) = step_targets(ep, k, n, discount, phi, prev_adv);
        v.push(vt);
        q.push(qpt - prev_adv.map_or(0.0, |a| a.max(0.0)));
        q_plus.push(qpt);
    }
    Targets { index, v, q, q_plus }
}
