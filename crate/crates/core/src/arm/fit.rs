//! One fitting pass over a batch (or replay memory) of trajectories.
//!
//! Both heads warm-start from the previous iteration's parameters and get a
//! fresh optimizer. Targets are recomputed for every minibatch against a
//! separate copy of the value parameters that trails the live ones by a
//! small Polyak factor, so the bootstrap moves smoothly while the regression
//! chases it. The two heads always see the same minibatch.

use rand::Rng;

use crate::approx::{AdamState, Arch, GradEntry, ParamSet};
use crate::pomdp::{Observation, Policy};

use super::returns::{offpolicy_step_targets_src, step_targets_src, ValueSource};
use super::{ArmError, ArmState, ReplayMemory, TrajectoryBatch};

/// Shape of one fitting pass.
#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    /// Reward window length of the return targets.
    pub n_step: usize,
    pub minibatch: usize,
    /// Optimizer steps in this pass.
    pub grad_steps: usize,
    pub lr: f64,
    /// Trailing factor for the bootstrap value copy per optimizer step.
    pub tau: f64,
    pub discount: f64,
}

/// Copy of the value parameters that trails the live ones by a Polyak
/// factor per optimizer step.
///
/// The dense architecture decays every coordinate each step. For the sparse
/// architectures a live coordinate only changes when the optimizer touches
/// it, and between touches the decay toward a constant has the closed form
/// `live + (1 - tau)^steps * (phi - live)` — so coordinates catch up lazily
/// on read and just before the optimizer moves them, making each step
/// O(touched coordinates) instead of O(all parameters).
struct MovingValue {
    phi: ParamSet,
    tau: f64,
    step: u64,
    last: Vec<u64>,
    dense: bool,
}

impl MovingValue {
    fn new(v: &ParamSet, tau: f64) -> Self {
        let dense = matches!(v.arch, Arch::Mlp);
        let last = if dense { Vec::new() } else { vec![0; v.values.len()] };
        MovingValue { phi: v.clone(), tau, step: 0, last, dense }
    }

    fn catch_up(&mut self, i: usize, live: f64) {
        let skipped = self.step - self.last[i];
        if skipped > 0 {
            let decay = (1.0 - self.tau).powi(skipped as i32);
            self.phi.values[i] = live + decay * (self.phi.values[i] - live);
            self.last[i] = self.step;
        }
    }

    /// Catch up the coordinates the optimizer is about to move while their
    /// live values still hold the constant they kept since the last touch.
    fn pre_touch(&mut self, grad: &[GradEntry], live: &ParamSet) {
        if self.dense {
            return;
        }
        for &(i, _) in grad {
            self.catch_up(i, live.values[i]);
        }
    }

    /// One trailing step after the optimizer moved the live parameters.
    fn advance(&mut self, live: &ParamSet) {
        self.step += 1;
        if self.dense {
            crate::approx::polyak_update(&mut self.phi.values, &live.values, self.tau);
        }
    }
}

/// Read adapter pairing the trailing copy with the live parameters it
/// decays toward; serves bootstrap values during target computation.
struct TrailingReader<'a> {
    moving: &'a mut MovingValue,
    live: &'a ParamSet,
}

impl ValueSource for TrailingReader<'_> {
    fn value_of(&mut self, obs: &Observation) -> f64 {
        if self.moving.dense {
            return self.moving.phi.forward_obs_one(obs);
        }
        // The state-value head has one output, so parameter coordinates are
        // the input key itself (table row id, or active feature indices).
        match self.moving.phi.arch {
            Arch::Table => {
                self.moving.catch_up(obs.id, self.live.values[obs.id]);
                self.moving.phi.values[obs.id]
            }
            Arch::Linear => {
                let mut sum = 0.0;
                for &j in &obs.ones {
                    self.moving.catch_up(j, self.live.values[j]);
                    sum += self.moving.phi.values[j];
                }
                sum
            }
            Arch::Mlp => unreachable!("dense architectures never take the sparse path"),
        }
    }
}

struct MinibatchAccumulator {
    v_grad: Vec<GradEntry>,
    q_grad: Vec<GradEntry>,
}

/// Add one sample's squared-error gradients for both heads.
fn accumulate(
    acc: &mut MinibatchAccumulator,
    state: &ArmState,
    obs: &Observation,
    action: usize,
    v_target: f64,
    q_plus_target: f64,
    inv_batch: f64,
) {
    let v_pred = state.v.forward_obs_one(obs);
    let dv = (v_pred - v_target) * inv_batch;
    for (i, g) in state.v.grad_obs(obs, 0) {
        acc.v_grad.push((i, dv * g));
    }
    let q_pred = state.q_plus.forward_obs(obs)[action];
    let dq = (q_pred - q_plus_target) * inv_batch;
    for (i, g) in state.q_plus.grad_obs(obs, action) {
        acc.q_grad.push((i, dq * g));
    }
}

fn apply(
    state: &mut ArmState,
    phi: &mut MovingValue,
    v_opt: &mut AdamState,
    q_opt: &mut AdamState,
    acc: MinibatchAccumulator,
) {
    phi.pre_touch(&acc.v_grad, &state.v);
    v_opt.step(&mut state.v.values, &acc.v_grad);
    q_opt.step(&mut state.q_plus.values, &acc.q_grad);
    phi.advance(&state.v);
}

/// Fit the two heads to one freshly collected batch.
///
/// The previous iteration's parameters are snapshotted at entry: they define
/// the carried advantage inside the action target (skipped entirely on the
/// first iteration) while the live parameters are trained in place.
pub fn fit_iteration(
    state: &mut ArmState,
    batch: &TrajectoryBatch,
    cfg: &FitConfig,
    rng: &mut impl Rng,
) {
    let prev = if state.iteration == 0 { None } else { Some((state.q_plus.clone(), state.v.clone())) };
    let mut phi = MovingValue::new(&state.v, cfg.tau);
    let mut v_opt = AdamState::new(state.v.values.len(), cfg.lr);
    let mut q_opt = AdamState::new(state.q_plus.values.len(), cfg.lr);
    let index = batch.index();
    let inv = 1.0 / cfg.minibatch as f64;

    for _ in 0..cfg.grad_steps {
        let mut acc = MinibatchAccumulator { v_grad: Vec::new(), q_grad: Vec::new() };
        for _ in 0..cfg.minibatch {
            let &(e, k) = &index[rng.gen_range(0..index.len())];
            let ep = &batch.episodes[e];
            let t = &ep.steps[k];
            let prev_adv = prev.as_ref().map(|(q_prev, v_prev)| {
                q_prev.forward_obs(&t.obs)[t.action] - v_prev.forward_obs_one(&t.obs)
            });
            let mut reader = TrailingReader { moving: &mut phi, live: &state.v };
            let (v_target, q_plus_target) =
                step_targets_src(ep, k, cfg.n_step, cfg.discount, &mut reader, prev_adv);
            accumulate(&mut acc, state, &t.obs, t.action, v_target, q_plus_target, inv);
        }
        apply(state, &mut phi, &mut v_opt, &mut q_opt, acc);
    }
    state.iteration += 1;
}

/// Fit against everything in the replay memory, with truncated importance
/// weights toward the current policy. Weights are fixed at entry (the
/// policy they correct toward is the one the entry parameters deploy).
pub fn fit_iteration_offpolicy(
    state: &mut ArmState,
    memory: &ReplayMemory,
    clip: f64,
    cfg: &FitConfig,
    rng: &mut impl Rng,
) -> Result<(), ArmError> {
    // Per-(batch, episode) weight vectors under the current policy.
    let weights: Vec<Vec<Vec<f64>>> = {
        let policy = state.policy();
        memory
            .batches()
            .map(|batch| {
                batch
                    .episodes
                    .iter()
                    .enumerate()
                    .map(|(e, ep)| {
                        let target: Vec<f64> =
                            ep.steps.iter().map(|t| policy.probs(&t.obs)[t.action]).collect();
                        super::returns::episode_weights(ep, &target, clip, e)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?
    };

    let prev = if state.iteration == 0 { None } else { Some((state.q_plus.clone(), state.v.clone())) };
    let mut phi = MovingValue::new(&state.v, cfg.tau);
    let mut v_opt = AdamState::new(state.v.values.len(), cfg.lr);
    let mut q_opt = AdamState::new(state.q_plus.values.len(), cfg.lr);
    let index = memory.index();
    let inv = 1.0 / cfg.minibatch as f64;

    for _ in 0..cfg.grad_steps {
        let mut acc = MinibatchAccumulator { v_grad: Vec::new(), q_grad: Vec::new() };
        for _ in 0..cfg.minibatch {
            let &(b, e, k) = &index[rng.gen_range(0..index.len())];
            let ep = &memory.batch(b).episodes[e];
            let t = &ep.steps[k];
            let prev_adv = prev.as_ref().map(|(q_prev, v_prev)| {
                q_prev.forward_obs(&t.obs)[t.action] - v_prev.forward_obs_one(&t.obs)
            });
            let mut reader = TrailingReader { moving: &mut phi, live: &state.v };
            let (v_target, q_plus_target) = offpolicy_step_targets_src(
                ep,
                k,
                cfg.n_step,
                cfg.discount,
                &mut reader,
                &weights[b][e],
                prev_adv,
            );
            accumulate(&mut acc, state, &t.obs, t.action, v_target, q_plus_target, inv);
        }
        apply(state, &mut phi, &mut v_opt, &mut q_opt, acc);
    }
    state.iteration += 1;
    Ok(())
}
