//! Exact tabular fitting: the sampled regression replaced by direct
//! assignment of its population targets.
//!
//! With a lookup table per head and exact per-observation action values, the
//! least-squares fit has a closed form: set `V(o)` to the policy-mixed value
//! and `Q+(o, a)` to the clipped carried advantage plus the fresh action
//! value, on every observation the policy actually reaches. Unreached
//! observations keep their old parameters, mirroring how the sampled fit
//! never receives data for them. The resulting iterates coincide with the
//! clipped-carry regret solver, which is the point: the two code paths share
//! only the final regret-matching step, so agreement checks the whole
//! pipeline's algebra.

use crate::approx::{Arch, ParamSet, Role};
use crate::cfr::counterfactual_values;
use crate::pomdp::{exact_policy_eval, EnvModel, Policy, TabularPolicy};

use super::{ArmPolicy, ArmState};

/// Trace of an exact run.
#[derive(Debug, Clone)]
pub struct ExactArmRun {
    pub state: ArmState,
    /// Deployed policy tables, one per iteration (first entry is uniform).
    pub policy_trace: Vec<Vec<Vec<f64>>>,
    /// Exact start value of each deployed policy.
    pub j_trace: Vec<f64>,
}

/// Run `iterations` exact collect-and-assign passes on a model.
pub fn arm_train_exact(model: &EnvModel, iterations: usize) -> ExactArmRun {
    let num_obs = model.num_observations;
    let num_actions = model.num_actions;
    let mut state = ArmState {
        v: ParamSet::zeros(Arch::Table, Role::StateValue, num_obs, 1),
        q_plus: ParamSet::zeros(Arch::Table, Role::ActionValue, num_obs, num_actions),
        iteration: 0,
    };
    let mut policy_trace = Vec::with_capacity(iterations);
    let mut j_trace = Vec::with_capacity(iterations);

    for _ in 0..iterations {
        let deployed: TabularPolicy = {
            let policy = state.policy();
            TabularPolicy {
                table: (0..num_obs)
                    .map(|o| policy.probs(&crate::pomdp::Observation::one_hot(o, num_obs)))
                    .collect(),
            }
        };
        policy_trace.push(deployed.table.clone());
        j_trace.push(exact_policy_eval(model, &deployed, model.discount).j);

        let cf = counterfactual_values(model, &deployed, model.discount);
        let first = state.iteration == 0;
        for o in 0..num_obs {
            if !cf.reached[o] {
                continue;
            }
            let carried: Vec<f64> = (0..num_actions)
                .map(|a| {
                    if first {
                        0.0
                    } else {
                        (state.q_plus.values[o * num_actions + a] - state.v.values[o]).max(0.0)
                    }
                })
                .collect();
            state.v.values[o] = cf.v[o];
            for a in 0..num_actions {
                state.q_plus.values[o * num_actions + a] = carried[a] + cf.q[o][a];
            }
        }
        state.iteration += 1;
    }

    ExactArmRun { state, policy_trace, j_trace }
}

/// The policy the exact state currently deploys (uniform before any pass).
pub fn deployed_policy(state: &ArmState, num_obs: usize) -> TabularPolicy {
    let policy: ArmPolicy<'_> = state.policy();
    TabularPolicy {
        table: (0..num_obs)
            .map(|o| policy.probs(&crate::pomdp::Observation::one_hot(o, num_obs)))
            .collect(),
    }
}
