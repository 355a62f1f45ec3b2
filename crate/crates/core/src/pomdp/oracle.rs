//! Exact finite-horizon dynamic programming on [`EnvModel`]s.
//!
//! Everything here runs backward induction over the hidden-state MDP, so
//! results are exact up to floating-point rounding — these functions are the
//! reference answers that the sampling learners get measured against.

use thiserror::Error;

use super::{EnvModel, Policy, TabularPolicy};

/// Value of each hidden state plus the start-weighted value `J`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub state_values: Vec<f64>,
    pub j: f64,
}

/// Evaluate a memoryless policy by backward induction over the model's
/// horizon. Terminal states have value 0 and absorb.
pub fn exact_policy_eval(model: &EnvModel, policy: &dyn Policy, discount: f64) -> Evaluation {
    let probs = cache_policy(model, policy);
    let mut values = vec![0.0; model.num_states];
    for _ in 0..model.horizon {
        values = sweep(model, &values, discount, |s, q| {
            probs[model.obs_of_state[s]].iter().zip(q).map(|(p, qa)| p * qa).sum()
        });
    }
    let j = start_weighted(model, &values);
    Evaluation { state_values: values, j }
}

/// Optimal value of the *hidden-state* MDP over the same horizon — an upper
/// bound for every observation-based policy.
pub fn value_iteration(model: &EnvModel, discount: f64) -> Evaluation {
    let mut values = vec![0.0; model.num_states];
    for _ in 0..model.horizon {
        values = sweep(model, &values, discount, |_, q| q.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    let j = start_weighted(model, &values);
    Evaluation { state_values: values, j }
}

fn sweep(
    model: &EnvModel,
    next: &[f64],
    discount: f64,
    combine: impl Fn(usize, &[f64]) -> f64,
) -> Vec<f64> {
    let mut out = vec![0.0; model.num_states];
    let mut q = vec![0.0; model.num_actions];
    for s in 0..model.num_states {
        if model.terminal[s] {
            continue;
        }
        for a in 0..model.num_actions {
            let future: f64 = model.transition[s][a].iter().map(|&(t, p)| p * next[t]).sum();
            q[a] = model.reward[s][a] + discount * future;
        }
        out[s] = combine(s, &q);
    }
    out
}

fn start_weighted(model: &EnvModel, values: &[f64]) -> f64 {
    model.initial_dist.iter().map(|&(s, p)| p * values[s]).sum()
}

fn cache_policy(model: &EnvModel, policy: &dyn Policy) -> Vec<Vec<f64>> {
    (0..model.num_observations).map(|o| policy.probs(&super::Observation::one_hot(o, model.num_observations))).collect()
}

/// Budgets for [`best_memoryless_policy`]. The grid resolution counts
/// points per probability axis (101 ⇒ steps of 0.01).
#[derive(Debug, Clone)]
pub struct SearchSpec {
    pub grid_resolution: usize,
    pub max_det_policies: u128,
    pub max_grid_points: u128,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec { grid_resolution: 101, max_det_policies: 4096, max_grid_points: 20_000 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error(
        "memoryless policy search too large: {det} deterministic policies and {grid} grid points \
         both exceed the budgets ({max_det} / {max_grid})"
    )]
    TooLarge { det: u128, grid: u128, max_det: u128, max_grid: u128 },
}

/// Outcome of the exhaustive memoryless search. `policy`/`value` is the best
/// found overall; the per-route results report what each search saw (absent
/// when that route exceeded its budget).
#[derive(Debug, Clone)]
pub struct MemorylessSearch {
    pub policy: TabularPolicy,
    pub value: f64,
    pub deterministic: Option<(TabularPolicy, f64)>,
    pub stochastic_grid: Option<(TabularPolicy, f64)>,
}

/// Search the memoryless policies of a model exhaustively: full enumeration
/// of deterministic policies (exact deterministic optimum) and a simplex
/// grid over per-observation action distributions (brackets the stochastic
/// optimum to grid granularity). Observations no state emits are skipped;
/// their rows stay uniform. Refuses with [`SearchError::TooLarge`] when both
/// routes exceed their budgets.
pub fn best_memoryless_policy(
    model: &EnvModel,
    discount: f64,
    spec: &SearchSpec,
) -> Result<MemorylessSearch, SearchError> {
    let realized = model.realized_observations();
    let a = model.num_actions;

    let det_count = (a as u128).checked_pow(realized.len() as u32).unwrap_or(u128::MAX);
    let points_per_obs = simplex_grid(a, spec.grid_resolution).len() as u128;
    let grid_count = points_per_obs.checked_pow(realized.len() as u32).unwrap_or(u128::MAX);

    let run_det = det_count <= spec.max_det_policies;
    let run_grid = grid_count <= spec.max_grid_points;
    if !run_det && !run_grid {
        return Err(SearchError::TooLarge {
            det: det_count,
            grid: grid_count,
            max_det: spec.max_det_policies,
            max_grid: spec.max_grid_points,
        });
    }

    let deterministic = run_det.then(|| {
        let mut choices = vec![0usize; realized.len()];
        let mut best: Option<(TabularPolicy, f64)> = None;
        loop {
            let mut policy = TabularPolicy::uniform(model.num_observations, a);
            for (i, &o) in realized.iter().enumerate() {
                policy.table[o] = one_hot_row(choices[i], a);
            }
            let j = exact_policy_eval(model, &policy, discount).j;
            if best.as_ref().is_none_or(|(_, bj)| j > *bj) {
                best = Some((policy, j));
            }
            if !increment_mixed_radix(&mut choices, a) {
                break;
            }
        }
        best.expect("at least one deterministic policy")
    });

    let stochastic_grid = run_grid.then(|| {
        let points = simplex_grid(a, spec.grid_resolution);
        let mut index = vec![0usize; realized.len()];
        let mut best: Option<(TabularPolicy, f64)> = None;
        loop {
            let mut policy = TabularPolicy::uniform(model.num_observations, a);
            for (i, &o) in realized.iter().enumerate() {
                policy.table[o] = points[index[i]].clone();
            }
            let j = exact_policy_eval(model, &policy, discount).j;
            if best.as_ref().is_none_or(|(_, bj)| j > *bj) {
                best = Some((policy, j));
            }
            if !increment_mixed_radix(&mut index, points.len()) {
                break;
            }
        }
        best.expect("at least one grid point")
    });

    let (policy, value) = [&deterministic, &stochastic_grid]
        .into_iter()
        .flatten()
        .max_by(|(_, x), (_, y)| x.total_cmp(y))
        .map(|(p, v)| (p.clone(), *v))
        .expect("at least one search route ran");

    Ok(MemorylessSearch { policy, value, deterministic, stochastic_grid })
}

fn one_hot_row(a: usize, num_actions: usize) -> Vec<f64> {
    let mut row = vec![0.0; num_actions];
    row[a] = 1.0;
    row
}

fn increment_mixed_radix(digits: &mut [usize], radix: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

/// All action distributions whose entries are multiples of
/// `1/(resolution-1)` (the standard lattice on the simplex).
fn simplex_grid(num_actions: usize, resolution: usize) -> Vec<Vec<f64>> {
    assert!(resolution >= 2);
    let ticks = resolution - 1;
    let mut out = Vec::new();
    let mut counts = vec![0usize; num_actions];
    fill_simplex(&mut out, &mut counts, 0, ticks, ticks);
    out
}

fn fill_simplex(out: &mut Vec<Vec<f64>>, counts: &mut [usize], pos: usize, left: usize, ticks: usize) {
    if pos == counts.len() - 1 {
        counts[pos] = left;
        out.push(counts.iter().map(|&c| c as f64 / ticks as f64).collect());
        return;
    }
    for c in 0..=left {
        counts[pos] = c;
        fill_simplex(out, counts, pos + 1, left - c, ticks);
    }
}
