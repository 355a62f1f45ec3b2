//! Tabular counterfactual-regret solvers for single-agent models.
//!
//! One iteration: compute, exactly, the value of forcing each action at each
//! observation while playing the current policy elsewhere
//! ([`counterfactual_values`]); add the action-vs-policy gaps to a running
//! regret table ([`cfr_update`], plain accumulation or the clipped-carry
//! variant); and read the next policy off the positive part of the table
//! ([`regret_matching`]). Because hidden states behind one observation are
//! pooled by the policy's own visitation frequencies, the solver works on
//! aliased models where greedy dynamic programming does not.

use crate::pomdp::{exact_policy_eval, EnvModel, Policy, TabularPolicy};

/// Which accumulation rule the regret table uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfrVariant {
    /// Plain running sum of regret increments.
    Cfr,
    /// Clipped carry: the previous total is floored at zero before each add,
    /// so old negative regret cannot mask a newly profitable action.
    CfrPlus,
}

/// Accumulated per-(observation, action) regret.
#[derive(Debug, Clone)]
pub struct RegretTable {
    /// `values[obs][action]`.
    pub values: Vec<Vec<f64>>,
    pub variant: CfrVariant,
}

impl RegretTable {
    pub fn zeros(num_obs: usize, num_actions: usize, variant: CfrVariant) -> Self {
        RegretTable { values: vec![vec![0.0; num_actions]; num_obs], variant }
    }

    /// Policy read off the table: regret matching per observation.
    pub fn policy(&self) -> TabularPolicy {
        TabularPolicy { table: self.values.iter().map(|row| regret_matching(row)).collect() }
    }
}

/// Exact action values under forced play at one observation.
#[derive(Debug, Clone)]
pub struct CounterfactualTables {
    /// `q[obs][action]`: expected return conditional on being at `obs`
    /// (hidden states weighted by the policy's own visitation), forcing
    /// `action` there now and on every future visit, following the policy
    /// elsewhere.
    pub q: Vec<Vec<f64>>,
    /// `v[obs] = Σ_a π(a|obs) q[obs][a]`.
    pub v: Vec<f64>,
    /// False for observations the policy never reaches; their `q` rows are
    /// zero and must not be folded into regrets.
    pub reached: Vec<bool>,
    /// Total (undiscounted) visitation mass behind each observation.
    pub mass: Vec<f64>,
}

/// Distribution proportional to the positive part of `values`; uniform when
/// nothing is positive. Invariant under scaling by any positive constant.
pub fn regret_matching(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().map(|&v| v.max(0.0)).sum();
    if total > 0.0 {
        values.iter().map(|&v| v.max(0.0) / total).collect()
    } else {
        vec![1.0 / values.len() as f64; values.len()]
    }
}

/// Per-observation maximum over actions of the accumulated regret, reported
/// without additional clipping.
pub fn immediate_cf_regret(table: &RegretTable) -> Vec<f64> {
    table
        .values
        .iter()
        .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Fold one iteration's counterfactual gaps into the regret table.
/// Unreached observations keep their previous regrets unchanged.
pub fn cfr_update(table: &mut RegretTable, cf: &CounterfactualTables) {
    for (o, row) in table.values.iter_mut().enumerate() {
        if !cf.reached[o] {
            continue;
        }
        for (a, r) in row.iter_mut().enumerate() {
            let increment = cf.q[o][a] - cf.v[o];
            *r = match table.variant {
                CfrVariant::Cfr => *r + increment,
                CfrVariant::CfrPlus => r.max(0.0) + increment,
            };
        }
    }
}

/// Exact counterfactual action values for `policy` on `model`.
///
/// The visitation occupancy d_t(state) is rolled forward under the policy
/// (stopping at terminal states and the horizon, no discounting — the same
/// weighting a uniform sample of logged transitions converges to); hidden
/// states are then pooled per observation. The forced-action continuation
/// values come from backward induction with the policy overridden at the
/// target observation.
pub fn counterfactual_values(model: &EnvModel, policy: &dyn Policy, discount: f64) -> CounterfactualTables {
    let num_obs = model.num_observations;
    let probs: Vec<Vec<f64>> = (0..num_obs)
        .map(|o| policy.probs(&crate::pomdp::Observation::one_hot(o, num_obs)))
        .collect();

    // Forward occupancy over non-terminal (state, time) pairs.
    let horizon = model.horizon;
    let mut occupancy = vec![vec![0.0; model.num_states]; horizon];
    for &(s, p) in &model.initial_dist {
        if !model.terminal[s] {
            occupancy[0][s] = p;
        }
    }
    for t in 1..horizon {
        let (prev, rest) = occupancy.split_at_mut(t);
        let prev = &prev[t - 1];
        let next = &mut rest[0];
        for s in 0..model.num_states {
            let d = prev[s];
            if d == 0.0 {
                continue;
            }
            let pi = &probs[model.obs_of_state[s]];
            for a in 0..model.num_actions {
                if pi[a] == 0.0 {
                    continue;
                }
                for &(s2, p) in &model.transition[s][a] {
                    if !model.terminal[s2] {
                        next[s2] += d * pi[a] * p;
                    }
                }
            }
        }
    }

    let mut mass = vec![0.0; num_obs];
    for row in &occupancy {
        for (s, &d) in row.iter().enumerate() {
            mass[model.obs_of_state[s]] += d;
        }
    }

    let mut q = vec![vec![0.0; model.num_actions]; num_obs];
    let reached: Vec<bool> = mass.iter().map(|&m| m > 0.0).collect();
    for o in 0..num_obs {
        if !reached[o] {
            continue;
        }
        for forced in 0..model.num_actions {
            // Backward induction with `forced` played at observation `o`.
            // After computing values for h steps remaining, fold in the
            // occupancy at time t = horizon - h.
            let mut values = vec![0.0; model.num_states];
            let mut numerator = 0.0;
            for h in 1..=horizon {
                let mut fresh = vec![0.0; model.num_states];
                for s in 0..model.num_states {
                    if model.terminal[s] {
                        continue;
                    }
                    let q_of = |a: usize| -> f64 {
                        let future: f64 = model.transition[s][a].iter().map(|&(t, p)| p * values[t]).sum();
                        model.reward[s][a] + discount * future
                    };
                    if model.obs_of_state[s] == o {
                        fresh[s] = q_of(forced);
                    } else {
                        fresh[s] = (0..model.num_actions).map(|a| probs[model.obs_of_state[s]][a] * q_of(a)).sum();
                    }
                }
                values = fresh;
                let t = horizon - h;
                for (s, &d) in occupancy[t].iter().enumerate() {
                    if d > 0.0 && model.obs_of_state[s] == o {
                        // At time t with h steps left, forcing the action now
                        // gives exactly the value just computed.
                        numerator += d * values[s];
                    }
                }
            }
            q[o][forced] = numerator / mass[o];
        }
    }

    let v = (0..num_obs)
        .map(|o| (0..model.num_actions).map(|a| probs[o][a] * q[o][a]).sum())
        .collect();

    CounterfactualTables { q, v, reached, mass }
}

/// One row of the solver's diagnostic trace.
#[derive(Debug, Clone)]
pub struct CfrRow {
    pub iteration: usize,
    /// Exact start-state value of the policy deployed this iteration.
    pub j: f64,
    /// Max over observations of the per-observation immediate regret,
    /// taken after this iteration's table update.
    pub max_immediate_regret: f64,
    /// Mean of the per-observation immediate regrets over reached
    /// observations.
    pub avg_regret: f64,
}

#[derive(Debug, Clone)]
pub struct CfrOutcome {
    /// The last deployed policy (iterate T).
    pub final_policy: TabularPolicy,
    /// Visitation-weighted average of the deployed policies.
    pub average_policy: TabularPolicy,
    pub trace: Vec<CfrRow>,
    /// Deployed policy tables, one per iteration.
    pub policy_trace: Vec<Vec<Vec<f64>>>,
    pub table: RegretTable,
}

/// Run `iterations` of the solver on a model. Iterate 1 is uniform (the
/// regret table starts at zero); each subsequent iterate is regret matching
/// on the updated table.
pub fn cfr_solve(model: &EnvModel, iterations: usize, variant: CfrVariant) -> CfrOutcome {
    let mut table = RegretTable::zeros(model.num_observations, model.num_actions, variant);
    let mut avg_num = vec![vec![0.0; model.num_actions]; model.num_observations];
    let mut avg_mass = vec![0.0; model.num_observations];
    let mut trace = Vec::with_capacity(iterations);
    let mut policy_trace = Vec::with_capacity(iterations);
    let mut policy = table.policy();

    for iteration in 1..=iterations {
        let cf = counterfactual_values(model, &policy, model.discount);
        let j = exact_policy_eval(model, &policy, model.discount).j;
        for o in 0..model.num_observations {
            if cf.reached[o] {
                avg_mass[o] += cf.mass[o];
                for a in 0..model.num_actions {
                    avg_num[o][a] += cf.mass[o] * policy.table[o][a];
                }
            }
        }
        cfr_update(&mut table, &cf);

        let per_obs = immediate_cf_regret(&table);
        let reached_regrets: Vec<f64> =
            per_obs.iter().zip(&cf.reached).filter(|(_, &r)| r).map(|(&x, _)| x).collect();
        let max_immediate_regret = reached_regrets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let avg_regret = reached_regrets.iter().sum::<f64>() / reached_regrets.len().max(1) as f64;
        trace.push(CfrRow { iteration, j, max_immediate_regret, avg_regret });
        policy_trace.push(policy.table.clone());

        if iteration < iterations {
            policy = table.policy();
        }
    }

    let average_policy = TabularPolicy {
        table: (0..model.num_observations)
            .map(|o| {
                if avg_mass[o] > 0.0 {
                    avg_num[o].iter().map(|&x| x / avg_mass[o]).collect()
                } else {
                    vec![1.0 / model.num_actions as f64; model.num_actions]
                }
            })
            .collect(),
    };

    CfrOutcome { final_policy: policy, average_policy, trace, policy_trace, table }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::{aliased_two_state, grid_maze_3x3, value_iteration, UniformPolicy};
    use proptest::prelude::*;

    #[test]
    fn regret_matching_keeps_only_positive_mass() {
        assert_eq!(regret_matching(&[-1.0, 2.0]), vec![0.0, 1.0]);
        assert_eq!(regret_matching(&[1.0, 1.0, 2.0]), vec![0.25, 0.25, 0.5]);
    }

    #[test]
    fn regret_matching_falls_back_to_uniform() {
        assert_eq!(regret_matching(&[-3.0, 0.0, -0.5]), vec![1.0 / 3.0; 3]);
        assert_eq!(regret_matching(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn regret_matching_always_returns_a_distribution(values in prop::collection::vec(-1e9f64..1e9, 2..8)) {
            let p = regret_matching(&values);
            prop_assert_eq!(p.len(), values.len());
            for &x in &p {
                prop_assert!(x >= 0.0 && x <= 1.0);
            }
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn regret_matching_is_scale_invariant(values in prop::collection::vec(-100.0f64..100.0, 2..8), scale in 1e-3f64..1e3) {
            let base = regret_matching(&values);
            let scaled = regret_matching(&values.iter().map(|&v| v * scale).collect::<Vec<_>>());
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn update_rules_differ_exactly_on_negative_carry() {
        let cf = CounterfactualTables {
            q: vec![vec![2.0, 0.0]],
            v: vec![0.0],
            reached: vec![true],
            mass: vec![1.0],
        };
        let mut plain = RegretTable { values: vec![vec![-1.0, 0.0]], variant: CfrVariant::Cfr };
        let mut plus = RegretTable { values: vec![vec![-1.0, 0.0]], variant: CfrVariant::CfrPlus };
        cfr_update(&mut plain, &cf);
        cfr_update(&mut plus, &cf);
        assert_eq!(plain.values[0][0], 1.0); // -1 + 2
        assert_eq!(plus.values[0][0], 2.0); // max(0,-1) + 2
    }

    #[test]
    fn variants_agree_while_regrets_stay_nonnegative() {
        let model = grid_maze_3x3();
        let a = cfr_solve(&model, 2, CfrVariant::Cfr);
        let b = cfr_solve(&model, 2, CfrVariant::CfrPlus);
        // From a zero table the first update is identical under both rules,
        // so the second iterate must match exactly.
        let first_nonneg = a.policy_trace[1]
            .iter()
            .zip(&b.policy_trace[1])
            .all(|(x, y)| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= 1e-15));
        assert!(first_nonneg);
    }

    #[test]
    fn symmetric_aliased_actions_have_equal_counterfactual_values() {
        let model = aliased_two_state();
        let cf = counterfactual_values(&model, &UniformPolicy { num_actions: 2 }, model.discount);
        assert!(cf.reached[0]);
        assert_eq!(cf.q[0][0], cf.q[0][1]);
        assert!((cf.v[0] - cf.q[0][0]).abs() <= 1e-12);
        // Undiscounted visitation of the only observation is one per step.
        assert!((cf.mass[0] - model.horizon as f64).abs() <= 1e-9);
    }

    #[test]
    fn v_is_the_policy_mixture_of_q() {
        let model = grid_maze_3x3();
        let policy = TabularPolicy {
            table: (0..16).map(|o| regret_matching(&[o as f64, 1.0, 2.0, -1.0])).collect(),
        };
        let cf = counterfactual_values(&model, &policy, model.discount);
        for o in 0..16 {
            let mix: f64 = (0..4).map(|a| policy.table[o][a] * cf.q[o][a]).sum();
            assert!((cf.v[o] - mix).abs() <= 1e-12);
        }
    }

    #[test]
    fn unreached_observations_are_flagged_and_zero() {
        // Three states: 0 -> 1 forever; state 2 unreachable, own observation.
        let model = EnvModel {
            num_states: 3,
            num_actions: 2,
            num_observations: 3,
            transition: vec![
                vec![vec![(1, 1.0)], vec![(1, 1.0)]],
                vec![vec![(1, 1.0)], vec![(1, 1.0)]],
                vec![vec![(2, 1.0)], vec![(2, 1.0)]],
            ],
            reward: vec![vec![0.0; 2]; 3],
            obs_of_state: vec![0, 1, 2],
            initial_dist: vec![(0, 1.0)],
            terminal: vec![false; 3],
            discount: 0.9,
            horizon: 10,
        };
        let cf = counterfactual_values(&model, &UniformPolicy { num_actions: 2 }, 0.9);
        assert!(!cf.reached[2]);
        assert_eq!(cf.q[2], vec![0.0, 0.0]);
        assert!(cf.reached[0] && cf.reached[1]);

        // Frozen rows: updates must not touch the unreached observation.
        let mut table = RegretTable::zeros(3, 2, CfrVariant::CfrPlus);
        table.values[2] = vec![0.25, -0.5];
        cfr_update(&mut table, &cf);
        assert_eq!(table.values[2], vec![0.25, -0.5]);
    }

    #[test]
    fn aliased_env_is_a_fixed_point_at_uniform() {
        // The environment is exactly symmetric, so the solver starts at the
        // optimum and never accumulates regret: every iterate stays uniform
        // and every diagnostic stays at zero.
        let model = aliased_two_state();
        let out = cfr_solve(&model, 100, CfrVariant::CfrPlus);
        for row in &out.trace {
            assert_eq!(row.max_immediate_regret, 0.0);
        }
        for p in &out.policy_trace {
            assert_eq!(p[0], vec![0.5, 0.5]);
        }
        assert_eq!(out.final_policy.table[0], vec![0.5, 0.5]);
        assert_eq!(out.average_policy.table[0], vec![0.5, 0.5]);
    }

    #[test]
    fn long_runs_keep_the_even_mixture_on_the_aliased_env() {
        let model = aliased_two_state();
        let out = cfr_solve(&model, 10_000, CfrVariant::CfrPlus);
        let p = &out.final_policy.table[0];
        assert!((p[0] - 0.5).abs() <= 0.05 && (p[1] - 0.5).abs() <= 0.05);
    }

    #[test]
    fn greedy_final_iterate_matches_value_iteration_when_fully_observable() {
        // Identity observation map on the small maze.
        let mut model = grid_maze_3x3();
        model.num_observations = model.num_states;
        model.obs_of_state = (0..model.num_states).collect();
        let out = cfr_solve(&model, 300, CfrVariant::CfrPlus);
        let greedy = TabularPolicy::deterministic(
            &out.final_policy
                .table
                .iter()
                .map(|row| row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0)
                .collect::<Vec<_>>(),
            model.num_actions,
        );
        let j = exact_policy_eval(&model, &greedy, model.discount).j;
        let opt = value_iteration(&model, model.discount).j;
        assert!((j - opt).abs() <= 1e-3, "greedy {j} vs optimal {opt}");
    }

    #[test]
    fn immediate_regret_ratio_decays_on_the_small_maze() {
        // The clipped-carry table stabilizes once the policy settles, so the
        // per-iteration ratio max_immediate_regret / T shrinks like 1/T:
        // quadrupling T quarters it. Assert the looser halving bound.
        let model = grid_maze_3x3();
        let out = cfr_solve(&model, 1024, CfrVariant::CfrPlus);
        let at = |t: usize| out.trace[t - 1].max_immediate_regret;
        assert!(at(1024) / 1024.0 <= 0.55 * (at(256) / 256.0));
        assert!(at(1024) <= 1.05 * at(256));
        assert!(at(1024) > 0.0, "regret never accumulated at all");
    }

    #[test]
    fn cumulative_mean_gap_shrinks_beyond_burn_in() {
        let model = grid_maze_3x3();
        let out = cfr_solve(&model, 512, CfrVariant::CfrPlus);
        let j_star = crate::pomdp::oracle::best_memoryless_policy(
            &model,
            model.discount,
            &crate::pomdp::oracle::SearchSpec::default(),
        )
        .unwrap()
        .value;
        let mut cumulative = 0.0;
        let mut means = Vec::new();
        for row in &out.trace {
            cumulative += j_star - row.j;
            means.push(cumulative / row.iteration as f64);
        }
        for t in 16..means.len() - 1 {
            assert!(
                means[t + 1] <= means[t] + 1e-9,
                "mean gap rose at iteration {}: {} -> {}",
                t + 1,
                means[t],
                means[t + 1]
            );
        }
    }
}
