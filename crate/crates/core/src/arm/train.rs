//! The outer collect-then-fit training loop.

use rand::Rng;

use crate::approx::{Arch, ParamSet};
use crate::pomdp::{exact_policy_eval, policy_entropy, Env, EnvModel, Policy};

use super::fit::{fit_iteration, fit_iteration_offpolicy, FitConfig};
use super::{collect_batch, ArmError, ArmState, ReplayMemory};

/// Replay settings for the off-policy variant.
#[derive(Debug, Clone, Copy)]
pub struct OffPolicyConfig {
    /// Importance-weight truncation.
    pub clip: f64,
    /// How many recent batches stay in memory.
    pub memory_batches: usize,
}

impl Default for OffPolicyConfig {
    fn default() -> Self {
        OffPolicyConfig { clip: 1.0, memory_batches: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct ArmTrainConfig {
    pub iterations: usize,
    /// Minimum environment steps collected per iteration.
    pub batch_size: usize,
    pub fit: FitConfig,
    pub arch: Arch,
    /// `Some` trains from replayed batches with importance correction;
    /// `None` fits each fresh batch alone.
    pub offpolicy: Option<OffPolicyConfig>,
}

/// One iteration's metrics.
#[derive(Debug, Clone)]
pub struct IterationRow {
    pub iteration: usize,
    /// Cumulative environment steps including this iteration's batch.
    pub env_steps: u64,
    /// Mean undiscounted return of the episodes collected this iteration.
    pub mean_return: f64,
    pub episode_count: usize,
    /// Exact start value of the collecting policy, when a model was supplied
    /// for evaluation (tabular observation spaces only).
    pub exact_j: Option<f64>,
    /// Largest |Q+ - V| over this batch's visited (observation, action)
    /// pairs, measured after the fit.
    pub max_abs_advantage: f64,
    /// Mean entropy of the collecting policy over this batch's steps.
    pub policy_entropy: f64,
}

#[derive(Debug)]
pub struct ArmRun {
    pub rows: Vec<IterationRow>,
    pub state: ArmState,
}

/// Train on `env` for the configured number of iterations.
///
/// `eval_model` enables the exact-value metric column; pass `None` when the
/// env's observations are not the model's (history stacking, or no model).
pub fn arm_train(
    env: &mut dyn Env,
    cfg: &ArmTrainConfig,
    eval_model: Option<&EnvModel>,
    rng: &mut impl Rng,
) -> Result<ArmRun, ArmError> {
    let input_dim = ParamSet::input_dim_for(cfg.arch, env.num_observations(), env.feature_dim());
    let mut state = ArmState::new(cfg.arch, input_dim, env.num_actions(), rng);
    let mut memory = cfg.offpolicy.map(|o| ReplayMemory::new(o.memory_batches));
    let mut rows = Vec::with_capacity(cfg.iterations);
    let mut env_steps = 0u64;

    for iteration in 1..=cfg.iterations {
        let batch = collect_batch(env, &state.policy(), cfg.batch_size, rng)?;
        env_steps += batch.total_steps as u64;

        // Metrics of the collecting policy and its batch.
        let mean_return =
            batch.episodes.iter().map(|e| e.total_return()).sum::<f64>() / batch.episodes.len() as f64;
        let episode_count = batch.episodes.len();
        let (exact_j, entropy) = {
            let policy = state.policy();
            let exact_j = eval_model.map(|m| exact_policy_eval(m, &policy, m.discount).j);
            let mut h = 0.0;
            for ep in &batch.episodes {
                for t in &ep.steps {
                    h += policy_entropy(&policy.probs(&t.obs));
                }
            }
            (exact_j, h / batch.total_steps as f64)
        };

        match (&mut memory, cfg.offpolicy) {
            (Some(memory), Some(off)) => {
                memory.push(batch.clone());
                fit_iteration_offpolicy(&mut state, memory, off.clip, &cfg.fit, rng)?;
            }
            _ => fit_iteration(&mut state, &batch, &cfg.fit, rng),
        }

        let mut max_abs_advantage: f64 = 0.0;
        for ep in &batch.episodes {
            for t in &ep.steps {
                let v = state.v.forward_obs_one(&t.obs);
                for q in state.q_plus.forward_obs(&t.obs) {
                    max_abs_advantage = max_abs_advantage.max((q - v).abs());
                }
            }
        }

        rows.push(IterationRow {
            iteration,
            env_steps,
            mean_return,
            episode_count,
            exact_j,
            max_abs_advantage,
            policy_entropy: entropy,
        });
    }

    Ok(ArmRun { rows, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::{aliased_two_state, best_memoryless_policy, ModelEnv, SearchSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(iterations: usize, offpolicy: Option<OffPolicyConfig>) -> ArmTrainConfig {
        ArmTrainConfig {
            iterations,
            batch_size: 400,
            fit: FitConfig { n_step: 5, minibatch: 32, grad_steps: 100, lr: 1e-2, tau: 0.01, discount: 0.9 },
            arch: Arch::Table,
            offpolicy,
        }
    }

    #[test]
    fn metrics_rows_are_complete_and_cumulative() {
        let model = aliased_two_state();
        let mut env = ModelEnv::new(model.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let run = arm_train(&mut env, &small_cfg(3, None), Some(&model), &mut rng).unwrap();
        assert_eq!(run.rows.len(), 3);
        assert_eq!(run.rows[0].iteration, 1);
        assert!(run.rows[0].env_steps >= 400);
        assert!(run.rows[1].env_steps > run.rows[0].env_steps);
        assert!(run.rows[2].env_steps > run.rows[1].env_steps);
        // First iteration collects with the uniform policy: full entropy,
        // and the exact value of the uniform policy.
        assert!((run.rows[0].policy_entropy - std::f64::consts::LN_2).abs() <= 1e-12);
        let uniform_j = run.rows[0].exact_j.unwrap();
        let best = best_memoryless_policy(&model, model.discount, &SearchSpec::default()).unwrap();
        assert!((uniform_j - best.value).abs() <= 1e-9, "uniform is optimal here");
        assert_eq!(run.state.iteration, 3);
    }

    #[test]
    fn training_stays_near_the_even_mixture_on_the_aliased_env() {
        // The environment punishes determinism: the uniform mixture is
        // optimal, and the advantage carry self-corrects any drift. After a
        // few iterations the deployed policy should still be close to even.
        let model = aliased_two_state();
        let mut env = ModelEnv::new(model.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let run = arm_train(&mut env, &small_cfg(8, None), Some(&model), &mut rng).unwrap();
        let last_j = run.rows.last().unwrap().exact_j.unwrap();
        let best = best_memoryless_policy(&model, model.discount, &SearchSpec::default()).unwrap();
        assert!(
            last_j >= 0.85 * best.value,
            "deployed value {last_j} fell far from the optimum {}",
            best.value
        );
    }

    #[test]
    fn offpolicy_training_tracks_the_even_mixture() {
        // On this exactly symmetric environment the true advantage gaps are
        // zero, so the clipped carries drift on sampling noise and one action
        // can fall out of the mixture for an iteration before the value head
        // drops and pulls it back in. The robust claims are that the deployed
        // policy reaches the optimum and spends most iterations near it, not
        // that the final iterate lands there.
        let model = aliased_two_state();
        let mut env = ModelEnv::new(model.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let run = arm_train(
            &mut env,
            &small_cfg(12, Some(OffPolicyConfig::default())),
            Some(&model),
            &mut rng,
        )
        .unwrap();
        let best = best_memoryless_policy(&model, model.discount, &SearchSpec::default()).unwrap();
        let js: Vec<f64> = run.rows.iter().map(|r| r.exact_j.unwrap()).collect();
        let peak = js.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(peak >= 0.95 * best.value, "never reached the optimum: peak {peak}");
        let good = js.iter().filter(|&&j| j >= 0.8 * best.value).count();
        assert!(good * 2 > js.len(), "mixed policy held only {good}/{} iterations", js.len());
    }

    #[test]
    fn same_seed_same_run() {
        let model = aliased_two_state();
        let cfg = small_cfg(2, None);
        let run_a = {
            let mut env = ModelEnv::new(model.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            arm_train(&mut env, &cfg, Some(&model), &mut rng).unwrap()
        };
        let run_b = {
            let mut env = ModelEnv::new(model.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            arm_train(&mut env, &cfg, Some(&model), &mut rng).unwrap()
        };
        for (a, b) in run_a.rows.iter().zip(&run_b.rows) {
            assert_eq!(a.mean_return, b.mean_return);
            assert_eq!(a.exact_j, b.exact_j);
            assert_eq!(a.max_abs_advantage, b.max_abs_advantage);
        }
        run_a.state.v.values.iter().zip(&run_b.state.v.values).for_each(|(x, y)| assert_eq!(x, y));
    }
}
