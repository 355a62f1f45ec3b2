//! Batch advantage actor-critic with an entropy bonus.
//!
//! The policy is a softmax over learned logits; the critic is a separate
//! value head regressed onto n-step returns. Each iteration collects a fresh
//! batch, freezes the critic as the return bootstrap, then takes minibatch
//! gradient steps on both heads with a combined global gradient-norm clip.
//! Unlike greedy value methods this keeps a real stochastic policy, so it is
//! the natural sanity baseline on aliased observations; unlike the clipped
//! advantage learner it carries nothing between iterations except the
//! parameters themselves.

use rand::Rng;

use crate::approx::{AdamState, Arch, GradEntry, ParamSet, Role};
use crate::arm::{collect_batch, n_step_return, ArmError, IterationRow};
use crate::pomdp::{
    exact_policy_eval, policy_entropy, Env, EnvModel, Observation, Policy, TabularPolicy,
};

#[derive(Debug, Clone)]
pub struct A2cConfig {
    pub iterations: usize,
    /// Minimum environment steps collected per iteration.
    pub batch_size: usize,
    pub n_step: usize,
    pub minibatch: usize,
    pub grad_steps: usize,
    pub lr: f64,
    /// Entropy bonus weight.
    pub beta: f64,
    /// Combined two-head gradient-norm clip.
    pub grad_clip: f64,
    pub discount: f64,
    pub arch: Arch,
}

impl Default for A2cConfig {
    fn default() -> Self {
        A2cConfig {
            iterations: 50,
            batch_size: 1024,
            n_step: 5,
            minibatch: 32,
            grad_steps: 256,
            lr: 1e-3,
            beta: 0.01,
            grad_clip: 0.5,
            discount: 0.99,
            arch: Arch::Table,
        }
    }
}

/// Softmax distribution over a logit head.
#[derive(Debug, Clone, Copy)]
pub struct SoftmaxPolicy<'a> {
    pub logits: &'a ParamSet,
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Policy for SoftmaxPolicy<'_> {
    fn probs(&self, obs: &Observation) -> Vec<f64> {
        softmax(&self.logits.forward_obs(obs))
    }
}

#[derive(Debug)]
pub struct A2cRun {
    pub rows: Vec<IterationRow>,
    pub logits: ParamSet,
    pub value: ParamSet,
}

/// Coalesce duplicate coordinates, measure the combined two-head L2 norm,
/// and scale both gradients down if it exceeds the clip.
fn clip_gradients(policy_grad: &mut Vec<GradEntry>, value_grad: &mut Vec<GradEntry>, clip: f64) {
    for grad in [&mut *policy_grad, &mut *value_grad] {
        grad.sort_unstable_by_key(|&(i, _)| i);
        let mut merged: Vec<GradEntry> = Vec::with_capacity(grad.len());
        for &(i, g) in grad.iter() {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += g,
                _ => merged.push((i, g)),
            }
        }
        *grad = merged;
    }
    let norm = policy_grad
        .iter()
        .chain(value_grad.iter())
        .map(|&(_, g)| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > clip {
        let scale = clip / norm;
        for (_, g) in policy_grad.iter_mut().chain(value_grad.iter_mut()) {
            *g *= scale;
        }
    }
}

/// One minibatch step on both heads. Returns are computed against the
/// iteration-start critic snapshot `phi`.
#[allow(clippy::too_many_arguments)]
fn minibatch_step(
    logits: &mut ParamSet,
    value: &mut ParamSet,
    phi: &ParamSet,
    policy_opt: &mut AdamState,
    value_opt: &mut AdamState,
    batch: &crate::arm::TrajectoryBatch,
    index: &[(usize, usize)],
    cfg: &A2cConfig,
    rng: &mut impl Rng,
) {
    let inv = 1.0 / cfg.minibatch as f64;
    let mut policy_grad: Vec<GradEntry> = Vec::new();
    let mut value_grad: Vec<GradEntry> = Vec::new();
    for _ in 0..cfg.minibatch {
        let &(e, k) = &index[rng.gen_range(0..index.len())];
        let ep = &batch.episodes[e];
        let t = &ep.steps[k];
        let g = n_step_return(ep, k, cfg.n_step, cfg.discount, phi);
        let baseline = phi.forward_obs_one(&t.obs);
        let advantage = g - baseline;

        // Policy head: minimize -log pi(a) * advantage - beta * entropy.
        let z = logits.forward_obs(&t.obs);
        let pi = softmax(&z);
        let entropy = policy_entropy(&pi);
        for (j, &pj) in pi.iter().enumerate() {
            let onehot = if j == t.action { 1.0 } else { 0.0 };
            let d_pg = (pj - onehot) * advantage;
            let d_entropy = if pj > 0.0 { pj * (pj.ln() + entropy) } else { 0.0 };
            let dz = (d_pg + cfg.beta * d_entropy) * inv;
            if dz != 0.0 {
                for (i, gr) in logits.grad_obs(&t.obs, j) {
                    policy_grad.push((i, dz * gr));
                }
            }
        }

        // Value head: squared error toward the same return.
        let dv = (value.forward_obs_one(&t.obs) - g) * inv;
        for (i, gr) in value.grad_obs(&t.obs, 0) {
            value_grad.push((i, dv * gr));
        }
    }
    clip_gradients(&mut policy_grad, &mut value_grad, cfg.grad_clip);
    policy_opt.step(&mut logits.values, &policy_grad);
    value_opt.step(&mut value.values, &value_grad);
}

/// Train on `env` for the configured number of iterations. `eval_model`
/// enables the exact-value column (tabular observation spaces only).
pub fn a2c_train(
    env: &mut dyn Env,
    cfg: &A2cConfig,
    eval_model: Option<&EnvModel>,
    rng: &mut impl Rng,
) -> Result<A2cRun, ArmError> {
    let input_dim = ParamSet::input_dim_for(cfg.arch, env.num_observations(), env.feature_dim());
    let mut logits = ParamSet::init(cfg.arch, Role::ActionValue, input_dim, env.num_actions(), rng);
    let mut value = ParamSet::init(cfg.arch, Role::StateValue, input_dim, 1, rng);
    let mut rows = Vec::with_capacity(cfg.iterations);
    let mut env_steps = 0u64;

    for iteration in 1..=cfg.iterations {
        let batch = {
            let policy = SoftmaxPolicy { logits: &logits };
            collect_batch(env, &policy, cfg.batch_size, rng)?
        };
        env_steps += batch.total_steps as u64;

        let (mean_return, episode_count, entropy, exact_j) = {
            let policy = SoftmaxPolicy { logits: &logits };
            let mean = batch.episodes.iter().map(|e| e.total_return()).sum::<f64>()
                / batch.episodes.len() as f64;
            let mut h = 0.0;
            for ep in &batch.episodes {
                for t in &ep.steps {
                    h += policy_entropy(&policy.probs(&t.obs));
                }
            }
            let exact_j = eval_model.map(|m| {
                let probed = TabularPolicy {
                    table: (0..m.num_observations)
                        .map(|o| policy.probs(&Observation::one_hot(o, m.num_observations)))
                        .collect(),
                };
                exact_policy_eval(m, &probed, m.discount).j
            });
            (mean, batch.episodes.len(), h / batch.total_steps as f64, exact_j)
        };

        let phi = value.clone();
        let mut policy_opt = AdamState::new(logits.values.len(), cfg.lr);
        let mut value_opt = AdamState::new(value.values.len(), cfg.lr);
        let index = batch.index();
        for _ in 0..cfg.grad_steps {
            minibatch_step(
                &mut logits,
                &mut value,
                &phi,
                &mut policy_opt,
                &mut value_opt,
                &batch,
                &index,
                cfg,
                rng,
            );
        }

        let mut max_abs_advantage: f64 = 0.0;
        for ep in &batch.episodes {
            for (k, t) in ep.steps.iter().enumerate() {
                let g = n_step_return(ep, k, cfg.n_step, cfg.discount, &value);
                max_abs_advantage =
                    max_abs_advantage.max((g - value.forward_obs_one(&t.obs)).abs());
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

    Ok(A2cRun { rows, logits, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::{Episode, TrajectoryBatch};
    use crate::pomdp::{aliased_two_state, best_memoryless_policy, ModelEnv, SearchSpec, Transition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_is_a_distribution_and_shift_invariant() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let q = softmax(&[1001.0, 1002.0, 1003.0]);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(p[2] > p[1] && p[1] > p[0]);
    }

    fn single_obs_batch(actions_rewards: &[(usize, f64)]) -> TrajectoryBatch {
        let mut batch = TrajectoryBatch::default();
        for &(a, r) in actions_rewards {
            let mut ep = Episode::default();
            ep.steps.push(Transition {
                obs: Observation::one_hot(0, 1),
                action: a,
                reward: r,
                next_obs: Observation::one_hot(0, 1),
                nonterminal: 0.0,
                behavior_prob: 0.5,
            });
            batch.episodes.push(ep);
            batch.total_steps += 1;
        }
        batch
    }

    #[test]
    fn zero_advantage_leaves_only_the_entropy_force() {
        // All returns are zero and the critic starts at zero, so the policy
        // gradient term vanishes and the entropy bonus alone should push the
        // planted asymmetric logits back toward uniform.
        let cfg = A2cConfig { minibatch: 8, lr: 0.05, beta: 0.05, ..A2cConfig::default() };
        let mut logits = ParamSet::zeros(Arch::Table, Role::ActionValue, 1, 2);
        logits.values.copy_from_slice(&[2.0, -2.0]);
        let mut value = ParamSet::zeros(Arch::Table, Role::StateValue, 1, 1);
        let phi = value.clone();
        let batch = single_obs_batch(&[(0, 0.0), (1, 0.0)]);
        let index = batch.index();
        let mut policy_opt = AdamState::new(2, cfg.lr);
        let mut value_opt = AdamState::new(1, cfg.lr);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gap_before = logits.values[0] - logits.values[1];
        for _ in 0..500 {
            minibatch_step(
                &mut logits, &mut value, &phi, &mut policy_opt, &mut value_opt, &batch, &index,
                &cfg, &mut rng,
            );
        }
        let gap_after = logits.values[0] - logits.values[1];
        assert!(gap_after < gap_before * 0.5, "entropy failed to even out: {gap_before} -> {gap_after}");
        assert_eq!(value.values[0], 0.0, "zero targets must leave the critic untouched");
    }

    #[test]
    fn strong_entropy_bonus_forces_a_near_uniform_policy() {
        let model = aliased_two_state();
        let mut env = ModelEnv::new(model.clone());
        let cfg = A2cConfig {
            iterations: 6,
            batch_size: 300,
            grad_steps: 75,
            beta: 10.0,
            discount: model.discount,
            ..A2cConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let run = a2c_train(&mut env, &cfg, Some(&model), &mut rng).unwrap();
        let probs = SoftmaxPolicy { logits: &run.logits }.probs(&Observation::one_hot(0, 1));
        assert!((probs[0] - 0.5).abs() < 0.02, "beta=10 should dominate: {probs:?}");
    }

    #[test]
    fn reaches_most_of_the_optimal_value_on_the_aliased_env() {
        // The softmax parameterization can express the even mixture, and the
        // entropy bonus stabilises it there; this should work on most seeds.
        let model = aliased_two_state();
        let best = best_memoryless_policy(&model, model.discount, &SearchSpec::default()).unwrap();
        let mut wins = 0;
        for seed in 0..5 {
            let mut env = ModelEnv::new(model.clone());
            let cfg = A2cConfig {
                iterations: 12,
                batch_size: 500,
                grad_steps: 125,
                discount: model.discount,
                ..A2cConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let run = a2c_train(&mut env, &cfg, Some(&model), &mut rng).unwrap();
            let j = run.rows.last().unwrap().exact_j.unwrap();
            if j >= 0.85 * best.value {
                wins += 1;
            }
        }
        assert!(wins >= 3, "only {wins}/5 seeds reached 85% of the optimum");
    }

    #[test]
    fn gradient_clip_rescales_to_the_requested_norm() {
        let mut pg = vec![(0usize, 3.0), (0usize, 1.0)]; // coalesces to 4.0
        let mut vg = vec![(1usize, 3.0)];
        clip_gradients(&mut pg, &mut vg, 0.5);
        assert_eq!(pg.len(), 1);
        let norm = (pg[0].1 * pg[0].1 + vg[0].1 * vg[0].1).sqrt();
        assert!((norm - 0.5).abs() <= 1e-12);
        // Direction preserved: 4:3 ratio.
        assert!((pg[0].1 / vg[0].1 - 4.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn small_gradients_pass_the_clip_untouched() {
        let mut pg = vec![(0usize, 0.1)];
        let mut vg = vec![(1usize, 0.2)];
        clip_gradients(&mut pg, &mut vg, 0.5);
        assert_eq!(pg[0].1, 0.1);
        assert_eq!(vg[0].1, 0.2);
    }
}
