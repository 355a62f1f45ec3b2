use rand::Rng;

use super::Observation;

/// A memoryless stochastic policy: observation in, action distribution out.
pub trait Policy {
    fn probs(&self, obs: &Observation) -> Vec<f64>;
}

/// Uniform over a fixed action count.
#[derive(Debug, Clone)]
pub struct UniformPolicy {
    pub num_actions: usize,
}

impl Policy for UniformPolicy {
    fn probs(&self, _obs: &Observation) -> Vec<f64> {
        vec![1.0 / self.num_actions as f64; self.num_actions]
    }
}

/// Explicit per-observation action distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    /// `table[obs_id][action]`.
    pub table: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn uniform(num_obs: usize, num_actions: usize) -> Self {
        TabularPolicy { table: vec![vec![1.0 / num_actions as f64; num_actions]; num_obs] }
    }

    /// Deterministic policy from a per-observation action choice.
    pub fn deterministic(choices: &[usize], num_actions: usize) -> Self {
        let table = choices
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; num_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        TabularPolicy { table }
    }
}

impl Policy for TabularPolicy {
    fn probs(&self, obs: &Observation) -> Vec<f64> {
        self.table[obs.id].clone()
    }
}

/// Sample an action index from a probability vector by inverse CDF.
pub fn sample_action(probs: &[f64], rng: &mut dyn rand::RngCore) -> usize {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return a;
        }
    }
    probs.len() - 1
}

/// Shannon entropy in nats; 0·ln 0 is taken as 0.
pub fn policy_entropy(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}
